// Copyright 2026 The VarMix Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <CLI11.hpp>
#include <Eigen/Core>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <set>

#include "varmix/attacks/attacks.hpp"
#include "varmix/cli/experiment.hpp"
#include "varmix/core/errors.hpp"
#include "varmix/data/loaders.hpp"
#include "varmix/inference/inference.hpp"
#include "varmix/metrics/metrics.hpp"
#include "varmix/model/gradients.hpp"
#include "varmix/model/layers.hpp"
#include "varmix/training/training.hpp"
#include "varmix/vae/mmd.hpp"
#include "varmix/vae/vae.hpp"
#include "varmix/vicinal/vicinal.hpp"

namespace varmix {
namespace {

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Settings {
  std::filesystem::path mnist_config;
  std::filesystem::path cifar_config;
  std::uint64_t seed = 0;
  int cifar_seeds = 3;
};

template <typename Scalar>
LossFn<Scalar> ce() {
  return [](const Matrix<Scalar>& z, const Matrix<Scalar>& t) { return cross_entropy(z, t); };
}

Dataset uniform_dataset(Index n, TensorShape shape, int classes, std::uint64_t seed) {
  Rng rng(seed);
  Matrix<float> images = uniform_matrix<float>(rng, n, shape.size(), 0.0f, 1.0f);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = static_cast<int>(i % classes);
  return Dataset(std::move(images), std::move(labels), shape, classes, Split::kTrain);
}

Dataset first_rows(const Dataset& d, Index n) {
  std::vector<Index> idx(static_cast<std::size_t>(std::min(n, d.size())));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<Index>(i);
  return d.subset(idx);
}

// Ball and range contracts of every attack on randomly drawn models, inputs and budgets.
Outcome attack_invariants(const Settings& s) {
  struct Setting {
    TensorShape shape;
    std::unique_ptr<Dataset> pool;
    std::unique_ptr<ClassPools> pools;
    std::unique_ptr<IdentityCodec<float>> identity;
  };
  std::deque<Setting> settings;
  for (TensorShape shape : {TensorShape{1, 8, 8}, TensorShape{1, 12, 12}, TensorShape{3, 8, 8}}) {
    Setting& st = settings.emplace_back();
    st.shape = shape;
    st.pool = std::make_unique<Dataset>(uniform_dataset(40, shape, 10, derive_seed(s.seed, "pool")));
    st.pools = std::make_unique<ClassPools>(*st.pool);
    st.identity = std::make_unique<IdentityCodec<float>>(shape);
  }
  VaeConfig vc;
  vc.image_shape = {1, 8, 8};
  vc.latent_dim = 4;
  vc.hidden = 24;
  vc.epochs = 1;
  vc.batch_size = 20;
  const Vae<float> vae = train_vae<float>(*settings.front().pool, vc);

  const char* names[] = {"fgsm", "pgd", "pgd-targeted", "spsa", "adaptive-varmi"};
  constexpr int kTriples = 1000;
  std::array<int, 5> violations{};
  std::array<int, 5> zero_mismatch{};
  int zero_budget = 0;
  double worst = 0;
  Rng rng(derive_seed(s.seed, "attack-fuzz"));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < kTriples; ++trial) {
    const Setting& st = settings[static_cast<std::size_t>(trial % 3)];
    ModelConfig mc;
    mc.input_shape = st.shape;
    mc.seed = derive_seed(s.seed, static_cast<std::uint64_t>(trial));
    if (st.shape.channels == 3 && trial % 5 == 2) {
      mc.architecture = Architecture::kThinResnet;
      mc.width = 0.125;
      mc.stage_blocks = {1, 1, 1, 1};
    } else {
      mc.width = u(rng) < 0.5 ? 0.25 : 0.5;
    }
    const Model<float> model = build_model<float>(mc);
    const Index n = 1 + static_cast<Index>(rng() % 4);
    Matrix<float> x = uniform_matrix<float>(rng, n, st.shape.size(), 0.0f, 1.0f);
    if (trial % 4 == 1) x = x.array().round().matrix();
    std::vector<int> y(static_cast<std::size_t>(n));
    std::vector<int> target(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < y.size(); ++i) {
      y[i] = static_cast<int>(rng() % 10);
      target[i] = (y[i] + 1 + static_cast<int>(rng() % 9)) % 10;
    }
    AttackBudget b;
    b.epsilon = trial % 10 == 0 ? 0.0 : 0.3 * u(rng);
    b.alpha = 0.005 + 0.2 * u(rng);
    b.steps = 1 + static_cast<int>(rng() % 5);
    const bool random_start = trial % 2 == 0;
    const std::uint64_t attack_seed = rng();
    const LatentCodec<float>& codec =
        (trial % 3 == 0 && trial % 2 == 1) ? static_cast<const LatentCodec<float>&>(vae) : *st.identity;
    const AdaptiveConfig ac{1 + static_cast<Index>(rng() % 3), u(rng)};
    const Matrix<float> outs[] = {
        fgsm(model, x, y, b.epsilon),
        pgd(model, x, y, b, attack_seed, random_start),
        pgd_targeted(model, x, target, b, attack_seed, random_start),
        spsa(model, x, y, b, SpsaConfig{8, 0.01}, attack_seed),
        adaptive_pgd_varmi(model, codec, x, y, b, ac, *st.pools, attack_seed),
    };
    zero_budget += b.epsilon == 0;
    for (std::size_t a = 0; a < 5; ++a) {
      const Matrix<float>& adv = outs[a];
      const double excess = (adv - x).cwiseAbs().maxCoeff() - b.epsilon;
      worst = std::max(worst, excess);
      if (excess > 1e-6 || adv.minCoeff() < 0.0f || adv.maxCoeff() > 1.0f) ++violations[a];
      if (b.epsilon == 0 && !(adv == x)) ++zero_mismatch[a];
    }
  }
  Outcome o{true, fmt("%d triples per attack (%d with eps=0), max ||x_adv-x||-eps %.2e", kTriples, zero_budget, worst)};
  for (std::size_t a = 0; a < 5; ++a) {
    if (violations[a] > 0 || zero_mismatch[a] > 0) {
      o.pass = false;
      o.detail += fmt("; %s: %d out of ball or range, %d eps=0 changed", names[a], violations[a], zero_mismatch[a]);
    }
  }
  return o;
}

template <typename Scalar>
std::vector<Index> composition_pattern(const Model<Scalar>& model, const Vae<Scalar>& vae, const Matrix<Scalar>& x) {
  Tape<Scalar> te;
  Tape<Scalar> td;
  Tape<Scalar> tm;
  const Matrix<Scalar> mu = vae.encode(x, Mode::kEval, &te).leftCols(vae.latent_dim());
  const Matrix<Scalar> decoded = vae.decode(mu, Mode::kEval, &td);
  model.net().forward(decoded, Mode::kEval, &tm);
  std::vector<Index> p = vae.encoder().activation_pattern(te);
  for (const auto& t : {&td}) {
    const std::vector<Index> q = vae.decoder().activation_pattern(*t);
    p.insert(p.end(), q.begin(), q.end());
  }
  const std::vector<Index> q = model.net().activation_pattern(tm);
  p.insert(p.end(), q.begin(), q.end());
  return p;
}

template <typename Scalar>
std::vector<Index> vae_pattern(const Vae<Scalar>& vae, const Matrix<Scalar>& x, const VaeNoise<Scalar>& noise) {
  const Index d = vae.latent_dim();
  Tape<Scalar> te;
  Tape<Scalar> td;
  const Matrix<Scalar> enc = vae.encode(x, Mode::kTrain, &te);
  const Matrix<Scalar> z =
      enc.leftCols(d) + ((enc.rightCols(d).array() * Scalar(0.5)).exp() * noise.eps.array()).matrix();
  vae.decode(z, Mode::kTrain, &td);
  std::vector<Index> p = vae.encoder().activation_pattern(te);
  const std::vector<Index> q = vae.decoder().activation_pattern(td);
  p.insert(p.end(), q.begin(), q.end());
  return p;
}

template <typename Scalar>
Matrix<Scalar> as_matrix(const Vector<Scalar>& v, Index rows, Index cols) {
  return Eigen::Map<const Matrix<Scalar>>(v.data(), rows, cols);
}

template <typename Scalar>
Vector<Scalar> as_vector(const Matrix<Scalar>& m) {
  return Eigen::Map<const Vector<Scalar>>(m.data(), m.size());
}

// Input and parameter gradient of the VAE loss against central differences.
template <typename Scalar>
double vae_loss_error(const Vae<Scalar>& vae, const Matrix<Scalar>& x, double h, std::uint64_t seed) {
  Rng rng(seed);
  const VaeNoise<Scalar> noise = draw_vae_noise<Scalar>(rng, x.rows(), vae.latent_dim());
  const double gamma = 0.7;
  VaeGradients<Scalar> g;
  vae_loss_and_grad(vae, x, noise, gamma, g, true);
  FiniteDiffOptions opt;
  opt.h = h;
  opt.probes = 12;
  opt.seed = seed;
  auto f_in = [&](const Vector<Scalar>& v) { return vae_loss(vae, as_matrix(v, x.rows(), x.cols()), noise, gamma).value; };
  auto same_in = [&](const Vector<Scalar>& a, const Vector<Scalar>& b) {
    return vae_pattern(vae, as_matrix(a, x.rows(), x.cols()), noise) ==
           vae_pattern(vae, as_matrix(b, x.rows(), x.cols()), noise);
  };
  const double input_error = finite_diff_check<Scalar>(f_in, as_vector(x), as_vector(g.input), opt, same_in);

  Vae<Scalar> probe = vae.template cast<Scalar>();
  const Index ne = vae.encoder().params().size();
  Vector<Scalar> at(ne + vae.decoder().params().size());
  at << vae.encoder().params(), vae.decoder().params();
  Vector<Scalar> analytic(at.size());
  analytic << g.encoder, g.decoder;
  auto f_w = [&](const Vector<Scalar>& w) {
    probe.encoder().params() = w.head(ne);
    probe.decoder().params() = w.tail(w.size() - ne);
    return vae_loss(probe, x, noise, gamma).value;
  };
  auto same_w = [&](const Vector<Scalar>& a, const Vector<Scalar>& b) {
    f_w(a);
    const std::vector<Index> pa = vae_pattern(probe, x, noise);
    f_w(b);
    return pa == vae_pattern(probe, x, noise);
  };
  return std::max(input_error, finite_diff_check<Scalar>(f_w, at, analytic, opt, same_w));
}

// Adaptive-attack composition CE(F(decode(encode_mean(x)))) at lambda_MI = 1 with one partner.
template <typename Scalar>
double composition_error(const Model<Scalar>& model, const Vae<Scalar>& vae, const Matrix<Scalar>& x,
                         const std::vector<int>& y, const Matrix<Scalar>& partner, double h, std::uint64_t seed) {
  const Matrix<Scalar> g = varmi_composition_grad(model, vae, x, y, 1.0, {partner});
  auto f = [&](const Vector<Scalar>& v) {
    return varmi_composition_loss(model, vae, as_matrix(v, x.rows(), x.cols()), y, 1.0, partner);
  };
  auto same = [&](const Vector<Scalar>& a, const Vector<Scalar>& b) {
    return composition_pattern(model, vae, as_matrix(a, x.rows(), x.cols())) ==
           composition_pattern(model, vae, as_matrix(b, x.rows(), x.cols()));
  };
  FiniteDiffOptions opt;
  opt.h = h;
  opt.probes = 12;
  opt.seed = seed;
  return finite_diff_check<Scalar>(f, as_vector(x), as_vector(g), opt, same);
}

// conv -> sigmoid -> linear -> sigmoid -> linear: a classifier without kinks.
Model<double> smooth_toy(std::uint64_t seed) {
  using Block = Network<double>::Block;
  TensorShape s{1, 8, 8};
  std::vector<Block> blocks(1);
  auto push = [&](LayerPtr<double> l) {
    s = l->output_shape();
    blocks[0].push_back(std::move(l));
  };
  push(make_conv2d<double>(s, {4, 3, 1, 1, true}));
  push(make_sigmoid<double>(s));
  push(make_linear<double>(s, 16));
  push(make_sigmoid<double>(s));
  push(make_linear<double>(s, 10));
  Network<double> net({1, 8, 8}, std::move(blocks));
  net.initialize(seed);
  ModelConfig mc;
  mc.input_shape = {1, 8, 8};
  return Model<double>(mc, std::move(net));
}

Outcome gradient_correctness(const Settings& s) {
  const ExperimentConfig cfg = load_config(s.mnist_config);
  const LoadedData data = load_data(cfg.dataset, s.seed);
  const std::vector<Index> rows{0, 1, 2};
  const Matrix<float> x = data.test.gather<float>(rows);
  const std::vector<int> y = data.test.gather_labels(rows);
  const Matrix<float> t = one_hot<float>(y, 10);
  std::vector<std::pair<std::string, double>> f32;
  std::vector<std::pair<std::string, double>> f64;

  const double h32 = 1e-2;
  const double h64 = 1e-5;
  FiniteDiffOptions o;
  o.h = h32;
  o.probes = 12;
  o.seed = derive_seed(s.seed, "fd");
  ModelConfig mc = cfg.model;
  mc.seed = derive_seed(s.seed, "fd-model");
  const Model<float> cnn = build_model<float>(mc);
  f32.emplace_back("ce/small_cnn/input", finite_diff_check(cnn, ce<float>(), x, t, o, GradTarget::kInput));
  f32.emplace_back("ce/small_cnn/params", finite_diff_check(cnn, ce<float>(), x, t, o, GradTarget::kParams));
  ModelConfig rc;
  rc.architecture = Architecture::kThinResnet;
  rc.width = 0.125;
  rc.stage_blocks = {1, 1, 1, 1};
  rc.input_shape = {3, 8, 8};
  rc.seed = mc.seed;
  const Model<float> resnet = build_model<float>(rc);
  Rng rng(derive_seed(s.seed, "fd-resnet"));
  const Matrix<float> xr = uniform_matrix<float>(rng, 2, 192, 0.0f, 1.0f);
  const Matrix<float> tr = one_hot<float>({4, 7}, 10);
  f32.emplace_back("ce/thin_resnet/input", finite_diff_check(resnet, ce<float>(), xr, tr, o, GradTarget::kInput));
  f32.emplace_back("ce/thin_resnet/params", finite_diff_check(resnet, ce<float>(), xr, tr, o, GradTarget::kParams));

  const Model<double> toy = smooth_toy(derive_seed(s.seed, "fd-toy"));
  const Matrix<double> xt = uniform_matrix<double>(rng, 3, 64, 0.0, 1.0);
  const Matrix<double> tt = one_hot<double>({1, 5, 9}, 10);
  FiniteDiffOptions o64 = o;
  o64.h = h64;
  f64.emplace_back("ce/smooth_toy/input", finite_diff_check(toy, ce<double>(), xt, tt, o64, GradTarget::kInput));
  f64.emplace_back("ce/smooth_toy/params", finite_diff_check(toy, ce<double>(), xt, tt, o64, GradTarget::kParams));

  VaeConfig vc = *cfg.vae;
  vc.hidden = 64;
  vc.latent_dim = 8;
  vc.epochs = 1;
  vc.seed = derive_seed(s.seed, "fd-vae");
  const Vae<float> vae = train_vae<float>(first_rows(data.train, 500), vc);
  const Vae<double> vae64 = vae.cast<double>();
  const Model<double> cnn64 = cnn.cast<double>();
  const Matrix<float> partner = data.test.gather<float>(std::vector<Index>{3, 4, 5});
  const std::uint64_t fd_seed = derive_seed(s.seed, "fd-probes");
  f32.emplace_back("vae_loss", vae_loss_error(vae, x, h32, fd_seed));
  f64.emplace_back("vae_loss", vae_loss_error(vae64, Matrix<double>(x.cast<double>()), h64, fd_seed));
  f32.emplace_back("adaptive_composition", composition_error(cnn, vae, x, y, partner, h32, fd_seed));
  f64.emplace_back("adaptive_composition", composition_error(cnn64, vae64, Matrix<double>(x.cast<double>()), y,
                                                             Matrix<double>(partner.cast<double>()), h64, fd_seed));

  Outcome out{true, ""};
  for (const auto& [name, err] : f32) {
    out.pass = out.pass && err < 1e-2;
    out.detail += fmt("%s%s f32 %.1e", out.detail.empty() ? "" : ", ", name.c_str(), err);
  }
  for (const auto& [name, err] : f64) {
    out.pass = out.pass && err < 1e-5;
    out.detail += fmt(", %s f64 %.1e", name.c_str(), err);
  }
  return out;
}

double naive_mmd(const Matrix<double>& x, const Matrix<double>& y, const RbfKernel& kernel) {
  auto k = [&](const auto& a, const auto& b) {
    double sum = 0;
    const double d2 = (a - b).squaredNorm();
    for (double sigma : kernel.sigmas) sum += std::exp(-d2 / (2 * sigma * sigma));
    return sum;
  };
  double xx = 0;
  double yy = 0;
  double xy = 0;
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.rows(); ++j) xx += k(x.row(i), x.row(j));
  for (Index i = 0; i < y.rows(); ++i)
    for (Index j = 0; j < y.rows(); ++j) yy += k(y.row(i), y.row(j));
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < y.rows(); ++j) xy += k(x.row(i), y.row(j));
  const auto n = static_cast<double>(x.rows());
  const auto m = static_cast<double>(y.rows());
  return xx / (n * n) + yy / (m * m) - 2 * xy / (n * m);
}

Outcome mmd_oracle(const Settings& s) {
  Rng rng(derive_seed(s.seed, "mmd"));
  std::uniform_int_distribution<Index> size(1, 256);
  std::uniform_int_distribution<Index> dim(2, 16);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Index d = dim(rng);
    const Index n = trial == 0 ? 256 : size(rng);
    const Matrix<double> x = normal_matrix<double>(rng, n, d);
    Matrix<double> y = normal_matrix<double>(rng, trial == 0 ? 256 : size(rng), d);
    y.array() += 0.25 * (trial % 4);
    const RbfKernel kernel = RbfKernel::for_latent_dim(d);
    worst = std::max(worst, std::abs(mmd(x, y, kernel) - naive_mmd(x, y, kernel)));
  }
  const double analytic =
      mmd(Matrix<double>(Matrix<double>::Zero(1, 1)), Matrix<double>(Matrix<double>::Ones(1, 1)), RbfKernel{{1.0}});
  const double expected = 2.0 - 2.0 * std::exp(-0.5);
  return {worst <= 1e-6 && std::abs(analytic - expected) <= 1e-9,
          fmt("50 pairs max |fast-naive| %.1e, X={0},Y={1},sigma=1 gives %.9f (expected %.9f)", worst, analytic,
              expected)};
}

struct Trajectory {
  std::vector<double> losses;
  Vector<double> params;
  bool operator==(const Trajectory&) const = default;
};

Trajectory trajectory(const Dataset& data, const ModelConfig& mc, const TrainConfig& tc,
                      const LatentCodec<double>* codec = nullptr) {
  Trajectory t;
  TrainHooks hooks;
  hooks.on_batch = [&](int, Index, const StepLoss& l) { t.losses.push_back(l.loss); };
  t.params = train<double>(data, mc, tc, codec, hooks).model.net().params();
  return t;
}

Outcome reduction_lattice(const Settings& s) {
  ExperimentConfig cfg = load_config(s.mnist_config);
  cfg.seed = s.seed;
  cfg.derive_component_seeds();
  const LoadedData data = load_data(cfg.dataset, cfg.seed);
  TrainConfig base = cfg.train;
  base.epochs = 3;
  auto with = [&](Trainer trainer, const std::function<void(TrainConfig&)>& edit = {}) {
    TrainConfig c = base;
    c.trainer = trainer;
    if (edit) edit(c);
    return c;
  };
  const IdentityCodec<double> id(cfg.model.input_shape);
  const Trajectory erm = trajectory(data.train, cfg.model, with(Trainer::kErm));
  const Trajectory mixup = trajectory(data.train, cfg.model, with(Trainer::kMixup));
  const bool mixup_lambda_one =
      trajectory(data.train, cfg.model, with(Trainer::kMixup, [](TrainConfig& c) { c.mixup.fixed_lambda = 1.0; })) ==
      erm;
  const bool at_zero =
      trajectory(data.train, cfg.model, with(Trainer::kAt, [](TrainConfig& c) { c.attack.epsilon = 0; })) == erm;
  const bool varmixup_identity = trajectory(data.train, cfg.model, with(Trainer::kVarMixup), &id) == mixup;

  ModelConfig mc = cfg.model;
  Model<double> model = build_model<double>(mc);
  model.net().params() = erm.params;
  const ClassPools pools(data.train);
  InferencePolicy p;
  p.variant = InferenceVariant::kMiOl;
  p.seed = derive_seed(cfg.seed, "lattice-mi");
  const Matrix<double> x = data.test.all_images<double>();
  bool varmi_identity = true;
  for (Averaging a : {Averaging::kProbs, Averaging::kLogits}) {
    p.averaging = a;
    varmi_identity = varmi_identity && varmi_predict(model, id, x, p, pools) == mi_ol_predict(model, x, p, pools);
  }
  const bool distinct = !(mixup == erm);
  auto yn = [](bool b) { return b ? "equal" : "DIFFERENT"; };
  return {mixup_lambda_one && at_zero && varmixup_identity && varmi_identity && distinct,
          fmt("%zd train, 3 epochs, %zu steps, float64: mixup(lambda=1)~ERM %s, AT(eps=0)~ERM %s, "
              "VarMixup(identity)~Mixup %s, VarMI(identity)~MI-OL %s on %zd test rows, Mixup differs from ERM %s",
              static_cast<std::ptrdiff_t>(data.train.size()), erm.losses.size(), yn(mixup_lambda_one), yn(at_zero),
              yn(varmixup_identity), yn(varmi_identity), static_cast<std::ptrdiff_t>(x.rows()), distinct ? "yes" : "NO")};
}

Outcome endpoint_identities(const Settings& s) {
  ExperimentConfig cfg = load_config(s.mnist_config);
  cfg.seed = s.seed;
  cfg.derive_component_seeds();
  const LoadedData data = load_data(cfg.dataset, cfg.seed);
  TrainConfig tc = cfg.train;
  tc.trainer = Trainer::kErm;
  tc.epochs = 1;
  const Model<float> model = train<float>(data.train, cfg.model, tc).model;
  VaeConfig vc = *cfg.vae;
  vc.epochs = 1;
  const Vae<float> vae = train_vae<float>(data.train, vc);
  const ClassPools pools(data.train);
  const Matrix<float> x = data.test.all_images<float>();
  InferencePolicy p;
  p.lambda_mi = 1.0;
  p.seed = derive_seed(cfg.seed, "endpoint");
  bool mi = true;
  bool var = true;
  const Matrix<float> decoded = vae.decode_mean(vae.encode_mean(x));
  for (Averaging a : {Averaging::kProbs, Averaging::kLogits}) {
    p.averaging = a;
    mi = mi && mi_ol_predict(model, x, p, pools) == plain_predict(model, x, a);
    const Matrix<float> logits = model.logits(decoded);
    var = var && varmi_predict(model, vae, x, p, pools) == (a == Averaging::kProbs ? softmax(logits) : logits);
  }
  return {mi && var, fmt("%zd test rows, N_MI=%zd, both averaging modes: mi_ol(lambda=1)==plain %s, "
                         "varmi(lambda=1)==F(decode(encode_mean(x))) %s",
                         static_cast<std::ptrdiff_t>(x.rows()), static_cast<std::ptrdiff_t>(p.n_mi),
                         mi ? "bitwise" : "DIFFERS", var ? "bitwise" : "DIFFERS")};
}

Outcome ece_oracle(const Settings&) {
  const std::vector<double> conf{0.4, 0.6, 0.9, 0.8};
  const std::vector<int> pred{1, 1, 1, 1};
  const std::vector<int> label{1, 0, 1, 1};
  const double two_bin = ece(conf, pred, label, 2).ece;
  const std::vector<double> ones(100, 1.0);
  std::vector<int> perfect(100);
  for (std::size_t i = 0; i < perfect.size(); ++i) perfect[i] = static_cast<int>(i % 10);
  const double zero = ece(ones, perfect, perfect).ece;
  return {two_bin == 0.225 && zero == 0.0, fmt("two-bin example %.15g (%s 0.225), perfect calibration %.17g", two_bin,
                                                  two_bin == 0.225 ? "bitwise equal to" : "differs from", zero)};
}

double mean_gamma(const Model<float>& model, const Dataset& data, double eps, const LinearityConfig& c,
                  std::uint64_t seed) {
  const std::vector<LinearityPoint> pts =
      local_linearity_errors(model, data.all_images<float>(), data.labels(), eps, c, seed);
  double sum = 0;
  for (const LinearityPoint& p : pts) sum += p.gamma;
  return sum / static_cast<double>(pts.size());
}

Outcome local_linearity(const Settings& s) {
  Rng rng(derive_seed(s.seed, "linearity-toys"));
  LinearityConfig lc;
  double affine_worst = 0;
  for (int k = 0; k < 10; ++k) {
    const Vector<double> w = normal_matrix<double>(rng, 784, 1);
    const double b = normal_matrix<double>(rng, 1, 1)(0);
    const ScalarField affine{[&](const Vector<double>& v) { return w.dot(v) + b; },
                             [&](const Vector<double>&) { return Vector<double>(w); }};
    const Vector<double> x = uniform_matrix<double>(rng, 784, 1, 0.0, 1.0);
    for (double eps : default_linearity_grid())
      affine_worst = std::max(affine_worst, local_linearity_error(affine, x, eps, lc, rng).gamma);
  }
  const ScalarField square{[](const Vector<double>& v) { return v(0) * v(0); },
                           [](const Vector<double>& v) { return Vector<double>(2.0 * v); }};
  LinearityConfig free = lc;
  free.clamp_to_unit = false;
  double quad_worst = 0;
  for (double x0 : {-0.5, -0.1, 0.0, 0.3, 0.7}) {
    for (double eps : {1.0 / 255, 8.0 / 255, 16.0 / 255, 0.25}) {
      const double g = local_linearity_error(square, Vector<double>::Constant(1, x0), eps, free, rng).gamma;
      quad_worst = std::max(quad_worst, std::abs(g - eps * eps) / (eps * eps));
    }
  }

  ExperimentConfig cfg = load_config(s.mnist_config);
  cfg.seed = s.seed;
  cfg.derive_component_seeds();
  const LoadedData data = load_data(cfg.dataset, cfg.seed);
  const Vae<float> vae = train_vae<float>(data.train, *cfg.vae);
  const Model<float> mixup = train<float>(data.train, cfg.model, apply_preset("mixup", cfg.train)).model;
  const Model<float> varmixup = train<float>(data.train, cfg.model, apply_preset("varmixup", cfg.train), &vae).model;
  const Dataset probe = first_rows(data.test, cfg.metrics.linearity_examples);
  const double eps = 8.0 / 255;
  const std::uint64_t seed = derive_seed(cfg.seed, "linearity");
  const double g_mix = mean_gamma(mixup, probe, eps, cfg.metrics.linearity_config, seed);
  const double g_var = mean_gamma(varmixup, probe, eps, cfg.metrics.linearity_config, seed);
  return {affine_worst <= 1e-6 && quad_worst <= 0.02 && g_var <= g_mix,
          fmt("affine max gamma %.1e, quadratic max rel. error %.2f%%, mean gamma(8/255) on %zd MNIST test rows: "
              "VarMixup %.5f vs Mixup %.5f (ratio %.2f)",
              affine_worst, 100 * quad_worst, static_cast<std::ptrdiff_t>(probe.size()), g_var, g_mix, g_var / g_mix)};
}

struct CifarSeed {
  double mixup_plain = 0;
  double mixup_mi = 0;
  double varmixup_varmi = 0;
  double mixup_clean = 0;
  double varmixup_clean = 0;
  double latent_mixup = 0;
  double latent_varmixup = 0;
};

const NamedPolicy& policy_named(const ExperimentConfig& c, const std::string& name) {
  for (const NamedPolicy& p : c.inference)
    if (p.name == name) return p;
  throw ConfigError("config has no inference policy '" + name + "'");
}

const AttackProfile& attack_named(const ExperimentConfig& c, const std::string& name) {
  for (const AttackProfile& a : c.attacks)
    if (a.name == name) return a;
  throw ConfigError("config has no attack profile '" + name + "'");
}

CifarSeed run_cifar_seed(ExperimentConfig cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.derive_component_seeds();
  const LoadedData data = load_data(cfg.dataset, cfg.seed);
  const Vae<float> vae = train_vae<float>(data.train, *cfg.vae);
  const Model<float> mixup = train<float>(data.train, cfg.model, apply_preset("mixup", cfg.train)).model;
  const Model<float> varmixup = train<float>(data.train, cfg.model, apply_preset("varmixup", cfg.train), &vae).model;
  const ClassPools pools(data.train);
  const AttackProfile& pgd10 = attack_named(cfg, "pgd10");
  const std::uint64_t attack_seed = derive_seed(cfg.seed, "attack/pgd10");
  const Index batch = cfg.metrics.batch_size;
  const NamedPolicy& plain = policy_named(cfg, "plain");
  const NamedPolicy& mi = policy_named(cfg, "mi-ol");
  const NamedPolicy& varmi = policy_named(cfg, "var-mi");

  CifarSeed r;
  r.mixup_plain = oblivious_eval<float>(mixup, plain.policy, nullptr, &pools, data.test, pgd10, attack_seed, batch).accuracy;
  r.mixup_mi = oblivious_eval<float>(mixup, mi.policy, nullptr, &pools, data.test, pgd10, attack_seed, batch).accuracy;
  r.varmixup_varmi =
      oblivious_eval<float>(varmixup, varmi.policy, &vae, &pools, data.test, pgd10, attack_seed, batch).accuracy;
  const Matrix<float> clean = data.test.all_images<float>();
  r.mixup_clean = score(make_predictor(mixup, plain.policy), clean, data.test.labels(), batch);
  r.varmixup_clean = score(make_predictor(varmixup, plain.policy), clean, data.test.labels(), batch);

  const Dataset base = first_rows(data.train, cfg.metrics.latent_stat_samples);
  const Matrix<float> x = base.all_images<float>();
  const Matrix<float> y = one_hot<float>(base.labels(), base.num_classes());
  Rng rng(derive_seed(cfg.seed, "latent-stats"));
  MixupConfig mc;
  mc.eta = cfg.train.mixup.eta;
  const MixPlan plan = draw_mix_plan(rng, x.rows(), mc);
  r.latent_mixup = latent_stat_distance<float>(x, mixup_batch(x, y, plan).x, vae);
  r.latent_varmixup = latent_stat_distance<float>(x, varmixup_batch(vae, x, y, plan).x, vae);
  return r;
}

struct CifarOutcomes {
  Outcome ordering;
  Outcome clean;
  Outcome latent;
  Outcome reproducible;
};

CifarOutcomes cifar_criteria(const Settings& s, double& seconds) {
  const auto start = std::chrono::steady_clock::now();
  auto unavailable = [](const std::string& why) {
    const Outcome o{false, "dataset unavailable: " + why};
    return CifarOutcomes{o, o, o, o};
  };
  ExperimentConfig cfg;
  try {
    cfg = load_config(s.cifar_config);
    cfg.validate();
  } catch (const ConfigError& e) {
    return unavailable(e.what());
  }
  if (cfg.dataset.kind != "cifar10") throw ConfigError(s.cifar_config.string() + " is not a CIFAR-10 config");
  if (!std::filesystem::is_directory(cfg.dataset.path)) return unavailable(cfg.dataset.path.string() + " not found");

  std::vector<CifarSeed> runs;
  try {
    for (int k = 0; k < s.cifar_seeds; ++k) runs.push_back(run_cifar_seed(cfg, s.seed + static_cast<std::uint64_t>(k)));
  } catch (const IngestionError& e) {
    return unavailable(e.what());
  }
  seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const CifarSeed again = run_cifar_seed(cfg, s.seed);

  auto mean = [&](double CifarSeed::*field) {
    double sum = 0;
    for (const CifarSeed& r : runs) sum += r.*field;
    return sum / static_cast<double>(runs.size());
  };
  const double plain = 100 * mean(&CifarSeed::mixup_plain);
  const double mi = 100 * mean(&CifarSeed::mixup_mi);
  const double varmi = 100 * mean(&CifarSeed::varmixup_varmi);
  const double clean_mix = 100 * mean(&CifarSeed::mixup_clean);
  const double clean_var = 100 * mean(&CifarSeed::varmixup_clean);
  const double lat_mix = mean(&CifarSeed::latent_mixup);
  const double lat_var = mean(&CifarSeed::latent_varmixup);
  const CifarSeed& first = runs.front();
  const double drift = 100 * std::max({std::abs(again.mixup_plain - first.mixup_plain),
                                       std::abs(again.mixup_mi - first.mixup_mi),
                                       std::abs(again.varmixup_varmi - first.varmixup_varmi)});
  CifarOutcomes o;
  o.ordering = {varmi - mi >= 5 && mi - plain >= 5 && seconds <= 7200,
                fmt("PGD10 over %d seeds: VarMixup+VarMI %.2f, Mixup+MI %.2f, Mixup-plain %.2f (gaps %.2f, %.2f), "
                    "%.0f s",
                    s.cifar_seeds, varmi, mi, plain, varmi - mi, mi - plain, seconds)};
  o.clean = {clean_var <= clean_mix, fmt("clean accuracy VarMixup %.2f vs Mixup %.2f", clean_var, clean_mix)};
  o.latent = {lat_var > lat_mix,
              fmt("latent stat distance to train: VarMixup samples %.4f vs Mixup samples %.4f", lat_var, lat_mix)};
  o.reproducible = {drift <= 0.5, fmt("rerun of seed %llu: max accuracy change %.2f points",
                                      static_cast<unsigned long long>(s.seed), drift)};
  return o;
}

struct Line {
  int id;
  std::string name;
  Outcome outcome;
  double seconds;
  double limit;
};

void print(const Line& l) {
  const bool timely = l.limit <= 0 || l.seconds <= l.limit;
  const bool pass = l.outcome.pass && timely;
  std::string detail = l.outcome.detail;
  if (!timely) detail += fmt("; runtime %.0f s exceeds %.0f s", l.seconds, l.limit);
  std::cout << (pass ? "PASS" : "FAIL") << fmt(" %2d %-22s ", l.id, l.name.c_str()) << detail
            << fmt(" (%.1f s)", l.seconds) << std::endl;
}

nlohmann::json to_json_line(const Line& l) {
  const bool pass = l.outcome.pass && (l.limit <= 0 || l.seconds <= l.limit);
  return {{"criterion", l.id}, {"name", l.name}, {"pass", pass}, {"detail", l.outcome.detail}, {"seconds", l.seconds}};
}

}  // namespace
}  // namespace varmix

int main(int argc, char** argv) {
  using namespace varmix;
  Eigen::setNbThreads(1);
  CLI::App app{"Runs the acceptance criteria and prints one PASS/FAIL line per criterion."};
  Settings s;
  const std::filesystem::path src = VARMIX_SOURCE_DIR;
  s.mnist_config = src / "configs" / "mnist-desk.json";
  s.cifar_config = src / "configs" / "cifar10-desk.json";
  std::vector<int> only;
  std::filesystem::path json_out;
  app.add_option("--mnist-config", s.mnist_config, "MNIST desk-scale experiment config")->check(CLI::ExistingFile);
  app.add_option("--cifar-config", s.cifar_config, "CIFAR-10 desk-scale experiment config");
  app.add_option("--seed", s.seed, "base seed");
  app.add_option("--cifar-seeds", s.cifar_seeds, "seeds averaged by the CIFAR-10 criteria")->check(CLI::PositiveNumber);
  app.add_option("--only", only, "criteria to run (default all)")->check(CLI::Range(1, 11));
  app.add_option("--json", json_out, "also write the results as JSON");
  CLI11_PARSE(app, argc, argv);

  const std::set<int> selected(only.begin(), only.end());
  auto wanted = [&](int id) { return selected.empty() || selected.count(id) > 0; };
  struct Entry {
    int id;
    const char* name;
    double limit;
    Outcome (*run)(const Settings&);
  };
  const Entry entries[] = {
      {1, "attack-invariants", 300, attack_invariants},  {2, "gradient-correctness", 300, gradient_correctness},
      {3, "mmd-oracle", 0, mmd_oracle},                  {4, "reduction-lattice", 600, reduction_lattice},
      {5, "endpoint-identities", 0, endpoint_identities}, {6, "ece-oracle", 0, ece_oracle},
      {7, "local-linearity", 1200, local_linearity},
  };
  std::vector<Line> lines;
  auto record = [&](Line l) {
    print(l);
    lines.push_back(std::move(l));
  };
  try {
    for (const Entry& e : entries) {
      if (!wanted(e.id)) continue;
      const auto start = std::chrono::steady_clock::now();
      Outcome o = e.run(s);
      record({e.id, e.name, std::move(o),
              std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), e.limit});
    }
    if (wanted(8) || wanted(9) || wanted(10) || wanted(11)) {
      const auto start = std::chrono::steady_clock::now();
      double seeds_seconds = 0;
      const CifarOutcomes c = cifar_criteria(s, seeds_seconds);
      const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (wanted(8)) record({8, "robustness-ordering", c.ordering, seeds_seconds, 0});
      if (wanted(9)) record({9, "clean-tradeoff", c.clean, seeds_seconds, 0});
      if (wanted(10)) record({10, "sample-statistics", c.latent, seeds_seconds, 0});
      if (wanted(11)) record({11, "reproducibility", c.reproducible, total, 0});
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  int failures = 0;
  nlohmann::json report = nlohmann::json::array();
  for (const Line& l : lines) {
    report.push_back(to_json_line(l));
    failures += !report.back()["pass"].get<bool>();
  }
  if (!json_out.empty()) {
    std::ofstream out(json_out);
    out << report.dump(2) << "\n";
    if (!out) {
      std::cerr << "error: cannot write " << json_out << "\n";
      return 2;
    }
  }
  std::cout << fmt("%d of %zu criteria passed", static_cast<int>(lines.size()) - failures, lines.size()) << std::endl;
  return failures == 0 ? 0 : 1;
}
