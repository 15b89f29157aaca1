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

#include "varmix/vae/vae.hpp"

#include <cmath>

#include "varmix/model/checkpoint.hpp"
#include "varmix/model/optim.hpp"

namespace varmix {

std::string_view to_string(VaeArchitecture arch) {
  return arch == VaeArchitecture::kMlp ? "mlp" : "conv";
}

VaeArchitecture vae_architecture_from_string(std::string_view name) {
  if (name == "mlp") return VaeArchitecture::kMlp;
  if (name == "conv") return VaeArchitecture::kConv;
  throw ConfigError("unknown vae.architecture '" + std::string(name) + "' (expected mlp or conv)");
}

void VaeConfig::validate() const {
  if (latent_dim < 2) throw ConfigError("vae.latent_dim must be >= 2");
  if (hidden < 1) throw ConfigError("vae.hidden must be >= 1");
  if (!mmd_weight_auto && !(mmd_weight > 0)) throw ConfigError("vae.mmd_weight must be > 0");
  if (!(mmd_auto_ratio > 0)) throw ConfigError("vae.mmd_auto_ratio must be > 0");
  if (bandwidth_scales.empty()) throw ConfigError("vae.bandwidth_scales must be nonempty");
  for (double s : bandwidth_scales)
    if (!(s > 0)) throw ConfigError("vae.bandwidth_scales entries must be > 0");
  if (epochs < 0) throw ConfigError("vae.epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("vae.batch_size must be >= 1");
  if (!(learning_rate > 0)) throw ConfigError("vae.learning_rate must be > 0");
  if (architecture == VaeArchitecture::kConv && (image_shape.height % 4 != 0 || image_shape.width % 4 != 0))
    throw ConfigError("conv vae needs image height and width divisible by 4");
}

void to_json(nlohmann::json& j, const VaeConfig& c) {
  j = nlohmann::json{{"architecture", std::string(to_string(c.architecture))},
                     {"image_shape", {c.image_shape.channels, c.image_shape.height, c.image_shape.width}},
                     {"latent_dim", c.latent_dim},
                     {"hidden", c.hidden},
                     {"bandwidth_scales", c.bandwidth_scales},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"learning_rate", c.learning_rate},
                     {"mmd_auto_ratio", c.mmd_auto_ratio},
                     {"seed", c.seed}};
  if (c.mmd_weight_auto)
    j["mmd_weight"] = "auto";
  else
    j["mmd_weight"] = c.mmd_weight;
}

void from_json(const nlohmann::json& j, VaeConfig& c) {
  const VaeConfig d;
  c.architecture = vae_architecture_from_string(j.value("architecture", std::string(to_string(d.architecture))));
  if (j.contains("image_shape")) {
    const auto s = j.at("image_shape").get<std::vector<Index>>();
    if (s.size() != 3) throw ConfigError("vae.image_shape needs [channels, height, width]");
    c.image_shape = {s[0], s[1], s[2]};
  } else {
    c.image_shape = d.image_shape;
  }
  c.latent_dim = j.value("latent_dim", d.latent_dim);
  c.hidden = j.value("hidden", d.hidden);
  c.bandwidth_scales = j.value("bandwidth_scales", d.bandwidth_scales);
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.mmd_auto_ratio = j.value("mmd_auto_ratio", d.mmd_auto_ratio);
  c.seed = j.value("seed", d.seed);
  c.mmd_weight_auto = true;
  c.mmd_weight = d.mmd_weight;
  if (j.contains("mmd_weight")) {
    const auto& w = j.at("mmd_weight");
    if (w.is_string()) {
      if (w.get<std::string>() != "auto") throw ConfigError("vae.mmd_weight must be a number or \"auto\"");
    } else {
      c.mmd_weight_auto = false;
      c.mmd_weight = w.get<double>();
    }
  }
}

void to_json(nlohmann::json& j, const VaeEpochLog& e) {
  j = nlohmann::json{{"epoch", e.epoch}, {"loss", e.loss}, {"recon", e.recon}, {"mmd", e.mmd}};
}

void from_json(const nlohmann::json& j, VaeEpochLog& e) {
  e.epoch = j.at("epoch").get<int>();
  e.loss = j.at("loss").get<double>();
  e.recon = j.at("recon").get<double>();
  e.mmd = j.at("mmd").get<double>();
}

namespace {

template <typename Scalar>
Network<Scalar> build_encoder(const VaeConfig& c) {
  std::vector<typename Network<Scalar>::Block> blocks(1);
  auto& b = blocks[0];
  TensorShape s = c.image_shape;
  auto push = [&](LayerPtr<Scalar> l) {
    s = l->output_shape();
    b.push_back(std::move(l));
  };
  if (c.architecture == VaeArchitecture::kMlp) {
    push(make_linear<Scalar>(s, c.hidden));
    push(make_relu<Scalar>(s));
  } else {
    push(make_conv2d<Scalar>(s, {c.hidden, 3, 2, 1, true}));
    push(make_relu<Scalar>(s));
    push(make_conv2d<Scalar>(s, {2 * c.hidden, 3, 2, 1, true}));
    push(make_relu<Scalar>(s));
  }
  push(make_linear<Scalar>(s, 2 * c.latent_dim));
  Network<Scalar> net(c.image_shape, std::move(blocks));
  net.initialize(derive_seed(c.seed, "vae-encoder"));
  return net;
}

template <typename Scalar>
Network<Scalar> build_decoder(const VaeConfig& c) {
  std::vector<typename Network<Scalar>::Block> blocks(1);
  auto& b = blocks[0];
  const TensorShape latent{c.latent_dim, 1, 1};
  TensorShape s = latent;
  auto push = [&](LayerPtr<Scalar> l) {
    s = l->output_shape();
    b.push_back(std::move(l));
  };
  const TensorShape img = c.image_shape;
  if (c.architecture == VaeArchitecture::kMlp) {
    push(make_linear<Scalar>(s, c.hidden));
    push(make_relu<Scalar>(s));
    push(make_linear<Scalar>(s, img.size()));
  } else {
    const TensorShape seed_shape{2 * c.hidden, img.height / 4, img.width / 4};
    push(make_linear<Scalar>(s, seed_shape.size()));
    push(make_relu<Scalar>(s));
    push(make_reshape<Scalar>(s, seed_shape));
    push(make_upsample2d<Scalar>(s, 2));
    push(make_conv2d<Scalar>(s, {c.hidden, 3, 1, 1, true}));
    push(make_relu<Scalar>(s));
    push(make_upsample2d<Scalar>(s, 2));
    push(make_conv2d<Scalar>(s, {img.channels, 3, 1, 1, true}));
  }
  push(make_sigmoid<Scalar>(s));
  if (!(s == img)) push(make_reshape<Scalar>(s, img));
  Network<Scalar> net(latent, std::move(blocks));
  net.initialize(derive_seed(c.seed, "vae-decoder"));
  return net;
}

}  // namespace

template <typename Scalar>
Vae<Scalar>::Vae(VaeConfig config)
    : config_((config.validate(), std::move(config))),
      encoder_(build_encoder<Scalar>(config_)),
      decoder_(build_decoder<Scalar>(config_)),
      gamma_(config_.mmd_weight) {}

template <typename Scalar>
Matrix<Scalar> Vae<Scalar>::encode(const Matrix<Scalar>& x, Mode mode, Tape<Scalar>* tape) const {
  this->check_images(x);
  return encoder_.forward(x, mode, tape);
}

template <typename Scalar>
Matrix<Scalar> Vae<Scalar>::decode(const Matrix<Scalar>& z, Mode mode, Tape<Scalar>* tape) const {
  this->check_latents(z);
  return decoder_.forward(z, mode, tape);
}

template <typename Scalar>
Matrix<Scalar> Vae<Scalar>::encode_mean(const Matrix<Scalar>& x) const {
  return encode(x).leftCols(config_.latent_dim);
}

template <typename Scalar>
Matrix<Scalar> Vae<Scalar>::decode_mean(const Matrix<Scalar>& z) const {
  return decode(z);
}

template <typename Scalar>
Matrix<Scalar> Vae<Scalar>::encode_mean_vjp(const Matrix<Scalar>& x, const Matrix<Scalar>& g) const {
  if (g.rows() != x.rows() || g.cols() != config_.latent_dim) throw ShapeError("encode_mean_vjp cotangent shape");
  Tape<Scalar> tape;
  encode(x, Mode::kEval, &tape);
  Matrix<Scalar> full = Matrix<Scalar>::Zero(x.rows(), 2 * config_.latent_dim);
  full.leftCols(config_.latent_dim) = g;
  return encoder_.backward(full, tape);
}

template <typename Scalar>
Matrix<Scalar> Vae<Scalar>::decode_mean_vjp(const Matrix<Scalar>& z, const Matrix<Scalar>& g) const {
  if (g.rows() != z.rows() || g.cols() != config_.image_shape.size()) throw ShapeError("decode_mean_vjp cotangent shape");
  Tape<Scalar> tape;
  decode(z, Mode::kEval, &tape);
  return decoder_.backward(g, tape);
}

template <typename Scalar>
VaeNoise<Scalar> draw_vae_noise(Rng& rng, Index n, Index latent_dim) {
  VaeNoise<Scalar> noise;
  noise.eps = normal_matrix<Scalar>(rng, n, latent_dim);
  noise.prior = normal_matrix<Scalar>(rng, n, latent_dim);
  return noise;
}

namespace {

template <typename Scalar>
VaeLossTerms<Scalar> vae_loss_impl(const Vae<Scalar>& vae, const Matrix<Scalar>& x, const VaeNoise<Scalar>& noise,
                                   double gamma, VaeGradients<Scalar>* grads, bool input_grad) {
  if (x.rows() == 0) throw InvalidArgument("vae loss on an empty batch");
  const Index d = vae.latent_dim();
  if (noise.eps.rows() != x.rows() || noise.eps.cols() != d || noise.prior.cols() != d)
    throw ShapeError("vae noise does not match the batch");
  Tape<Scalar> enc_tape;
  Tape<Scalar> dec_tape;
  const bool tapes = grads != nullptr;
  const Matrix<Scalar> enc = vae.encode(x, Mode::kTrain, tapes ? &enc_tape : nullptr);
  const Matrix<Scalar> mu = enc.leftCols(d);
  const Matrix<Scalar> sd = (enc.rightCols(d).array() * Scalar(0.5)).exp().matrix();
  const Matrix<Scalar> z = mu + sd.cwiseProduct(noise.eps);
  const Matrix<Scalar> xhat = vae.decode(z, Mode::kTrain, tapes ? &dec_tape : nullptr);
  const Matrix<Scalar> diff = xhat - x;
  const auto count = static_cast<Scalar>(x.size());
  const auto g = static_cast<Scalar>(gamma);

  VaeLossTerms<Scalar> t;
  t.recon = diff.squaredNorm() / count;
  if (!tapes) {
    t.mmd = mmd(z, noise.prior, vae.config().kernel());
    t.value = g * t.mmd + t.recon;
    return t;
  }
  const MmdGrad<Scalar> mg = mmd_with_grad(z, noise.prior, vae.config().kernel());
  t.mmd = mg.value;
  t.value = g * t.mmd + t.recon;

  const Matrix<Scalar> dxhat = (Scalar(2) / count) * diff;
  grads->decoder = Vector<Scalar>::Zero(vae.decoder().params().size());
  Matrix<Scalar> dz = vae.decoder().backward(dxhat, dec_tape, &grads->decoder);
  dz += g * mg.dx;
  Matrix<Scalar> denc(x.rows(), 2 * d);
  denc.leftCols(d) = dz;
  denc.rightCols(d) = (dz.array() * noise.eps.array() * sd.array() * Scalar(0.5)).matrix();
  grads->encoder = Vector<Scalar>::Zero(vae.encoder().params().size());
  Matrix<Scalar> dx = vae.encoder().backward(denc, enc_tape, &grads->encoder);
  if (input_grad) grads->input = dx - dxhat;
  return t;
}

template <typename Scalar>
Vae<Scalar> train_impl(const Dataset& data, const VaeConfig& config, const AttackBudget* budget,
                       const VaeTrainHooks<Scalar>& hooks) {
  config.validate();
  if (!(data.shape() == config.image_shape))
    throw ShapeError("vae configured for " + config.image_shape.str() + " but data is " + data.shape().str());
  if (budget != nullptr) budget->validate();
  Vae<Scalar> vae(config);
  Adam<Scalar> enc_opt(vae.encoder().params().size(), {config.learning_rate});
  Adam<Scalar> dec_opt(vae.decoder().params().size(), {config.learning_rate});
  Rng noise_rng(derive_seed(config.seed, "vae-noise"));
  const std::uint64_t batch_seed = derive_seed(config.seed, "vae-batches");
  bool calibrated = !config.mmd_weight_auto;
  VaeGradients<Scalar> grads;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    BatchStream stream(data.size(), config.batch_size, derive_seed(batch_seed, static_cast<std::uint64_t>(epoch)), true);
    VaeEpochLog log;
    log.epoch = epoch;
    double seen = 0;
    while (auto idx = stream.next()) {
      const Matrix<Scalar> x = data.gather<Scalar>(*idx);
      const VaeNoise<Scalar> noise = draw_vae_noise<Scalar>(noise_rng, x.rows(), config.latent_dim);
      if (!calibrated) {
        const VaeLossTerms<Scalar> t0 = vae_loss_impl<Scalar>(vae, x, noise, 1.0, nullptr, false);
        vae.set_gamma(t0.mmd > 0 ? config.mmd_auto_ratio * static_cast<double>(t0.recon) / static_cast<double>(t0.mmd)
                                 : 1.0);
        calibrated = true;
      }
      Matrix<Scalar> x_train = x;
      if (budget != nullptr) {
        x_train = vae_pgd(vae, x, noise, vae.gamma(), *budget);
        if (hooks.on_adversarial_batch) hooks.on_adversarial_batch(x, x_train);
      }
      const VaeLossTerms<Scalar> t = vae_loss_impl<Scalar>(vae, x_train, noise, vae.gamma(), &grads, false);
      if (!std::isfinite(static_cast<double>(t.value)))
        throw DivergenceError("vae loss is not finite at epoch " + std::to_string(epoch) + " (recon " +
                              std::to_string(static_cast<double>(t.recon)) + ", mmd " +
                              std::to_string(static_cast<double>(t.mmd)) + ")");
      enc_opt.step(vae.encoder().params(), grads.encoder);
      dec_opt.step(vae.decoder().params(), grads.decoder);
      const auto n = static_cast<double>(x.rows());
      log.loss += n * static_cast<double>(t.value);
      log.recon += n * static_cast<double>(t.recon);
      log.mmd += n * static_cast<double>(t.mmd);
      seen += n;
    }
    log.loss /= seen;
    log.recon /= seen;
    log.mmd /= seen;
    vae.curve().push_back(log);
    if (hooks.on_epoch) hooks.on_epoch(log);
  }
  return vae;
}

}  // namespace

template <typename Scalar>
VaeLossTerms<Scalar> vae_loss(const Vae<Scalar>& vae, const Matrix<Scalar>& x, const VaeNoise<Scalar>& noise,
                              double gamma) {
  return vae_loss_impl<Scalar>(vae, x, noise, gamma, nullptr, false);
}

template <typename Scalar>
VaeLossTerms<Scalar> vae_loss_and_grad(const Vae<Scalar>& vae, const Matrix<Scalar>& x,
                                       const VaeNoise<Scalar>& noise, double gamma,
                                       VaeGradients<Scalar>& grads, bool input_grad) {
  return vae_loss_impl<Scalar>(vae, x, noise, gamma, &grads, input_grad);
}

template <typename Scalar>
Matrix<Scalar> vae_pgd(const Vae<Scalar>& vae, const Matrix<Scalar>& x, const VaeNoise<Scalar>& noise,
                       double gamma, const AttackBudget& budget) {
  if (budget.steps == 0 || budget.epsilon == 0) return x;
  Matrix<Scalar> x_adv = x;
  VaeGradients<Scalar> grads;
  for (int s = 0; s < budget.steps; ++s) {
    vae_loss_impl<Scalar>(vae, x_adv, noise, gamma, &grads, true);
    x_adv += static_cast<Scalar>(budget.alpha) * sign_of(grads.input);
    project_linf(x_adv, x, budget);
  }
  return x_adv;
}

template <typename Scalar>
Vae<Scalar> train_vae(const Dataset& data, const VaeConfig& config, const VaeTrainHooks<Scalar>& hooks) {
  return train_impl<Scalar>(data, config, nullptr, hooks);
}

template <typename Scalar>
Vae<Scalar> train_vae_adversarial(const Dataset& data, const VaeConfig& config, const AttackBudget& budget,
                                  const VaeTrainHooks<Scalar>& hooks) {
  return train_impl<Scalar>(data, config, &budget, hooks);
}

template <typename Scalar>
double reconstruction_mse(const LatentCodec<Scalar>& codec, const Matrix<Scalar>& x) {
  const Matrix<Scalar> r = codec.decode_mean(codec.encode_mean(x));
  return (r - x).template cast<double>().squaredNorm() / static_cast<double>(x.size());
}

template <typename Scalar>
void save_vae(const std::filesystem::path& path, const Vae<Scalar>& vae, const nlohmann::json& meta) {
  Checkpoint ckpt;
  ckpt.header = {{"kind", "vae"}, {"vae", vae.config()}, {"gamma", vae.gamma()},
                 {"curve", vae.curve()}, {"encoder_params", vae.encoder().params().size()}, {"meta", meta}};
  ckpt.params.resize(vae.encoder().params().size() + vae.decoder().params().size());
  ckpt.params << vae.encoder().params().template cast<double>(), vae.decoder().params().template cast<double>();
  ckpt.buffers.resize(0);
  save_checkpoint(path, ckpt);
}

template <typename Scalar>
Vae<Scalar> load_vae(const std::filesystem::path& path, nlohmann::json* meta) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.header.value("kind", std::string()) != "vae") throw FormatError(path.string() + " is not a vae checkpoint");
  Vae<Scalar> vae(ckpt.header.at("vae").get<VaeConfig>());
  const Index ne = vae.encoder().params().size();
  const Index nd = vae.decoder().params().size();
  if (ckpt.params.size() != ne + nd || ckpt.header.value("encoder_params", Index{-1}) != ne)
    throw FormatError("vae checkpoint tensor sizes do not match the architecture in " + path.string());
  vae.encoder().params() = ckpt.params.head(ne).cast<Scalar>();
  vae.decoder().params() = ckpt.params.tail(nd).cast<Scalar>();
  vae.set_gamma(ckpt.header.at("gamma").get<double>());
  vae.curve() = ckpt.header.value("curve", std::vector<VaeEpochLog>{});
  if (meta != nullptr) *meta = ckpt.header.value("meta", nlohmann::json::object());
  return vae;
}

#define VARMIX_INSTANTIATE_VAE(S)                                                                           \
  template class Vae<S>;                                                                                    \
  template VaeNoise<S> draw_vae_noise<S>(Rng&, Index, Index);                                               \
  template VaeLossTerms<S> vae_loss<S>(const Vae<S>&, const Matrix<S>&, const VaeNoise<S>&, double);       \
  template VaeLossTerms<S> vae_loss_and_grad<S>(const Vae<S>&, const Matrix<S>&, const VaeNoise<S>&,        \
                                                double, VaeGradients<S>&, bool);                            \
  template Matrix<S> vae_pgd<S>(const Vae<S>&, const Matrix<S>&, const VaeNoise<S>&, double,                \
                                const AttackBudget&);                                                       \
  template Vae<S> train_vae<S>(const Dataset&, const VaeConfig&, const VaeTrainHooks<S>&);                  \
  template Vae<S> train_vae_adversarial<S>(const Dataset&, const VaeConfig&, const AttackBudget&,           \
                                           const VaeTrainHooks<S>&);                                        \
  template double reconstruction_mse<S>(const LatentCodec<S>&, const Matrix<S>&);                           \
  template void save_vae<S>(const std::filesystem::path&, const Vae<S>&, const nlohmann::json&);            \
  template Vae<S> load_vae<S>(const std::filesystem::path&, nlohmann::json*);

VARMIX_INSTANTIATE_VAE(float)
VARMIX_INSTANTIATE_VAE(double)

}  // namespace varmix
