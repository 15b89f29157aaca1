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

#include "varmix/attacks/attacks.hpp"

#include <algorithm>

#include "varmix/core/errors.hpp"
#include "varmix/core/random.hpp"
#include "varmix/model/gradients.hpp"
#include "varmix/model/loss.hpp"

namespace varmix {

namespace {

template <typename Scalar>
void check_labels(const Matrix<Scalar>& x, const std::vector<int>& y) {
  if (static_cast<Index>(y.size()) != x.rows())
    throw ShapeError("attack got " + std::to_string(y.size()) + " labels for " + std::to_string(x.rows()) + " inputs");
}

template <typename Scalar>
LossFn<Scalar> ce() {
  return [](const Matrix<Scalar>& z, const Matrix<Scalar>& t) { return cross_entropy(z, t); };
}

}  // namespace

template <typename Scalar>
Matrix<Scalar> fgsm(const InputGradFn<Scalar>& grad, const Matrix<Scalar>& x, const AttackBudget& budget) {
  budget.validate();
  if (budget.epsilon == 0) return x;
  Matrix<Scalar> x_adv = x + static_cast<Scalar>(budget.epsilon) * sign_of(grad(x));
  project_linf(x_adv, x, budget);
  return x_adv;
}

template <typename Scalar>
Matrix<Scalar> pgd(const InputGradFn<Scalar>& grad, const Matrix<Scalar>& x, const AttackBudget& budget,
                   std::uint64_t seed, bool random_start) {
  budget.validate();
  if (budget.epsilon == 0) return x;
  Matrix<Scalar> x_adv = x;
  if (random_start) {
    for (Index i = 0; i < x.rows(); ++i) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
      x_adv.row(i) += uniform_matrix<Scalar>(rng, 1, x.cols(), static_cast<Scalar>(-budget.epsilon),
                                             static_cast<Scalar>(budget.epsilon));
    }
    project_linf(x_adv, x, budget);
  }
  for (int s = 0; s < budget.steps; ++s) {
    x_adv += static_cast<Scalar>(budget.alpha) * sign_of(grad(x_adv));
    project_linf(x_adv, x, budget);
  }
  return x_adv;
}

template <typename Scalar>
InputGradFn<Scalar> cross_entropy_grad(const Model<Scalar>& model, const std::vector<int>& labels, Mode mode) {
  return [&model, targets = one_hot<Scalar>(labels, model.num_classes()), mode](const Matrix<Scalar>& x) {
    return grad_input(model, ce<Scalar>(), x, targets, mode);
  };
}

template <typename Scalar>
Matrix<Scalar> fgsm(const Model<Scalar>& model, const Matrix<Scalar>& x, const std::vector<int>& y, double epsilon) {
  check_labels(x, y);
  AttackBudget budget;
  budget.epsilon = epsilon;
  budget.alpha = epsilon > 0 ? epsilon : 1.0;
  budget.steps = 1;
  return fgsm(cross_entropy_grad(model, y), x, budget);
}

template <typename Scalar>
Matrix<Scalar> pgd(const Model<Scalar>& model, const Matrix<Scalar>& x, const std::vector<int>& y,
                   const AttackBudget& budget, std::uint64_t seed, bool random_start, Mode mode) {
  check_labels(x, y);
  return pgd(cross_entropy_grad(model, y, mode), x, budget, seed, random_start);
}

template <typename Scalar>
Matrix<Scalar> pgd_targeted(const Model<Scalar>& model, const Matrix<Scalar>& x, const std::vector<int>& target,
                            const AttackBudget& budget, std::uint64_t seed, bool random_start) {
  check_labels(x, target);
  const InputGradFn<Scalar> toward = cross_entropy_grad(model, target);
  return pgd<Scalar>([&](const Matrix<Scalar>& v) { return Matrix<Scalar>(-toward(v)); }, x, budget, seed,
                     random_start);
}

template <typename Scalar>
std::vector<int> runner_up_classes(const Model<Scalar>& model, const Matrix<Scalar>& x) {
  const Matrix<Scalar> z = model.logits(x);
  if (z.cols() < 2) throw InvalidArgument("runner-up class needs at least two classes");
  std::vector<int> out(static_cast<std::size_t>(z.rows()));
  for (Index i = 0; i < z.rows(); ++i) {
    Index best = 0;
    for (Index k = 1; k < z.cols(); ++k)
      if (z(i, k) > z(i, best)) best = k;
    Index second = best == 0 ? 1 : 0;
    for (Index k = 0; k < z.cols(); ++k)
      if (k != best && z(i, k) > z(i, second)) second = k;
    out[static_cast<std::size_t>(i)] = static_cast<int>(second);
  }
  return out;
}

void AdaptiveConfig::validate() const {
  if (n_adaptive < 1) throw ConfigError("adaptive n_adaptive must be >= 1");
  if (!(lambda_mi >= 0 && lambda_mi <= 1)) throw ConfigError("adaptive lambda_mi must lie in [0, 1]");
}

void to_json(nlohmann::json& j, const AdaptiveConfig& c) {
  j = nlohmann::json{{"n_adaptive", c.n_adaptive}, {"lambda_mi", c.lambda_mi}};
}

void from_json(const nlohmann::json& j, AdaptiveConfig& c) {
  const AdaptiveConfig d;
  c.n_adaptive = j.value("n_adaptive", d.n_adaptive);
  c.lambda_mi = j.value("lambda_mi", d.lambda_mi);
}

template <typename Scalar>
Scalar varmi_composition_loss(const Model<Scalar>& model, const LatentCodec<Scalar>& codec, const Matrix<Scalar>& x,
                              const std::vector<int>& y, double lambda_mi, const Matrix<Scalar>& partners) {
  check_labels(x, y);
  const auto l = static_cast<Scalar>(lambda_mi);
  const Matrix<Scalar> v = l * codec.encode_mean(x) + static_cast<Scalar>(1 - lambda_mi) * codec.encode_mean(partners);
  return cross_entropy(model.logits(codec.decode_mean(v)), one_hot<Scalar>(y, model.num_classes())).value;
}

template <typename Scalar>
Matrix<Scalar> varmi_composition_grad(const Model<Scalar>& model, const LatentCodec<Scalar>& codec,
                                      const Matrix<Scalar>& x, const std::vector<int>& y, double lambda_mi,
                                      const std::vector<Matrix<Scalar>>& partners) {
  check_labels(x, y);
  if (partners.empty()) throw InvalidArgument("adaptive gradient needs at least one partner batch");
  const auto l = static_cast<Scalar>(lambda_mi);
  const auto m = static_cast<Scalar>(1 - lambda_mi);
  const Matrix<Scalar> targets = one_hot<Scalar>(y, model.num_classes());
  const Matrix<Scalar> zx = codec.encode_mean(x);
  Matrix<Scalar> dzx = Matrix<Scalar>::Zero(zx.rows(), zx.cols());
  for (const Matrix<Scalar>& xs : partners) {
    const Matrix<Scalar> v = l * zx + m * codec.encode_mean(xs);
    const Matrix<Scalar> u = codec.decode_mean(v);
    const Matrix<Scalar> du = grad_input(model, ce<Scalar>(), u, targets, Mode::kEval);
    dzx += l * codec.decode_mean_vjp(v, du);
  }
  return codec.encode_mean_vjp(x, dzx);
}

template <typename Scalar>
Matrix<Scalar> adaptive_pgd_varmi(const Model<Scalar>& model, const LatentCodec<Scalar>& codec,
                                  const Matrix<Scalar>& x, const std::vector<int>& y, const AttackBudget& budget,
                                  const AdaptiveConfig& config, const ClassPools& pools, std::uint64_t seed) {
  config.validate();
  budget.validate();
  check_labels(x, y);
  if (pools.dataset().size() == 0) throw InvalidArgument("adaptive attack pool is empty");
  if (x.cols() != pools.dataset().shape().size()) throw ShapeError("pool images do not match the input shape");
  const std::vector<int> predicted = argmax_rows(model.logits(x));
  for (int c : predicted) pools.other_than(c);
  if (budget.epsilon == 0) return x;
  std::vector<Rng> rngs;
  for (Index i = 0; i < x.rows(); ++i) rngs.emplace_back(derive_seed(seed, static_cast<std::uint64_t>(i)));
  std::vector<Matrix<Scalar>> partners(static_cast<std::size_t>(config.n_adaptive),
                                       Matrix<Scalar>(x.rows(), x.cols()));
  const Matrix<float>& images = pools.dataset().images();
  return pgd<Scalar>(
      [&](const Matrix<Scalar>& x_adv) {
        for (Index i = 0; i < x.rows(); ++i) {
          const std::vector<Index> draw =
              pools.draw(predicted[static_cast<std::size_t>(i)], config.n_adaptive, rngs[static_cast<std::size_t>(i)]);
          for (Index k = 0; k < config.n_adaptive; ++k)
            partners[static_cast<std::size_t>(k)].row(i) =
                images.row(draw[static_cast<std::size_t>(k)]).template cast<Scalar>();
        }
        return varmi_composition_grad(model, codec, x_adv, y, config.lambda_mi, partners);
      },
      x, budget, seed, false);
}

void SpsaConfig::validate() const {
  if (samples < 1) throw ConfigError("spsa samples must be >= 1");
  if (!(scale > 0)) throw ConfigError("spsa perturbation scale must be > 0");
}

void to_json(nlohmann::json& j, const SpsaConfig& c) {
  j = nlohmann::json{{"samples", c.samples}, {"scale", c.scale}};
}

void from_json(const nlohmann::json& j, SpsaConfig& c) {
  const SpsaConfig d;
  c.samples = j.value("samples", d.samples);
  c.scale = j.value("scale", d.scale);
}

template <typename Scalar>
Vector<Scalar> spsa_gradient(const std::function<Scalar(const Vector<Scalar>&)>& f, const Vector<Scalar>& x,
                             const SpsaConfig& config, Rng& rng) {
  config.validate();
  const auto c = static_cast<Scalar>(config.scale);
  Vector<double> g = Vector<double>::Zero(x.size());
  for (Index k = 0; k < config.samples; ++k) {
    const Vector<Scalar> v = rademacher_matrix<Scalar>(rng, x.size(), 1);
    const double diff = static_cast<double>(f(x + c * v)) - static_cast<double>(f(x - c * v));
    g += (diff / (2 * config.scale)) * v.template cast<double>();
  }
  return (g / static_cast<double>(config.samples)).template cast<Scalar>();
}

template <typename Scalar>
Matrix<Scalar> spsa(const Model<Scalar>& model, const Matrix<Scalar>& x, const std::vector<int>& y,
                    const AttackBudget& budget, const SpsaConfig& config, std::uint64_t seed) {
  config.validate();
  budget.validate();
  check_labels(x, y);
  const int k = model.num_classes();
  const auto c = static_cast<Scalar>(config.scale);
  Matrix<Scalar> out = x;
  if (budget.epsilon == 0) return out;
  const Index n = config.samples;
  for (Index i = 0; i < x.rows(); ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    const Matrix<Scalar> targets = one_hot<Scalar>(std::vector<int>(static_cast<std::size_t>(2 * n), y[static_cast<std::size_t>(i)]), k);
    const Matrix<Scalar> x0 = x.row(i);
    Matrix<Scalar> xi = x0;
    for (int s = 0; s < budget.steps; ++s) {
      // All antithetic probes of one step go through the network as one batch.
      const Matrix<Scalar> v = rademacher_matrix<Scalar>(rng, n, x.cols());
      Matrix<Scalar> probes(2 * n, x.cols());
      probes.topRows(n) = (c * v).rowwise() + xi.row(0);
      probes.bottomRows(n) = (-c * v).rowwise() + xi.row(0);
      const Vector<Scalar> losses = cross_entropy(model.logits(probes), targets).per_example;
      const Vector<Scalar> diff = (losses.head(n) - losses.tail(n)) / (2 * c);
      const Matrix<Scalar> g = (v.transpose() * diff).transpose();
      xi += static_cast<Scalar>(budget.alpha) * sign_of(g);
      project_linf(xi, x0, budget);
    }
    out.row(i) = xi;
  }
  return out;
}

#define VARMIX_INSTANTIATE_ATTACKS(S)                                                                           \
  template Matrix<S> fgsm<S>(const InputGradFn<S>&, const Matrix<S>&, const AttackBudget&);                     \
  template Matrix<S> pgd<S>(const InputGradFn<S>&, const Matrix<S>&, const AttackBudget&, std::uint64_t, bool); \
  template InputGradFn<S> cross_entropy_grad<S>(const Model<S>&, const std::vector<int>&, Mode);                \
  template Matrix<S> fgsm<S>(const Model<S>&, const Matrix<S>&, const std::vector<int>&, double);               \
  template Matrix<S> pgd<S>(const Model<S>&, const Matrix<S>&, const std::vector<int>&, const AttackBudget&,    \
                            std::uint64_t, bool, Mode);                                                         \
  template Matrix<S> pgd_targeted<S>(const Model<S>&, const Matrix<S>&, const std::vector<int>&,                \
                                     const AttackBudget&, std::uint64_t, bool);                                 \
  template std::vector<int> runner_up_classes<S>(const Model<S>&, const Matrix<S>&);                           \
  template Matrix<S> varmi_composition_grad<S>(const Model<S>&, const LatentCodec<S>&, const Matrix<S>&,        \
                                               const std::vector<int>&, double, const std::vector<Matrix<S>>&); \
  template S varmi_composition_loss<S>(const Model<S>&, const LatentCodec<S>&, const Matrix<S>&,                \
                                       const std::vector<int>&, double, const Matrix<S>&);                      \
  template Matrix<S> adaptive_pgd_varmi<S>(const Model<S>&, const LatentCodec<S>&, const Matrix<S>&,            \
                                           const std::vector<int>&, const AttackBudget&, const AdaptiveConfig&, \
                                           const ClassPools&, std::uint64_t);                                   \
  template Vector<S> spsa_gradient<S>(const std::function<S(const Vector<S>&)>&, const Vector<S>&,              \
                                      const SpsaConfig&, Rng&);                                                 \
  template Matrix<S> spsa<S>(const Model<S>&, const Matrix<S>&, const std::vector<int>&, const AttackBudget&,   \
                             const SpsaConfig&, std::uint64_t);

VARMIX_INSTANTIATE_ATTACKS(float)
VARMIX_INSTANTIATE_ATTACKS(double)

}  // namespace varmix
