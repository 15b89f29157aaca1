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

#include <algorithm>
#include <cmath>

#include "varmix/core/errors.hpp"
#include "varmix/metrics/metrics.hpp"
#include "varmix/model/gradients.hpp"
#include "varmix/model/loss.hpp"

namespace varmix {

namespace {

double sign(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

// Clamp into the epsilon box and, optionally, keep x + d inside [0,1].
template <typename Derived>
void project(Eigen::MatrixBase<Derived>& d, const Eigen::Ref<const RowVector<double>>& x, double epsilon,
             bool unit) {
  for (Index j = 0; j < d.size(); ++j) {
    double v = std::clamp(d(j), -epsilon, epsilon);
    if (unit) v = std::clamp(x(j) + v, 0.0, 1.0) - x(j);
    d(j) = v;
  }
}

}  // namespace

void LinearityConfig::validate() const {
  if (steps < 0) throw ConfigError("linearity steps must be >= 0");
  if (!(step_fraction > 0)) throw ConfigError("linearity step fraction must be > 0");
}

void to_json(nlohmann::json& j, const LinearityConfig& c) {
  j = nlohmann::json{{"steps", c.steps},
                     {"step_fraction", c.step_fraction},
                     {"random_start", c.random_start},
                     {"clamp_to_unit", c.clamp_to_unit}};
}

void from_json(const nlohmann::json& j, LinearityConfig& c) {
  const LinearityConfig d;
  c.steps = j.value("steps", d.steps);
  c.step_fraction = j.value("step_fraction", d.step_fraction);
  c.random_start = j.value("random_start", d.random_start);
  c.clamp_to_unit = j.value("clamp_to_unit", d.clamp_to_unit);
  c.validate();
}

LinearityPoint local_linearity_error(const ScalarField& f, const Vector<double>& x, double epsilon,
                                     const LinearityConfig& config, Rng& rng, const Vector<double>* warm_start) {
  config.validate();
  if (!(epsilon >= 0)) throw InvalidArgument("linearity radius must be >= 0");
  LinearityPoint out{0.0, Vector<double>::Zero(x.size())};
  if (epsilon == 0) return out;
  if (warm_start != nullptr && warm_start->size() != x.size()) throw ShapeError("warm start does not match x");
  const RowVector<double> xr = x.transpose();
  const double f0 = f.value(x);
  const Vector<double> g0 = f.grad(x);
  auto gap = [&](const Vector<double>& d) { return f.value(x + d) - f0 - d.dot(g0); };

  Vector<double> d = Vector<double>::Zero(x.size());
  if (warm_start != nullptr) {
    d = *warm_start;
  } else if (config.random_start) {
    std::uniform_real_distribution<double> u(-epsilon, epsilon);
    for (Index j = 0; j < d.size(); ++j) d(j) = u(rng);
  }
  auto dt = d.transpose();
  project(dt, xr, epsilon, config.clamp_to_unit);
  double value = gap(d);
  out.gamma = std::abs(value);
  out.delta = d;
  const double alpha = config.step_fraction * epsilon;
  for (int s = 0; s < config.steps; ++s) {
    // d|gap|/dd = sign(gap) (grad f(x + d) - grad f(x)); at gap = 0 either side ascends.
    const double sg = value == 0 ? 1.0 : sign(value);
    const Vector<double> dir = sg * (f.grad(x + d) - g0);
    d += alpha * dir.unaryExpr([](double v) { return sign(v); });
    project(dt, xr, epsilon, config.clamp_to_unit);
    value = gap(d);
    if (std::abs(value) > out.gamma) {
      out.gamma = std::abs(value);
      out.delta = d;
    }
  }
  return out;
}

template <typename Scalar>
std::vector<LinearityPoint> local_linearity_errors(const Model<Scalar>& model, const Matrix<Scalar>& x,
                                                   const std::vector<int>& y, double epsilon,
                                                   const LinearityConfig& config, std::uint64_t seed,
                                                   const Matrix<double>& warm, Index first_row) {
  config.validate();
  if (!(epsilon >= 0)) throw InvalidArgument("linearity radius must be >= 0");
  if (x.rows() != static_cast<Index>(y.size())) throw ShapeError("inputs and labels differ in count");
  if (warm.size() != 0 && (warm.rows() != x.rows() || warm.cols() != x.cols()))
    throw ShapeError("warm start does not match the batch");
  const Index n = x.rows();
  std::vector<LinearityPoint> out(static_cast<std::size_t>(n), LinearityPoint{0.0, Vector<double>::Zero(x.cols())});
  if (epsilon == 0 || n == 0) return out;

  const Model<double> m = model.template cast<double>();
  const Matrix<double> xd = x.template cast<double>();
  const Matrix<double> targets = one_hot<double>(y, m.num_classes());
  const LossFn<double> loss = [](const Matrix<double>& z, const Matrix<double>& t) { return cross_entropy(z, t); };
  // Per-example losses and their input gradients; the mean-loss gradient is scaled back by n.
  auto eval = [&](const Matrix<double>& at) {
    LossGrad<double> r = loss_and_grad(m, loss, at, targets, Mode::kEval);
    r.grad_input *= static_cast<double>(n);
    return r;
  };
  const LossGrad<double> base = eval(xd);

  Matrix<double> d = Matrix<double>::Zero(n, x.cols());
  for (Index i = 0; i < n; ++i) {
    auto row = d.row(i);
    if (warm.size() != 0) {
      row = warm.row(i);
    } else if (config.random_start) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(first_row + i)));
      std::uniform_real_distribution<double> u(-epsilon, epsilon);
      for (Index j = 0; j < row.size(); ++j) row(j) = u(rng);
    }
    project(row, xd.row(i), epsilon, config.clamp_to_unit);
  }
  auto gaps = [&](const LossGrad<double>& r) {
    return Vector<double>(r.per_example - base.per_example - (d.cwiseProduct(base.grad_input)).rowwise().sum());
  };
  LossGrad<double> cur = eval(xd + d);
  Vector<double> value = gaps(cur);
  for (Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = {std::abs(value(i)), d.row(i).transpose()};
  const double alpha = config.step_fraction * epsilon;
  for (int s = 0; s < config.steps; ++s) {
    for (Index i = 0; i < n; ++i) {
      const double sg = value(i) == 0 ? 1.0 : sign(value(i));
      auto row = d.row(i);
      row += alpha * (sg * (cur.grad_input.row(i) - base.grad_input.row(i))).unaryExpr([](double v) { return sign(v); });
      project(row, xd.row(i), epsilon, config.clamp_to_unit);
    }
    cur = eval(xd + d);
    value = gaps(cur);
    for (Index i = 0; i < n; ++i) {
      LinearityPoint& p = out[static_cast<std::size_t>(i)];
      if (std::abs(value(i)) > p.gamma) p = {std::abs(value(i)), d.row(i).transpose()};
    }
  }
  return out;
}

std::vector<double> default_linearity_grid() {
  return {1.0 / 255.0, 2.0 / 255.0, 4.0 / 255.0, 8.0 / 255.0, 16.0 / 255.0};
}

template <typename Scalar>
LinearityCurve linearity_curve(const Model<Scalar>& model, const Dataset& data, std::vector<double> epsilons,
                               const LinearityConfig& config, std::uint64_t seed, Index batch_size) {
  if (epsilons.empty()) throw InvalidArgument("linearity curve needs at least one radius");
  if (data.size() == 0) throw InvalidArgument("linearity curve on an empty dataset");
  if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
  std::sort(epsilons.begin(), epsilons.end());
  LinearityCurve out;
  out.epsilons = epsilons;
  out.mean_gamma.assign(epsilons.size(), 0.0);
  for (Index first = 0; first < data.size(); first += batch_size) {
    const Index n = std::min(batch_size, data.size() - first);
    std::vector<Index> idx(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = first + i;
    const Matrix<Scalar> x = data.gather<Scalar>(idx);
    const std::vector<int> y = data.gather_labels(idx);
    Matrix<double> warm;
    for (std::size_t e = 0; e < epsilons.size(); ++e) {
      const std::vector<LinearityPoint> pts = local_linearity_errors(model, x, y, epsilons[e], config, seed, warm, first);
      warm.resize(n, x.cols());
      for (Index i = 0; i < n; ++i) {
        out.mean_gamma[e] += pts[static_cast<std::size_t>(i)].gamma;
        warm.row(i) = pts[static_cast<std::size_t>(i)].delta.transpose();
      }
    }
  }
  for (double& g : out.mean_gamma) g /= static_cast<double>(data.size());
  return out;
}

#define VARMIX_INSTANTIATE_LINEARITY(S)                                                                           \
  template std::vector<LinearityPoint> local_linearity_errors<S>(const Model<S>&, const Matrix<S>&,               \
                                                                 const std::vector<int>&, double,                 \
                                                                 const LinearityConfig&, std::uint64_t,           \
                                                                 const Matrix<double>&, Index);                   \
  template LinearityCurve linearity_curve<S>(const Model<S>&, const Dataset&, std::vector<double>,               \
                                             const LinearityConfig&, std::uint64_t, Index);

VARMIX_INSTANTIATE_LINEARITY(float)
VARMIX_INSTANTIATE_LINEARITY(double)

}  // namespace varmix
