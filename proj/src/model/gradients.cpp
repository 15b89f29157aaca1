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

#include "varmix/model/gradients.hpp"

#include <algorithm>
#include <cmath>

#include "varmix/core/errors.hpp"
#include "varmix/core/random.hpp"

namespace varmix {

template <typename Scalar>
LossGrad<Scalar> loss_and_grad(const Model<Scalar>& model, const LossFn<Scalar>& loss,
                               const Matrix<Scalar>& x, const Matrix<Scalar>& targets, Mode mode,
                               Vector<Scalar>* param_grad, Tape<Scalar>* tape) {
  Tape<Scalar> local;
  Tape<Scalar>& t = tape != nullptr ? *tape : local;
  LossGrad<Scalar> out;
  out.logits = model.net().forward(x, mode, &t);
  LossResult<Scalar> l = loss(out.logits, targets);
  out.value = l.value;
  out.per_example = std::move(l.per_example);
  out.grad_input = model.net().backward(l.grad, t, param_grad);
  return out;
}

template <typename Scalar>
Matrix<Scalar> grad_input(const Model<Scalar>& model, const LossFn<Scalar>& loss,
                          const Matrix<Scalar>& x, const Matrix<Scalar>& targets, Mode mode) {
  return loss_and_grad(model, loss, x, targets, mode).grad_input;
}

template <typename Scalar>
double finite_diff_check(const std::function<Scalar(const Vector<Scalar>&)>& f,
                         const Vector<Scalar>& at, const Vector<Scalar>& analytic,
                         const FiniteDiffOptions& options, const ProbeFilter<Scalar>& admissible) {
  if (!(options.h > 0)) throw InvalidArgument("finite difference step must be > 0");
  if (options.probes < 1) throw InvalidArgument("finite difference check needs at least one probe");
  if (at.size() != analytic.size()) throw ShapeError("analytic gradient does not match the point");
  if (at.size() == 0) throw InvalidArgument("finite difference check on an empty point");

  const double gmax = analytic.cwiseAbs().maxCoeff();
  std::vector<Index> candidates;
  for (Index i = 0; i < at.size(); ++i)
    if (gmax == 0.0 || std::abs(static_cast<double>(analytic[i])) >= options.probe_floor * gmax)
      candidates.push_back(i);
  Rng rng(derive_seed(options.seed, "finite-diff-probes"));
  const std::vector<Index> order = random_permutation(rng, static_cast<Index>(candidates.size()));

  const auto h = static_cast<Scalar>(options.h);
  double worst = 0.0;
  Index used = 0;
  Vector<Scalar> plus = at;
  Vector<Scalar> minus = at;
  for (std::size_t p = 0; p < order.size() && used < options.probes; ++p) {
    const Index i = candidates[static_cast<std::size_t>(order[p])];
    plus[i] = at[i] + h;
    minus[i] = at[i] - h;
    const bool ok = !admissible || admissible(plus, minus);
    const double up = ok ? static_cast<double>(f(plus)) : 0.0;
    const double down = ok ? static_cast<double>(f(minus)) : 0.0;
    plus[i] = at[i];
    minus[i] = at[i];
    if (!ok) continue;
    ++used;
    // The realized step, not h, divides: at + h may round in low precision.
    const double step = static_cast<double>(at[i] + h) - static_cast<double>(at[i] - h);
    const double numeric = (up - down) / step;
    const double a = static_cast<double>(analytic[i]);
    worst = std::max(worst, std::abs(a - numeric) / (std::abs(a) + 1e-8));
  }
  if (used == 0) throw InvalidArgument("finite difference check found no probe free of kinks; reduce h");
  return worst;
}

template <typename Scalar>
double finite_diff_check(const Model<Scalar>& model, const LossFn<Scalar>& loss,
                         const Matrix<Scalar>& x, const Matrix<Scalar>& targets,
                         const FiniteDiffOptions& options, GradTarget target) {
  if (options.probes < 1) throw InvalidArgument("finite difference check needs at least one probe");
  const Index rows = x.rows();
  const Index cols = x.cols();
  auto pattern = [&](const Matrix<Scalar>& xv) {
    Tape<Scalar> tape;
    model.net().forward(xv, options.mode, &tape);
    return model.net().activation_pattern(tape);
  };
  if (target == GradTarget::kInput) {
    const Matrix<Scalar> g = grad_input(model, loss, x, targets, options.mode);
    const Vector<Scalar> at = Eigen::Map<const Vector<Scalar>>(x.data(), x.size());
    const Vector<Scalar> analytic = Eigen::Map<const Vector<Scalar>>(g.data(), g.size());
    auto f = [&](const Vector<Scalar>& v) {
      const Matrix<Scalar> xv = Eigen::Map<const Matrix<Scalar>>(v.data(), rows, cols);
      return loss(model.net().forward(xv, options.mode), targets).value;
    };
    auto same_branches = [&](const Vector<Scalar>& a, const Vector<Scalar>& b) {
      return pattern(Eigen::Map<const Matrix<Scalar>>(a.data(), rows, cols)) ==
             pattern(Eigen::Map<const Matrix<Scalar>>(b.data(), rows, cols));
    };
    return finite_diff_check<Scalar>(f, at, analytic, options, same_branches);
  }
  Vector<Scalar> grad = Vector<Scalar>::Zero(model.net().params().size());
  loss_and_grad(model, loss, x, targets, options.mode, &grad);
  const Network<Scalar>& net = model.net();
  auto f = [&](const Vector<Scalar>& w) { return loss(net.forward_with_params(x, w, options.mode), targets).value; };
  auto pattern_at = [&](const Vector<Scalar>& w) {
    Tape<Scalar> tape;
    net.forward_with_params(x, w, options.mode, &tape);
    return net.activation_pattern(tape);
  };
  auto same_branches = [&](const Vector<Scalar>& a, const Vector<Scalar>& b) { return pattern_at(a) == pattern_at(b); };
  return finite_diff_check<Scalar>(f, model.net().params(), grad, options, same_branches);
}

#define VARMIX_INSTANTIATE_GRADIENTS(S)                                                           \
  template LossGrad<S> loss_and_grad<S>(const Model<S>&, const LossFn<S>&, const Matrix<S>&,     \
                                        const Matrix<S>&, Mode, Vector<S>*, Tape<S>*);           \
  template Matrix<S> grad_input<S>(const Model<S>&, const LossFn<S>&, const Matrix<S>&,          \
                                   const Matrix<S>&, Mode);                                      \
  template double finite_diff_check<S>(const std::function<S(const Vector<S>&)>&,                \
                                       const Vector<S>&, const Vector<S>&,                       \
                                       const FiniteDiffOptions&, const ProbeFilter<S>&);         \
  template double finite_diff_check<S>(const Model<S>&, const LossFn<S>&, const Matrix<S>&,      \
                                       const Matrix<S>&, const FiniteDiffOptions&, GradTarget);

VARMIX_INSTANTIATE_GRADIENTS(float)
VARMIX_INSTANTIATE_GRADIENTS(double)

}  // namespace varmix
