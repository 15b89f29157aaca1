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

#pragma once

#include <cstdint>
#include <functional>

#include "varmix/model/loss.hpp"
#include "varmix/model/model.hpp"

namespace varmix {

template <typename Scalar>
struct LossGrad {
  Scalar value = 0;
  Vector<Scalar> per_example;
  Matrix<Scalar> logits;
  Matrix<Scalar> grad_input;
};

/// One forward/backward pass. Parameter gradients are accumulated into
/// `param_grad` when non-null; the tape is handed back when requested so the
/// caller can commit batch-norm statistics.
template <typename Scalar>
LossGrad<Scalar> loss_and_grad(const Model<Scalar>& model, const LossFn<Scalar>& loss,
                               const Matrix<Scalar>& x, const Matrix<Scalar>& targets, Mode mode,
                               Vector<Scalar>* param_grad = nullptr, Tape<Scalar>* tape = nullptr);

/// Gradient of the mean loss w.r.t. the input batch.
template <typename Scalar>
Matrix<Scalar> grad_input(const Model<Scalar>& model, const LossFn<Scalar>& loss,
                          const Matrix<Scalar>& x, const Matrix<Scalar>& targets,
                          Mode mode = Mode::kEval);

struct FiniteDiffOptions {
  double h = 1e-3;
  Index probes = 10;
  std::uint64_t seed = 0;
  // Probes are drawn among coordinates whose analytic gradient is at least
  // this fraction of the largest one; 0 probes uniformly.
  double probe_floor = 0.1;
  Mode mode = Mode::kEval;
};

/// Decides whether the segment between two probe points is free of kinks.
template <typename Scalar>
using ProbeFilter = std::function<bool(const Vector<Scalar>&, const Vector<Scalar>&)>;

/// max over probed i of |g_i - (f(x+h e_i) - f(x-h e_i)) / 2h| / (|g_i| + 1e-8).
/// Candidates rejected by `admissible` are skipped.
template <typename Scalar>
double finite_diff_check(const std::function<Scalar(const Vector<Scalar>&)>& f,
                         const Vector<Scalar>& at, const Vector<Scalar>& analytic,
                         const FiniteDiffOptions& options, const ProbeFilter<Scalar>& admissible = {});

enum class GradTarget { kInput, kParams };

/// Probes whose +h and -h points take different relu or max-pool branches
/// are skipped, so kinks never enter the comparison.
template <typename Scalar>
double finite_diff_check(const Model<Scalar>& model, const LossFn<Scalar>& loss,
                         const Matrix<Scalar>& x, const Matrix<Scalar>& targets,
                         const FiniteDiffOptions& options, GradTarget target = GradTarget::kInput);

}  // namespace varmix
