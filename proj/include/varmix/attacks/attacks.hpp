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

#include <functional>
#include <vector>

#include <json.hpp>

#include "varmix/core/budget.hpp"
#include "varmix/inference/pool.hpp"
#include "varmix/model/model.hpp"
#include "varmix/vae/codec.hpp"

namespace varmix {

/// Gradient of an attack objective w.r.t. the input batch; the attacker ascends it.
template <typename Scalar>
using InputGradFn = std::function<Matrix<Scalar>(const Matrix<Scalar>&)>;

/// x + epsilon * sign(grad(x)), clamped.
template <typename Scalar>
Matrix<Scalar> fgsm(const InputGradFn<Scalar>& grad, const Matrix<Scalar>& x, const AttackBudget& budget);

/// Signed ascent with per-step projection. With random_start, row i starts at a
/// uniform point of its ball drawn from derive_seed(seed, i).
template <typename Scalar>
Matrix<Scalar> pgd(const InputGradFn<Scalar>& grad, const Matrix<Scalar>& x, const AttackBudget& budget,
                   std::uint64_t seed, bool random_start = false);

/// Gradient of the mean cross-entropy w.r.t. the input.
template <typename Scalar>
InputGradFn<Scalar> cross_entropy_grad(const Model<Scalar>& model, const std::vector<int>& labels,
                                       Mode mode = Mode::kEval);

template <typename Scalar>
Matrix<Scalar> fgsm(const Model<Scalar>& model, const Matrix<Scalar>& x, const std::vector<int>& y, double epsilon);

template <typename Scalar>
Matrix<Scalar> pgd(const Model<Scalar>& model, const Matrix<Scalar>& x, const std::vector<int>& y,
                   const AttackBudget& budget, std::uint64_t seed, bool random_start = false,
                   Mode mode = Mode::kEval);

/// Signed descent on the cross-entropy toward `target`.
template <typename Scalar>
Matrix<Scalar> pgd_targeted(const Model<Scalar>& model, const Matrix<Scalar>& x, const std::vector<int>& target,
                            const AttackBudget& budget, std::uint64_t seed, bool random_start = false);

/// Second most likely class of each row.
template <typename Scalar>
std::vector<int> runner_up_classes(const Model<Scalar>& model, const Matrix<Scalar>& x);

struct AdaptiveConfig {
  Index n_adaptive = 1;
  double lambda_mi = 0.5;

  void validate() const;
  bool operator==(const AdaptiveConfig&) const = default;
};

void to_json(nlohmann::json& j, const AdaptiveConfig& c);
void from_json(const nlohmann::json& j, AdaptiveConfig& c);

/// Sum over the given partner batches of the input gradient of
/// CE(F(decode(lambda * encode_mean(x) + (1 - lambda) * encode_mean(x_s))), y).
template <typename Scalar>
Matrix<Scalar> varmi_composition_grad(const Model<Scalar>& model, const LatentCodec<Scalar>& codec,
                                      const Matrix<Scalar>& x, const std::vector<int>& y, double lambda_mi,
                                      const std::vector<Matrix<Scalar>>& partners);

/// Mean cross-entropy of the same composition for one partner batch.
template <typename Scalar>
Scalar varmi_composition_loss(const Model<Scalar>& model, const LatentCodec<Scalar>& codec, const Matrix<Scalar>& x,
                              const std::vector<int>& y, double lambda_mi, const Matrix<Scalar>& partners);

/// PGD through the VarMI pipeline. Each step draws n_adaptive fresh partners per
/// row from the other-label pool of the row's clean prediction (fixed at the
/// start) and ascends the sign of the summed composition gradient.
template <typename Scalar>
Matrix<Scalar> adaptive_pgd_varmi(const Model<Scalar>& model, const LatentCodec<Scalar>& codec,
                                  const Matrix<Scalar>& x, const std::vector<int>& y, const AttackBudget& budget,
                                  const AdaptiveConfig& config, const ClassPools& pools, std::uint64_t seed);

struct SpsaConfig {
  Index samples = 128;  // antithetic pairs per gradient estimate
  double scale = 0.01;

  void validate() const;
  bool operator==(const SpsaConfig&) const = default;
};

void to_json(nlohmann::json& j, const SpsaConfig& c);
void from_json(const nlohmann::json& j, SpsaConfig& c);

/// Mean of (f(x + c v) - f(x - c v)) / (2c) * v over Rademacher v.
template <typename Scalar>
Vector<Scalar> spsa_gradient(const std::function<Scalar(const Vector<Scalar>&)>& f, const Vector<Scalar>& x,
                             const SpsaConfig& config, Rng& rng);

/// PGD driven by per-example SPSA estimates of the cross-entropy gradient.
template <typename Scalar>
Matrix<Scalar> spsa(const Model<Scalar>& model, const Matrix<Scalar>& x, const std::vector<int>& y,
                    const AttackBudget& budget, const SpsaConfig& config, std::uint64_t seed);

}  // namespace varmix
