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

#include <string_view>

#include <json.hpp>

#include "varmix/inference/pool.hpp"
#include "varmix/model/model.hpp"
#include "varmix/vae/codec.hpp"

namespace varmix {

enum class InferenceVariant { kPlain, kMiOl, kVarMi };

std::string_view to_string(InferenceVariant variant);
InferenceVariant inference_variant_from_string(std::string_view name);

/// Space in which the N_MI per-draw outputs are averaged.
enum class Averaging { kProbs, kLogits };

std::string_view to_string(Averaging averaging);
Averaging averaging_from_string(std::string_view name);

struct InferencePolicy {
  InferenceVariant variant = InferenceVariant::kPlain;
  double lambda_mi = 0.5;
  Index n_mi = 30;
  Averaging averaging = Averaging::kProbs;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const InferencePolicy&) const = default;
};

void to_json(nlohmann::json& j, const InferencePolicy& p);
void from_json(const nlohmann::json& j, InferencePolicy& p);

/// Model outputs in the policy's averaging space (softmax or raw logits).
template <typename Scalar>
Matrix<Scalar> plain_predict(const Model<Scalar>& model, const Matrix<Scalar>& x, Averaging averaging);

/// Mean over N_MI pool draws of F(lambda * x + (1 - lambda) * x_s), where x_s
/// never carries the class predicted for x by one plain forward pass. Row i
/// draws from the stream derive_seed(policy.seed, first_row + i).
template <typename Scalar>
Matrix<Scalar> mi_ol_predict(const Model<Scalar>& model, const Matrix<Scalar>& x, const InferencePolicy& policy,
                             const ClassPools& pools, Index first_row = 0);

/// As mi_ol_predict, mixing encoder means and classifying the decoded mixture.
template <typename Scalar>
Matrix<Scalar> varmi_predict(const Model<Scalar>& model, const LatentCodec<Scalar>& codec, const Matrix<Scalar>& x,
                             const InferencePolicy& policy, const ClassPools& pools, Index first_row = 0);

/// Dispatches on policy.variant; `codec` is required for var-mi, `pools` for both MI variants.
template <typename Scalar>
Matrix<Scalar> defended_predict(const Model<Scalar>& model, const LatentCodec<Scalar>* codec,
                                const Matrix<Scalar>& x, const InferencePolicy& policy, const ClassPools* pools,
                                Index first_row = 0);

}  // namespace varmix
