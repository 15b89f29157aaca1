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

#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "varmix/core/random.hpp"
#include "varmix/data/dataset.hpp"
#include "varmix/model/model.hpp"
#include "varmix/vae/codec.hpp"

namespace varmix {

enum class MixSource { kInput, kLatent, kHidden };

std::string_view to_string(MixSource source);
MixSource mix_source_from_string(std::string_view name);

struct MixupConfig {
  double eta = 1.0;
  MixSource source = MixSource::kInput;
  // Replaces every Beta draw when set; the draws still happen so the random
  // stream is the same as with sampling.
  std::optional<double> fixed_lambda;

  void validate() const;
  bool operator==(const MixupConfig&) const = default;
};

void to_json(nlohmann::json& j, const MixupConfig& c);
void from_json(const nlohmann::json& j, MixupConfig& c);

template <typename Scalar>
struct VicinalSample {
  Vector<Scalar> x;
  Vector<Scalar> y;
  double lambda = 1.0;
};

/// lambda ~ Beta(eta, eta).
double sample_lambda(double eta, Rng& rng);
double sample_lambda(const MixupConfig& config, std::uint64_t seed);

template <typename Scalar>
VicinalSample<Scalar> mixup_pair(const LabeledExample& a, const LabeledExample& b, double lambda, int num_classes);

template <typename Scalar>
VicinalSample<Scalar> varmixup_pair(const LabeledExample& a, const LabeledExample& b, double lambda,
                                    const LatentCodec<Scalar>& codec, int num_classes);

template <typename Scalar>
VicinalSample<Scalar> varerm_sample(const LabeledExample& a, const LatentCodec<Scalar>& codec, int num_classes);

/// Within-batch pairing: row i is mixed with row partner[i] using lambda[i].
struct MixPlan {
  std::vector<Index> partner;
  std::vector<double> lambda;

  Index size() const { return static_cast<Index>(partner.size()); }
};

/// A seeded permutation of the batch and one lambda per row.
MixPlan draw_mix_plan(Rng& rng, Index n, const MixupConfig& config);

/// Rows lambda_i * a_i + (1 - lambda_i) * a_partner(i).
template <typename Scalar>
Matrix<Scalar> mix_rows(const Matrix<Scalar>& a, const MixPlan& plan);

/// Adjoint of mix_rows: the gradient w.r.t. a given the gradient w.r.t. the mixture.
template <typename Scalar>
Matrix<Scalar> mix_rows_adjoint(const Matrix<Scalar>& g, const MixPlan& plan);

template <typename Scalar>
struct MixedBatch {
  Matrix<Scalar> x;
  Matrix<Scalar> y;
};

template <typename Scalar>
MixedBatch<Scalar> mixup_batch(const Matrix<Scalar>& x, const Matrix<Scalar>& y, const MixPlan& plan);

/// Encoder means are mixed and decoded; every output row comes from the decoder.
template <typename Scalar>
MixedBatch<Scalar> varmixup_batch(const LatentCodec<Scalar>& codec, const Matrix<Scalar>& x,
                                  const Matrix<Scalar>& y, const MixPlan& plan);

/// Logits of the network continued from lambda_i * h_k(a_i) + (1 - lambda_i) * h_k(b_i).
template <typename Scalar>
Matrix<Scalar> manifold_mixup_logits(const Model<Scalar>& model, const Matrix<Scalar>& a, const Matrix<Scalar>& b,
                                     const std::vector<double>& lambda, Index layer);

/// Lays images out on a grid, one tile per row of `images`.
void write_image_grid(const std::filesystem::path& path, const Matrix<float>& images, const TensorShape& shape,
                      Index columns = 8, int scale = 2);

}  // namespace varmix
