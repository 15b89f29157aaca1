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

#include "varmix/inference/inference.hpp"

#include "varmix/core/errors.hpp"
#include "varmix/model/loss.hpp"

namespace varmix {

std::string_view to_string(InferenceVariant variant) {
  switch (variant) {
    case InferenceVariant::kPlain:
      return "plain";
    case InferenceVariant::kMiOl:
      return "mi-ol";
    case InferenceVariant::kVarMi:
      return "var-mi";
  }
  return "plain";
}

InferenceVariant inference_variant_from_string(std::string_view name) {
  if (name == "plain") return InferenceVariant::kPlain;
  if (name == "mi-ol" || name == "mi_ol") return InferenceVariant::kMiOl;
  if (name == "var-mi" || name == "var_mi") return InferenceVariant::kVarMi;
  throw ConfigError("unknown inference variant '" + std::string(name) + "' (expected plain, mi-ol or var-mi)");
}

std::string_view to_string(Averaging averaging) { return averaging == Averaging::kProbs ? "probs" : "logits"; }

Averaging averaging_from_string(std::string_view name) {
  if (name == "probs") return Averaging::kProbs;
  if (name == "logits") return Averaging::kLogits;
  throw ConfigError("unknown averaging '" + std::string(name) + "' (expected probs or logits)");
}

void InferencePolicy::validate() const {
  if (!(lambda_mi >= 0 && lambda_mi <= 1)) throw ConfigError("inference lambda_mi must lie in [0, 1]");
  if (n_mi < 1) throw ConfigError("inference n_mi must be >= 1");
}

void to_json(nlohmann::json& j, const InferencePolicy& p) {
  j = nlohmann::json{{"variant", std::string(to_string(p.variant))},
                     {"lambda_mi", p.lambda_mi},
                     {"n_mi", p.n_mi},
                     {"averaging", std::string(to_string(p.averaging))},
                     {"seed", p.seed}};
}

void from_json(const nlohmann::json& j, InferencePolicy& p) {
  const InferencePolicy d;
  p.variant = inference_variant_from_string(j.value("variant", std::string(to_string(d.variant))));
  p.lambda_mi = j.value("lambda_mi", d.lambda_mi);
  p.n_mi = j.value("n_mi", d.n_mi);
  p.averaging = averaging_from_string(j.value("averaging", std::string(to_string(d.averaging))));
  p.seed = j.value("seed", d.seed);
}

template <typename Scalar>
Matrix<Scalar> plain_predict(const Model<Scalar>& model, const Matrix<Scalar>& x, Averaging averaging) {
  Matrix<Scalar> z = model.logits(x);
  return averaging == Averaging::kProbs ? softmax(z) : z;
}

namespace {

template <typename Scalar>
using MixFn = std::function<Matrix<Scalar>(const Matrix<Scalar>& partners)>;

// Shared draw-and-average loop. The incremental mean keeps identical draws
// bitwise equal to a single draw.
template <typename Scalar>
Matrix<Scalar> mixup_inference(const Model<Scalar>& model, const Matrix<Scalar>& x, const InferencePolicy& policy,
                               const ClassPools& pools, Index first_row, const MixFn<Scalar>& classify_mixture) {
  policy.validate();
  if (x.rows() == 0) throw InvalidArgument("empty batch");
  if (x.cols() != pools.dataset().shape().size()) throw ShapeError("pool images do not match the input shape");
  const std::vector<int> predicted = argmax_rows(model.logits(x));
  std::vector<std::vector<Index>> draws(static_cast<std::size_t>(x.rows()));
  for (Index i = 0; i < x.rows(); ++i) {
    Rng rng(derive_seed(policy.seed, static_cast<std::uint64_t>(first_row + i)));
    draws[static_cast<std::size_t>(i)] = pools.draw(predicted[static_cast<std::size_t>(i)], policy.n_mi, rng);
  }
  Matrix<Scalar> mean;
  Matrix<Scalar> partners(x.rows(), x.cols());
  for (Index k = 0; k < policy.n_mi; ++k) {
    for (Index i = 0; i < x.rows(); ++i)
      partners.row(i) = pools.dataset()
                            .images()
                            .row(draws[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)])
                            .template cast<Scalar>();
    Matrix<Scalar> out = classify_mixture(partners);
    if (policy.averaging == Averaging::kProbs) out = softmax(out);
    if (k == 0)
      mean = std::move(out);
    else
      mean += (out - mean) / static_cast<Scalar>(k + 1);
  }
  return mean;
}

}  // namespace

template <typename Scalar>
Matrix<Scalar> mi_ol_predict(const Model<Scalar>& model, const Matrix<Scalar>& x, const InferencePolicy& policy,
                             const ClassPools& pools, Index first_row) {
  const auto l = static_cast<Scalar>(policy.lambda_mi);
  const auto m = static_cast<Scalar>(1 - policy.lambda_mi);
  return mixup_inference<Scalar>(model, x, policy, pools, first_row,
                                 [&](const Matrix<Scalar>& xs) { return model.logits(l * x + m * xs); });
}

template <typename Scalar>
Matrix<Scalar> varmi_predict(const Model<Scalar>& model, const LatentCodec<Scalar>& codec, const Matrix<Scalar>& x,
                             const InferencePolicy& policy, const ClassPools& pools, Index first_row) {
  const auto l = static_cast<Scalar>(policy.lambda_mi);
  const auto m = static_cast<Scalar>(1 - policy.lambda_mi);
  const Matrix<Scalar> zx = codec.encode_mean(x);
  return mixup_inference<Scalar>(model, x, policy, pools, first_row, [&](const Matrix<Scalar>& xs) {
    return model.logits(codec.decode_mean(l * zx + m * codec.encode_mean(xs)));
  });
}

template <typename Scalar>
Matrix<Scalar> defended_predict(const Model<Scalar>& model, const LatentCodec<Scalar>* codec,
                                const Matrix<Scalar>& x, const InferencePolicy& policy, const ClassPools* pools,
                                Index first_row) {
  switch (policy.variant) {
    case InferenceVariant::kPlain:
      return plain_predict(model, x, policy.averaging);
    case InferenceVariant::kMiOl:
      if (pools == nullptr) throw ConfigError("mi-ol inference needs a sample pool");
      return mi_ol_predict(model, x, policy, *pools, first_row);
    case InferenceVariant::kVarMi:
      if (pools == nullptr) throw ConfigError("var-mi inference needs a sample pool");
      if (codec == nullptr) throw ConfigError("var-mi inference needs a VAE");
      return varmi_predict(model, *codec, x, policy, *pools, first_row);
  }
  throw ConfigError("unknown inference variant");
}

#define VARMIX_INSTANTIATE_INFERENCE(S)                                                                    \
  template Matrix<S> plain_predict<S>(const Model<S>&, const Matrix<S>&, Averaging);                      \
  template Matrix<S> mi_ol_predict<S>(const Model<S>&, const Matrix<S>&, const InferencePolicy&,          \
                                      const ClassPools&, Index);                                           \
  template Matrix<S> varmi_predict<S>(const Model<S>&, const LatentCodec<S>&, const Matrix<S>&,           \
                                      const InferencePolicy&, const ClassPools&, Index);                   \
  template Matrix<S> defended_predict<S>(const Model<S>&, const LatentCodec<S>*, const Matrix<S>&,        \
                                         const InferencePolicy&, const ClassPools*, Index);

VARMIX_INSTANTIATE_INFERENCE(float)
VARMIX_INSTANTIATE_INFERENCE(double)

}  // namespace varmix
