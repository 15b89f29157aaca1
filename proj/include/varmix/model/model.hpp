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

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "varmix/core/errors.hpp"
#include "varmix/model/network.hpp"

namespace varmix {

enum class Architecture { kSmallCnn, kThinResnet };

std::string_view to_string(Architecture arch);
Architecture architecture_from_string(std::string_view name);

struct ModelConfig {
  Architecture architecture = Architecture::kSmallCnn;
  int num_classes = 10;
  double width = 1.0;
  std::uint64_t seed = 0;
  TensorShape input_shape{1, 28, 28};
  // thin_resnet only: residual blocks per stage.
  std::vector<int> stage_blocks{2, 2, 2, 2};

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// A classifier: architecture config plus the network carrying its weights.
template <typename Scalar>
class Model {
 public:
  Model(ModelConfig config, Network<Scalar> net) : config_(std::move(config)), net_(std::move(net)) {}

  const ModelConfig& config() const { return config_; }
  Network<Scalar>& net() { return net_; }
  const Network<Scalar>& net() const { return net_; }
  int num_classes() const { return config_.num_classes; }
  const TensorShape& input_shape() const { return config_.input_shape; }

  Matrix<Scalar> logits(const Matrix<Scalar>& x) const { return net_.forward(x, Mode::kEval); }
  Matrix<Scalar> hidden(const Matrix<Scalar>& x, Index k, Mode mode = Mode::kEval) const {
    return net_.hidden(x, k, mode);
  }

  /// Same architecture in another precision, with weights converted. The
  /// network is rebuilt from the config, so it must be one build_model makes.
  template <typename To>
  Model<To> cast() const;

 private:
  ModelConfig config_;
  Network<Scalar> net_;
};

/// Layer set eligible for hidden-space mixing.
inline constexpr std::array<Index, 3> kManifoldMixupLayers{0, 1, 2};

template <typename Scalar>
Model<Scalar> build_model(const ModelConfig& config);

template <typename Scalar>
template <typename To>
Model<To> Model<Scalar>::cast() const {
  Model<To> out = build_model<To>(config_);
  bool same = out.net().num_layers() == net_.num_layers() && out.net().params().size() == net_.params().size() &&
              out.net().buffers().size() == net_.buffers().size();
  for (Index i = 0; same && i < net_.num_layers(); ++i) same = out.net().layer(i).kind() == net_.layer(i).kind();
  if (!same) throw InvalidArgument("cast needs a model whose network is the one its config builds");
  out.net().params() = net_.params().template cast<To>();
  out.net().buffers() = net_.buffers().template cast<To>();
  return out;
}

/// Predicted class per row.
template <typename Scalar>
std::vector<int> argmax_rows(const Matrix<Scalar>& m);

}  // namespace varmix
