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

#include "varmix/model/model.hpp"

#include <cmath>

#include "varmix/core/errors.hpp"

namespace varmix {

std::string_view to_string(Architecture arch) {
  switch (arch) {
    case Architecture::kSmallCnn: return "small_cnn";
    case Architecture::kThinResnet: return "thin_resnet";
  }
  return "?";
}

Architecture architecture_from_string(std::string_view name) {
  if (name == "small_cnn") return Architecture::kSmallCnn;
  if (name == "thin_resnet") return Architecture::kThinResnet;
  throw ConfigError("unknown architecture '" + std::string(name) + "' (expected small_cnn or thin_resnet)");
}

void ModelConfig::validate() const {
  if (!(width > 0.0)) throw ConfigError("model.width must be > 0");
  if (num_classes < 2) throw ConfigError("model.num_classes must be >= 2");
  if (input_shape.size() < 1) throw ConfigError("model.input_shape must be nonempty");
  if (architecture == Architecture::kThinResnet) {
    if (stage_blocks.size() != 4) throw ConfigError("model.stage_blocks needs four entries");
    for (int b : stage_blocks)
      if (b < 1) throw ConfigError("model.stage_blocks entries must be >= 1");
  }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"architecture", std::string(to_string(c.architecture))},
                     {"num_classes", c.num_classes},
                     {"width", c.width},
                     {"seed", c.seed},
                     {"input_shape", {c.input_shape.channels, c.input_shape.height, c.input_shape.width}},
                     {"stage_blocks", c.stage_blocks}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.architecture = architecture_from_string(j.value("architecture", std::string(to_string(d.architecture))));
  c.num_classes = j.value("num_classes", d.num_classes);
  c.width = j.value("width", d.width);
  c.seed = j.value("seed", d.seed);
  if (j.contains("input_shape")) {
    const auto s = j.at("input_shape").get<std::vector<Index>>();
    if (s.size() != 3) throw ConfigError("model.input_shape needs [channels, height, width]");
    c.input_shape = {s[0], s[1], s[2]};
  } else {
    c.input_shape = d.input_shape;
  }
  c.stage_blocks = j.value("stage_blocks", d.stage_blocks);
}

namespace {

Index scaled(double base, double width) {
  return std::max<Index>(1, static_cast<Index>(std::lround(base * width)));
}

template <typename Scalar>
std::vector<typename Network<Scalar>::Block> small_cnn(const ModelConfig& c) {
  using Block = typename Network<Scalar>::Block;
  std::vector<Block> blocks(4);
  TensorShape s = c.input_shape;
  auto push = [&](Block& b, LayerPtr<Scalar> l) {
    s = l->output_shape();
    b.push_back(std::move(l));
  };
  push(blocks[0], make_conv2d<Scalar>(s, {scaled(16, c.width), 3, 1, 1, true}));
  push(blocks[0], make_relu<Scalar>(s));
  push(blocks[0], make_max_pool2d<Scalar>(s, 2));
  push(blocks[1], make_conv2d<Scalar>(s, {scaled(32, c.width), 3, 1, 1, true}));
  push(blocks[1], make_relu<Scalar>(s));
  push(blocks[1], make_max_pool2d<Scalar>(s, 2));
  push(blocks[2], make_linear<Scalar>(s, scaled(128, c.width)));
  push(blocks[2], make_relu<Scalar>(s));
  push(blocks[3], make_linear<Scalar>(s, c.num_classes));
  return blocks;
}

template <typename Scalar>
std::vector<typename Network<Scalar>::Block> thin_resnet(const ModelConfig& c) {
  using Block = typename Network<Scalar>::Block;
  std::vector<Block> blocks(4);
  TensorShape s = c.input_shape;
  auto push = [&](Block& b, LayerPtr<Scalar> l) {
    s = l->output_shape();
    b.push_back(std::move(l));
  };
  const Index base = scaled(64, c.width);
  push(blocks[0], make_conv2d<Scalar>(s, {base, 3, 1, 1, false}));
  push(blocks[0], make_batch_norm2d<Scalar>(s));
  push(blocks[0], make_relu<Scalar>(s));
  for (int stage = 0; stage < 4; ++stage) {
    const Index channels = base << stage;
    for (int i = 0; i < c.stage_blocks[static_cast<std::size_t>(stage)]; ++i) {
      const Index stride = (stage > 0 && i == 0) ? 2 : 1;
      push(blocks[static_cast<std::size_t>(stage)], make_basic_residual_block<Scalar>(s, channels, stride));
    }
  }
  push(blocks[3], make_global_avg_pool<Scalar>(s));
  push(blocks[3], make_linear<Scalar>(s, c.num_classes));
  return blocks;
}

}  // namespace

template <typename Scalar>
Model<Scalar> build_model(const ModelConfig& config) {
  config.validate();
  std::vector<typename Network<Scalar>::Block> blocks;
  switch (config.architecture) {
    case Architecture::kSmallCnn: blocks = small_cnn<Scalar>(config); break;
    case Architecture::kThinResnet: blocks = thin_resnet<Scalar>(config); break;
  }
  Network<Scalar> net(config.input_shape, std::move(blocks));
  net.initialize(derive_seed(config.seed, "model-init"));
  return Model<Scalar>(config, std::move(net));
}

template <typename Scalar>
std::vector<int> argmax_rows(const Matrix<Scalar>& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Index i = 0; i < m.rows(); ++i) {
    Index best = 0;
    m.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

template Model<float> build_model<float>(const ModelConfig&);
template Model<double> build_model<double>(const ModelConfig&);
template std::vector<int> argmax_rows<float>(const Matrix<float>&);
template std::vector<int> argmax_rows<double>(const Matrix<double>&);

}  // namespace varmix
