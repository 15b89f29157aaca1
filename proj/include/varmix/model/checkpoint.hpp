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

#include <json.hpp>

#include "varmix/model/model.hpp"

namespace varmix {

inline constexpr char kCheckpointMagic[8] = {'V', 'M', 'X', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Versioned container: magic, version, JSON header, then parameters and
/// buffers as little-endian 64-bit floats.
struct Checkpoint {
  nlohmann::json header;
  Vector<double> params;
  Vector<double> buffers;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Header carries {"kind": "classifier", "model": config, "meta": meta}.
template <typename Scalar>
void save_model(const std::filesystem::path& path, const Model<Scalar>& model,
                const nlohmann::json& meta = nlohmann::json::object());

template <typename Scalar>
Model<Scalar> load_model(const std::filesystem::path& path, nlohmann::json* meta = nullptr);

}  // namespace varmix
