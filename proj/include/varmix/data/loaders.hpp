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
#include <utility>

#include "varmix/data/dataset.hpp"

namespace varmix {

struct TrainTestPair {
  Dataset train;
  Dataset test;
};

// CIFAR-10 binary version: data_batch_{1..5}.bin and test_batch.bin, each a
// sequence of 3073-byte records (label byte, then 1024 R, 1024 G, 1024 B).
inline constexpr Index kCifarRecordBytes = 3073;

TrainTestPair load_cifar10(const std::filesystem::path& dir);

// MNIST IDX files, optionally gzip-compressed (a ".gz" sibling is accepted
// for each of the four standard file names).
inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

TrainTestPair load_mnist(const std::filesystem::path& dir);

/// Reads one IDX image/label pair. Exposed for tests and custom layouts.
Dataset load_idx_pair(const std::filesystem::path& images, const std::filesystem::path& labels,
                      Split split);

}  // namespace varmix
