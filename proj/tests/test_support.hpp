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
#include <random>
#include <string>

#include "varmix/data/dataset.hpp"
#include "varmix/data/loaders.hpp"

namespace varmix::testing {

inline std::filesystem::path source_dir() { return VARMIX_SOURCE_DIR; }
inline std::filesystem::path mnist_dir() { return source_dir() / "data" / "mnist-subset"; }

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("varmix-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Uniform random images with balanced labels.
inline Dataset random_dataset(Index n, TensorShape shape, int classes, std::uint64_t seed,
                              Split split = Split::kTrain) {
  Rng rng(seed);
  Matrix<float> images = uniform_matrix<float>(rng, n, shape.size(), 0.0f, 1.0f);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = static_cast<int>(i % classes);
  return Dataset(std::move(images), std::move(labels), shape, classes, split);
}

}  // namespace varmix::testing
