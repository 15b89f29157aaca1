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

#include <vector>

#include "varmix/core/random.hpp"
#include "varmix/data/dataset.hpp"

namespace varmix {

/// Indices of every example whose label differs from `predicted_class`.
std::vector<Index> build_pool_other_labels(const Dataset& dataset, int predicted_class);

/// Other-label pools for every class of one dataset, built once.
class ClassPools {
 public:
  explicit ClassPools(const Dataset& dataset);

  const Dataset& dataset() const { return *dataset_; }
  /// Throws InvalidArgument when no example carries another label.
  const std::vector<Index>& other_than(int predicted_class) const;

  /// `k` pool indices: distinct when k <= pool size, otherwise uniform with replacement.
  std::vector<Index> draw(int predicted_class, Index k, Rng& rng) const;

 private:
  const Dataset* dataset_;
  std::vector<std::vector<Index>> pools_;
};

}  // namespace varmix
