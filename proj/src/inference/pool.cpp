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

#include "varmix/inference/pool.hpp"

#include "varmix/core/errors.hpp"

namespace varmix {

std::vector<Index> build_pool_other_labels(const Dataset& dataset, int predicted_class) {
  std::vector<Index> pool;
  for (Index i = 0; i < dataset.size(); ++i)
    if (dataset.label(i) != predicted_class) pool.push_back(i);
  if (pool.empty())
    throw InvalidArgument("mixup pool is empty: every example has label " + std::to_string(predicted_class));
  return pool;
}

ClassPools::ClassPools(const Dataset& dataset) : dataset_(&dataset) {
  pools_.resize(static_cast<std::size_t>(dataset.num_classes()));
  for (Index i = 0; i < dataset.size(); ++i)
    for (int c = 0; c < dataset.num_classes(); ++c)
      if (dataset.label(i) != c) pools_[static_cast<std::size_t>(c)].push_back(i);
}

const std::vector<Index>& ClassPools::other_than(int predicted_class) const {
  if (predicted_class < 0 || predicted_class >= static_cast<int>(pools_.size()))
    throw InvalidArgument("predicted class " + std::to_string(predicted_class) + " outside the pool's label range");
  const auto& pool = pools_[static_cast<std::size_t>(predicted_class)];
  if (pool.empty())
    throw InvalidArgument("mixup pool is empty: every example has label " + std::to_string(predicted_class));
  return pool;
}

std::vector<Index> ClassPools::draw(int predicted_class, Index k, Rng& rng) const {
  const auto& pool = other_than(predicted_class);
  const auto n = static_cast<Index>(pool.size());
  std::vector<Index> out(static_cast<std::size_t>(k));
  if (k <= n) {
    // Partial Fisher-Yates over a position map, touching only k entries.
    std::vector<std::pair<Index, Index>> swapped;
    auto at = [&](Index p) {
      for (auto it = swapped.rbegin(); it != swapped.rend(); ++it)
        if (it->first == p) return it->second;
      return p;
    };
    for (Index i = 0; i < k; ++i) {
      std::uniform_int_distribution<Index> d(i, n - 1);
      const Index j = d(rng);
      const Index vi = at(i);
      const Index vj = at(j);
      swapped.emplace_back(j, vi);
      swapped.emplace_back(i, vj);
      out[static_cast<std::size_t>(i)] = pool[static_cast<std::size_t>(vj)];
    }
  } else {
    std::uniform_int_distribution<Index> d(0, n - 1);
    for (Index& v : out) v = pool[static_cast<std::size_t>(d(rng))];
  }
  return out;
}

}  // namespace varmix
