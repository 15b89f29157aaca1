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

#include "varmix/data/dataset.hpp"

#include <algorithm>

#include "varmix/core/errors.hpp"

namespace varmix {

std::string to_string(Split split) { return split == Split::kTrain ? "train" : "test"; }

Dataset::Dataset(Matrix<float> images, std::vector<int> labels, TensorShape shape,
                 int num_classes, Split split)
    : images_(std::move(images)),
      labels_(std::move(labels)),
      shape_(shape),
      num_classes_(num_classes),
      split_(split) {
  if (images_.rows() == 0) throw InvalidArgument("dataset must not be empty");
  if (num_classes_ < 1) throw InvalidArgument("dataset needs at least one class");
  if (images_.cols() != shape_.size()) {
    throw ShapeError("dataset rows have " + std::to_string(images_.cols()) +
                     " values, shape " + shape_.str() + " needs " +
                     std::to_string(shape_.size()));
  }
  if (static_cast<Index>(labels_.size()) != images_.rows()) {
    throw ShapeError("dataset has " + std::to_string(images_.rows()) + " images but " +
                     std::to_string(labels_.size()) + " labels");
  }
  for (int y : labels_) {
    if (y < 0 || y >= num_classes_) {
      throw InvalidArgument("label " + std::to_string(y) + " outside [0, " +
                            std::to_string(num_classes_) + ")");
    }
  }
  if (images_.size() > 0 && (images_.minCoeff() < 0.0f || images_.maxCoeff() > 1.0f)) {
    throw InvalidArgument("dataset pixels must lie in [0, 1]");
  }
}

LabeledExample Dataset::example(Index i) const {
  if (i < 0 || i >= size()) throw InvalidArgument("example index out of range");
  return {images_.row(i).transpose(), shape_, labels_[static_cast<std::size_t>(i)]};
}

std::vector<int> Dataset::gather_labels(std::span<const Index> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (Index i : indices) out.push_back(labels_[static_cast<std::size_t>(i)]);
  return out;
}

Dataset Dataset::subset(std::span<const Index> indices) const {
  return Dataset(gather<float>(indices), gather_labels(indices), shape_, num_classes_, split_);
}

Dataset Dataset::with_images(Matrix<float> images) const {
  return Dataset(std::move(images), labels_, shape_, num_classes_, split_);
}

std::vector<Index> Dataset::class_counts() const {
  std::vector<Index> counts(static_cast<std::size_t>(num_classes_), 0);
  for (int y : labels_) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

std::vector<Index> Dataset::indices_of_class(int label) const {
  std::vector<Index> out;
  for (Index i = 0; i < size(); ++i)
    if (labels_[static_cast<std::size_t>(i)] == label) out.push_back(i);
  return out;
}

Dataset subsample(const Dataset& ds, Index n_per_class, std::uint64_t seed) {
  if (n_per_class < 1) throw InvalidArgument("n_per_class must be at least 1");
  Rng rng(derive_seed(seed, "subsample"));
  std::vector<Index> chosen;
  chosen.reserve(static_cast<std::size_t>(n_per_class * ds.num_classes()));
  for (int c = 0; c < ds.num_classes(); ++c) {
    const std::vector<Index> members = ds.indices_of_class(c);
    const auto available = static_cast<Index>(members.size());
    if (available < n_per_class) {
      throw InvalidArgument("class " + std::to_string(c) + " has only " +
                            std::to_string(available) + " examples, " +
                            std::to_string(n_per_class) + " requested");
    }
    const std::vector<Index> perm = random_permutation(rng, available);
    for (Index k = 0; k < n_per_class; ++k)
      chosen.push_back(members[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])]);
  }
  const std::vector<Index> order = random_permutation(rng, static_cast<Index>(chosen.size()));
  std::vector<Index> shuffled;
  shuffled.reserve(chosen.size());
  for (Index k : order) shuffled.push_back(chosen[static_cast<std::size_t>(k)]);
  return ds.subset(shuffled);
}

BatchStream::BatchStream(Index dataset_size, Index batch_size, std::uint64_t seed, bool shuffle)
    : batch_size_(batch_size) {
  if (batch_size < 1) throw InvalidArgument("batch_size must be at least 1");
  if (shuffle) {
    Rng rng(derive_seed(seed, "batches"));
    order_ = random_permutation(rng, dataset_size);
  } else {
    order_.resize(static_cast<std::size_t>(dataset_size));
    for (Index i = 0; i < dataset_size; ++i) order_[static_cast<std::size_t>(i)] = i;
  }
}

std::optional<std::vector<Index>> BatchStream::next() {
  const auto n = static_cast<Index>(order_.size());
  if (cursor_ >= n) return std::nullopt;
  const Index end = std::min(n, cursor_ + batch_size_);
  std::vector<Index> batch(order_.begin() + cursor_, order_.begin() + end);
  cursor_ = end;
  return batch;
}

Index BatchStream::batch_count() const {
  const auto n = static_cast<Index>(order_.size());
  return (n + batch_size_ - 1) / batch_size_;
}

BatchStream batches(const Dataset& ds, Index batch_size, std::uint64_t seed, bool shuffle) {
  return BatchStream(ds.size(), batch_size, seed, shuffle);
}

}  // namespace varmix
