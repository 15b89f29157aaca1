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

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "varmix/core/random.hpp"
#include "varmix/core/types.hpp"

namespace varmix {

enum class Split { kTrain, kTest };

std::string to_string(Split split);

struct LabeledExample {
  Vector<float> image;  // channel-first, flattened
  TensorShape shape;
  int label = 0;
};

/// Ordered collection of images in [0,1] with integer labels in [0, K).
///
/// Images are kept as a row-major float matrix (one example per row). The
/// constructor validates the pixel range and labels, so a constructed
/// Dataset always satisfies its invariants.
class Dataset {
 public:
  Dataset(Matrix<float> images, std::vector<int> labels, TensorShape shape, int num_classes,
          Split split);

  Index size() const { return images_.rows(); }
  const TensorShape& shape() const { return shape_; }
  int num_classes() const { return num_classes_; }
  Split split() const { return split_; }

  const Matrix<float>& images() const { return images_; }
  const std::vector<int>& labels() const { return labels_; }
  int label(Index i) const { return labels_[static_cast<std::size_t>(i)]; }

  LabeledExample example(Index i) const;

  /// Rows `indices` converted to the requested precision.
  template <typename Scalar>
  Matrix<Scalar> gather(std::span<const Index> indices) const {
    Matrix<Scalar> out(static_cast<Index>(indices.size()), shape_.size());
    for (std::size_t r = 0; r < indices.size(); ++r)
      out.row(static_cast<Index>(r)) = images_.row(indices[r]).template cast<Scalar>();
    return out;
  }

  std::vector<int> gather_labels(std::span<const Index> indices) const;

  template <typename Scalar>
  Matrix<Scalar> all_images() const {
    return images_.template cast<Scalar>();
  }

  Dataset subset(std::span<const Index> indices) const;
  Dataset with_images(Matrix<float> images) const;
  std::vector<Index> class_counts() const;
  std::vector<Index> indices_of_class(int label) const;

 private:
  Matrix<float> images_;
  std::vector<int> labels_;
  TensorShape shape_;
  int num_classes_;
  Split split_;
};

/// Exactly `n_per_class` examples of every class, drawn without replacement.
/// The result is class-interleaved in a seeded random order.
Dataset subsample(const Dataset& ds, Index n_per_class, std::uint64_t seed);

/// Single-consumer stream of mini-batch index lists partitioning a dataset.
class BatchStream {
 public:
  BatchStream(Index dataset_size, Index batch_size, std::uint64_t seed, bool shuffle);

  std::optional<std::vector<Index>> next();
  Index batch_count() const;
  Index batch_size() const { return batch_size_; }
  void reset() { cursor_ = 0; }

 private:
  std::vector<Index> order_;
  Index batch_size_;
  Index cursor_ = 0;
};

BatchStream batches(const Dataset& ds, Index batch_size, std::uint64_t seed, bool shuffle);

}  // namespace varmix
