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

#include <memory>
#include <string>
#include <vector>

#include "varmix/core/random.hpp"
#include "varmix/core/types.hpp"

namespace varmix {

/// Saved forward state of one layer; composite layers nest children.
template <typename Scalar>
struct Cache {
  std::vector<Matrix<Scalar>> tensors;
  std::vector<Index> indices;
  std::vector<Cache> children;
  Mode mode = Mode::kEval;
};

/// A differentiable map between batches of fixed-shape tensors.
///
/// Layers are stateless: trainable parameters and non-trainable buffers live
/// in flat vectors owned by the Network and are passed in as pointers to the
/// layer's slice. Forward is row-pure in eval mode: row i of the output only
/// depends on row i of the input, with bit-identical results regardless of
/// the batch it travels in.
template <typename Scalar>
class Layer {
 public:
  explicit Layer(TensorShape input) : input_(input) {}
  virtual ~Layer() = default;

  virtual std::string kind() const = 0;
  const TensorShape& input_shape() const { return input_; }
  virtual TensorShape output_shape() const = 0;
  virtual Index param_count() const { return 0; }
  virtual Index buffer_count() const { return 0; }
  virtual void initialize(Scalar* /*params*/, Scalar* /*buffers*/, Rng& /*rng*/) const {}

  /// `cache` may be null when no backward pass follows.
  virtual Matrix<Scalar> forward(const Matrix<Scalar>& x, const Scalar* params,
                                 const Scalar* buffers, Mode mode, Cache<Scalar>* cache) const = 0;

  /// Returns dL/dx. Parameter gradients are accumulated into `grad` when non-null.
  virtual Matrix<Scalar> backward(const Matrix<Scalar>& dy, const Scalar* params,
                                  const Scalar* buffers, const Cache<Scalar>& cache,
                                  Scalar* grad) const = 0;

  /// Folds the batch statistics of a train-mode forward into running buffers.
  virtual void update_buffers(const Cache<Scalar>& /*cache*/, Scalar* /*buffers*/) const {}

  /// Appends the piecewise-linear branch taken by each unit (relu signs,
  /// max-pool winners). Equal patterns mean no kink lies between two inputs.
  virtual void activation_pattern(const Cache<Scalar>& /*cache*/, std::vector<Index>& /*out*/) const {}

 protected:
  TensorShape input_;
};

template <typename Scalar>
using LayerPtr = std::unique_ptr<Layer<Scalar>>;

struct ConvSpec {
  Index out_channels = 1;
  Index kernel = 3;
  Index stride = 1;
  Index padding = 1;
  bool bias = true;
};

template <typename Scalar>
LayerPtr<Scalar> make_conv2d(TensorShape input, ConvSpec spec);
template <typename Scalar>
LayerPtr<Scalar> make_linear(TensorShape input, Index out_features);
template <typename Scalar>
LayerPtr<Scalar> make_relu(TensorShape input);
template <typename Scalar>
LayerPtr<Scalar> make_sigmoid(TensorShape input);
template <typename Scalar>
LayerPtr<Scalar> make_max_pool2d(TensorShape input, Index window);
template <typename Scalar>
LayerPtr<Scalar> make_global_avg_pool(TensorShape input);
template <typename Scalar>
LayerPtr<Scalar> make_upsample2d(TensorShape input, Index factor);
template <typename Scalar>
LayerPtr<Scalar> make_batch_norm2d(TensorShape input, Scalar momentum = Scalar(0.1),
                                   Scalar eps = Scalar(1e-5));
/// Reinterprets the tensor as `output` (same element count).
template <typename Scalar>
LayerPtr<Scalar> make_reshape(TensorShape input, TensorShape output);
/// conv-bn-relu-conv-bn plus identity or projected shortcut, then relu.
template <typename Scalar>
LayerPtr<Scalar> make_basic_residual_block(TensorShape input, Index out_channels, Index stride);

}  // namespace varmix
