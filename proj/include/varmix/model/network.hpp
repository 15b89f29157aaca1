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
#include <vector>

#include "varmix/model/layers.hpp"

namespace varmix {

/// Forward caches for a contiguous run of layers, consumed by backward.
template <typename Scalar>
struct Tape {
  std::size_t first_layer = 0;
  std::vector<Cache<Scalar>> caches;
};

/// A chain of layers grouped into blocks, with all parameters in one flat
/// vector and all non-trainable buffers in another.
///
/// Block k consumes the representation hidden(k); hidden(0) is the input.
template <typename Scalar>
class Network {
 public:
  using Block = std::vector<LayerPtr<Scalar>>;

  Network(TensorShape input, std::vector<Block> blocks);

  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const TensorShape& input_shape() const { return input_; }
  TensorShape output_shape() const;
  /// Shape of hidden(k), the input of block k.
  TensorShape block_input_shape(Index k) const;
  Index num_blocks() const { return static_cast<Index>(block_begin_.size()) - 1; }
  Index num_layers() const { return static_cast<Index>(layers_.size()); }
  const Layer<Scalar>& layer(Index i) const { return *layers_[static_cast<std::size_t>(i)]; }

  Vector<Scalar>& params() { return params_; }
  const Vector<Scalar>& params() const { return params_; }
  Vector<Scalar>& buffers() { return buffers_; }
  const Vector<Scalar>& buffers() const { return buffers_; }

  void initialize(std::uint64_t seed);

  Matrix<Scalar> forward(const Matrix<Scalar>& x, Mode mode = Mode::kEval,
                         Tape<Scalar>* tape = nullptr) const;

  /// Forward pass with `params` in place of the network's own parameters.
  Matrix<Scalar> forward_with_params(const Matrix<Scalar>& x, const Vector<Scalar>& params, Mode mode = Mode::kEval,
                                     Tape<Scalar>* tape = nullptr) const;

  /// Runs blocks [from, to) on a representation of shape block_input_shape(from).
  Matrix<Scalar> forward_blocks(const Matrix<Scalar>& h, Index from, Index to, Mode mode,
                                Tape<Scalar>* tape = nullptr) const;

  /// Returns the gradient w.r.t. the tape's input; parameter gradients are
  /// accumulated into `grad` (sized like params()) when non-null.
  Matrix<Scalar> backward(const Matrix<Scalar>& dy, const Tape<Scalar>& tape,
                          Vector<Scalar>* grad = nullptr) const;

  /// Folds train-mode batch statistics recorded on the tape into the buffers.
  void commit_statistics(const Tape<Scalar>& tape);

  /// Concatenated activation patterns of the taped layers.
  std::vector<Index> activation_pattern(const Tape<Scalar>& tape) const;

  /// hidden(k) for 0 <= k < num_blocks(); anything else throws.
  Matrix<Scalar> hidden(const Matrix<Scalar>& x, Index k, Mode mode = Mode::kEval) const;

 private:
  Matrix<Scalar> run(const Matrix<Scalar>& h, Index from, Index to, const Scalar* params, Mode mode,
                     Tape<Scalar>* tape) const;

  TensorShape input_;
  std::vector<LayerPtr<Scalar>> layers_;
  std::vector<std::size_t> block_begin_;
  std::vector<Index> param_offset_;
  std::vector<Index> buffer_offset_;
  Vector<Scalar> params_;
  Vector<Scalar> buffers_;
};

}  // namespace varmix
