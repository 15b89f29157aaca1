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

#include "varmix/model/network.hpp"

#include "varmix/core/errors.hpp"

namespace varmix {

template <typename Scalar>
Network<Scalar>::Network(TensorShape input, std::vector<Block> blocks) : input_(input) {
  if (blocks.empty()) throw InvalidArgument("network needs at least one block");
  TensorShape shape = input;
  Index params = 0;
  Index buffers = 0;
  for (Block& block : blocks) {
    if (block.empty()) throw InvalidArgument("network block is empty");
    block_begin_.push_back(layers_.size());
    for (LayerPtr<Scalar>& l : block) {
      if (!(l->input_shape() == shape)) {
        throw ShapeError(l->kind() + " expects input " + l->input_shape().str() + " but receives " +
                         shape.str());
      }
      shape = l->output_shape();
      param_offset_.push_back(params);
      buffer_offset_.push_back(buffers);
      params += l->param_count();
      buffers += l->buffer_count();
      layers_.push_back(std::move(l));
    }
  }
  block_begin_.push_back(layers_.size());
  params_ = Vector<Scalar>::Zero(params);
  buffers_ = Vector<Scalar>::Zero(buffers);
}

template <typename Scalar>
TensorShape Network<Scalar>::output_shape() const {
  return layers_.back()->output_shape();
}

template <typename Scalar>
TensorShape Network<Scalar>::block_input_shape(Index k) const {
  if (k < 0 || k >= num_blocks())
    throw InvalidArgument("block " + std::to_string(k) + " outside [0, " +
                          std::to_string(num_blocks()) + ")");
  return layers_[block_begin_[static_cast<std::size_t>(k)]]->input_shape();
}

template <typename Scalar>
void Network<Scalar>::initialize(std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = 0; i < layers_.size(); ++i)
    layers_[i]->initialize(params_.data() + param_offset_[i], buffers_.data() + buffer_offset_[i], rng);
}

template <typename Scalar>
Matrix<Scalar> Network<Scalar>::forward(const Matrix<Scalar>& x, Mode mode, Tape<Scalar>* tape) const {
  return forward_blocks(x, 0, num_blocks(), mode, tape);
}

template <typename Scalar>
Matrix<Scalar> Network<Scalar>::forward_with_params(const Matrix<Scalar>& x, const Vector<Scalar>& params, Mode mode,
                                                    Tape<Scalar>* tape) const {
  if (params.size() != params_.size()) throw ShapeError("parameter vector does not match parameter count");
  return run(x, 0, num_blocks(), params.data(), mode, tape);
}

template <typename Scalar>
Matrix<Scalar> Network<Scalar>::forward_blocks(const Matrix<Scalar>& h, Index from, Index to, Mode mode,
                                               Tape<Scalar>* tape) const {
  return run(h, from, to, params_.data(), mode, tape);
}

template <typename Scalar>
Matrix<Scalar> Network<Scalar>::run(const Matrix<Scalar>& h, Index from, Index to, const Scalar* params, Mode mode,
                                    Tape<Scalar>* tape) const {
  if (from < 0 || to > num_blocks() || from >= to)
    throw InvalidArgument("invalid block range [" + std::to_string(from) + ", " + std::to_string(to) + ")");
  if (h.rows() == 0) throw InvalidArgument("empty batch");
  const std::size_t begin = block_begin_[static_cast<std::size_t>(from)];
  const std::size_t end = block_begin_[static_cast<std::size_t>(to)];
  if (tape != nullptr) {
    tape->first_layer = begin;
    tape->caches.assign(end - begin, Cache<Scalar>{});
  }
  Matrix<Scalar> out = h;
  for (std::size_t i = begin; i < end; ++i) {
    out = layers_[i]->forward(out, params + param_offset_[i], buffers_.data() + buffer_offset_[i],
                              mode, tape != nullptr ? &tape->caches[i - begin] : nullptr);
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> Network<Scalar>::backward(const Matrix<Scalar>& dy, const Tape<Scalar>& tape,
                                         Vector<Scalar>* grad) const {
  if (grad != nullptr && grad->size() != params_.size())
    throw ShapeError("gradient buffer does not match parameter count");
  Matrix<Scalar> g = dy;
  for (std::size_t k = tape.caches.size(); k-- > 0;) {
    const std::size_t i = tape.first_layer + k;
    g = layers_[i]->backward(g, params_.data() + param_offset_[i], buffers_.data() + buffer_offset_[i],
                             tape.caches[k], grad != nullptr ? grad->data() + param_offset_[i] : nullptr);
  }
  return g;
}

template <typename Scalar>
void Network<Scalar>::commit_statistics(const Tape<Scalar>& tape) {
  for (std::size_t k = 0; k < tape.caches.size(); ++k) {
    const std::size_t i = tape.first_layer + k;
    layers_[i]->update_buffers(tape.caches[k], buffers_.data() + buffer_offset_[i]);
  }
}

template <typename Scalar>
std::vector<Index> Network<Scalar>::activation_pattern(const Tape<Scalar>& tape) const {
  std::vector<Index> out;
  for (std::size_t k = 0; k < tape.caches.size(); ++k)
    layers_[tape.first_layer + k]->activation_pattern(tape.caches[k], out);
  return out;
}

template <typename Scalar>
Matrix<Scalar> Network<Scalar>::hidden(const Matrix<Scalar>& x, Index k, Mode mode) const {
  if (k < 0 || k >= num_blocks())
    throw InvalidArgument("hidden layer " + std::to_string(k) + " outside [0, " +
                          std::to_string(num_blocks()) + ")");
  if (x.rows() == 0) throw InvalidArgument("empty batch");
  if (k == 0) {
    if (x.cols() != input_.size()) throw ShapeError("input does not match " + input_.str());
    return x;
  }
  return forward_blocks(x, 0, k, mode);
}

template class Network<float>;
template class Network<double>;

}  // namespace varmix
