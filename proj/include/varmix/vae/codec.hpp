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

#include "varmix/core/errors.hpp"
#include "varmix/core/types.hpp"

namespace varmix {

/// Deterministic encoder/decoder mean maps with their vector-Jacobian products.
/// Anything that moves images to a latent space and back (a trained VAE, or
/// the identity for equivalence checks) plugs into the vicinal samplers,
/// VarMI and the adaptive attack through this interface.
template <typename Scalar>
class LatentCodec {
 public:
  virtual ~LatentCodec() = default;

  virtual Index latent_dim() const = 0;
  virtual TensorShape image_shape() const = 0;

  virtual Matrix<Scalar> encode_mean(const Matrix<Scalar>& x) const = 0;
  virtual Matrix<Scalar> decode_mean(const Matrix<Scalar>& z) const = 0;
  /// g^T d encode_mean(x) / dx, row by row.
  virtual Matrix<Scalar> encode_mean_vjp(const Matrix<Scalar>& x, const Matrix<Scalar>& g) const = 0;
  /// g^T d decode_mean(z) / dz, row by row.
  virtual Matrix<Scalar> decode_mean_vjp(const Matrix<Scalar>& z, const Matrix<Scalar>& g) const = 0;

 protected:
  void check_images(const Matrix<Scalar>& x) const {
    if (x.cols() != image_shape().size())
      throw ShapeError("codec expects images " + image_shape().str() + " (" +
                       std::to_string(image_shape().size()) + " values), got " + std::to_string(x.cols()));
  }
  void check_latents(const Matrix<Scalar>& z) const {
    if (z.cols() != latent_dim())
      throw ShapeError("codec expects latent dimension " + std::to_string(latent_dim()) + ", got " +
                       std::to_string(z.cols()));
  }
};

/// encode = flatten, decode = reshape.
template <typename Scalar>
class IdentityCodec final : public LatentCodec<Scalar> {
 public:
  explicit IdentityCodec(TensorShape shape) : shape_(shape) {}

  Index latent_dim() const override { return shape_.size(); }
  TensorShape image_shape() const override { return shape_; }
  Matrix<Scalar> encode_mean(const Matrix<Scalar>& x) const override {
    this->check_images(x);
    return x;
  }
  Matrix<Scalar> decode_mean(const Matrix<Scalar>& z) const override {
    this->check_latents(z);
    return z;
  }
  Matrix<Scalar> encode_mean_vjp(const Matrix<Scalar>& x, const Matrix<Scalar>& g) const override {
    this->check_images(x);
    return g;
  }
  Matrix<Scalar> decode_mean_vjp(const Matrix<Scalar>& z, const Matrix<Scalar>& g) const override {
    this->check_latents(z);
    return g;
  }

 private:
  TensorShape shape_;
};

}  // namespace varmix
