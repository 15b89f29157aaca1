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

#include "varmix/core/types.hpp"

namespace varmix {

/// Sum of Gaussian RBF kernels exp(-|x - y|^2 / (2 sigma_i^2)).
struct RbfKernel {
  std::vector<double> sigmas;

  /// sigma_i^2 = scale_i * d.
  static RbfKernel for_latent_dim(Index d, const std::vector<double>& scales = {0.25, 0.5, 1.0, 2.0, 4.0});
  void validate() const;
};

enum class MmdEstimator { kBiased, kUnbiased };

/// Kernel matrix K_ij = k(x_i, y_j) built from one matrix product.
template <typename Scalar>
Matrix<Scalar> kernel_matrix(const Matrix<Scalar>& x, const Matrix<Scalar>& y, const RbfKernel& kernel);

template <typename Scalar>
Scalar mmd(const Matrix<Scalar>& x, const Matrix<Scalar>& y, const RbfKernel& kernel,
           MmdEstimator estimator = MmdEstimator::kBiased);

template <typename Scalar>
struct MmdGrad {
  Scalar value = 0;
  Matrix<Scalar> dx;
  Matrix<Scalar> dy;
};

/// MMD and its gradient w.r.t. both sample sets.
template <typename Scalar>
MmdGrad<Scalar> mmd_with_grad(const Matrix<Scalar>& x, const Matrix<Scalar>& y, const RbfKernel& kernel,
                              MmdEstimator estimator = MmdEstimator::kBiased);

}  // namespace varmix
