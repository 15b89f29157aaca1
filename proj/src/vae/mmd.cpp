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

#include "varmix/vae/mmd.hpp"

#include <cmath>

#include "varmix/core/errors.hpp"

namespace varmix {

RbfKernel RbfKernel::for_latent_dim(Index d, const std::vector<double>& scales) {
  RbfKernel k;
  for (double c : scales) k.sigmas.push_back(std::sqrt(c * static_cast<double>(d)));
  k.validate();
  return k;
}

void RbfKernel::validate() const {
  if (sigmas.empty()) throw InvalidArgument("kernel needs at least one bandwidth");
  for (double s : sigmas)
    if (!(s > 0)) throw InvalidArgument("kernel bandwidths must be > 0");
}

namespace {

template <typename Scalar>
Matrix<Scalar> squared_distances(const Matrix<Scalar>& x, const Matrix<Scalar>& y) {
  if (x.cols() != y.cols()) throw ShapeError("mmd sample sets live in different dimensions");
  const Vector<Scalar> xx = x.rowwise().squaredNorm();
  const Vector<Scalar> yy = y.rowwise().squaredNorm();
  Matrix<Scalar> d = Scalar(-2) * x * y.transpose();
  d.colwise() += xx;
  d.rowwise() += yy.transpose();
  return d.cwiseMax(Scalar(0));
}

// Kernel values and the bandwidth-weighted matrix sum_i k_i / sigma_i^2 used by the gradient.
template <typename Scalar>
void kernel_terms(const Matrix<Scalar>& x, const Matrix<Scalar>& y, const RbfKernel& kernel,
                  Matrix<Scalar>& k, Matrix<Scalar>* w) {
  const Matrix<Scalar> d = squared_distances(x, y);
  k = Matrix<Scalar>::Zero(d.rows(), d.cols());
  if (w != nullptr) *w = Matrix<Scalar>::Zero(d.rows(), d.cols());
  for (double s : kernel.sigmas) {
    const auto s2 = static_cast<Scalar>(s * s);
    const Matrix<Scalar> ki = (-d.array() / (Scalar(2) * s2)).exp().matrix();
    k += ki;
    if (w != nullptr) *w += ki / s2;
  }
}

template <typename Scalar>
void check_sets(const Matrix<Scalar>& x, const Matrix<Scalar>& y, MmdEstimator estimator) {
  const Index min_size = estimator == MmdEstimator::kBiased ? 1 : 2;
  if (x.rows() < min_size || y.rows() < min_size)
    throw InvalidArgument("mmd needs at least " + std::to_string(min_size) + " samples per set");
}

template <typename Scalar>
Scalar within_mean(const Matrix<Scalar>& k, MmdEstimator estimator) {
  const auto n = static_cast<Scalar>(k.rows());
  if (estimator == MmdEstimator::kBiased) return k.sum() / (n * n);
  return (k.sum() - k.trace()) / (n * (n - 1));
}

}  // namespace

template <typename Scalar>
Matrix<Scalar> kernel_matrix(const Matrix<Scalar>& x, const Matrix<Scalar>& y, const RbfKernel& kernel) {
  kernel.validate();
  Matrix<Scalar> k;
  kernel_terms<Scalar>(x, y, kernel, k, nullptr);
  return k;
}

template <typename Scalar>
Scalar mmd(const Matrix<Scalar>& x, const Matrix<Scalar>& y, const RbfKernel& kernel, MmdEstimator estimator) {
  check_sets(x, y, estimator);
  const Matrix<Scalar> kxx = kernel_matrix(x, x, kernel);
  const Matrix<Scalar> kyy = kernel_matrix(y, y, kernel);
  const Matrix<Scalar> kxy = kernel_matrix(x, y, kernel);
  return within_mean(kxx, estimator) + within_mean(kyy, estimator) -
         Scalar(2) * kxy.sum() / static_cast<Scalar>(x.rows() * y.rows());
}

template <typename Scalar>
MmdGrad<Scalar> mmd_with_grad(const Matrix<Scalar>& x, const Matrix<Scalar>& y, const RbfKernel& kernel,
                              MmdEstimator estimator) {
  check_sets(x, y, estimator);
  kernel.validate();
  Matrix<Scalar> kxx, kyy, kxy, wxx, wyy, wxy;
  kernel_terms<Scalar>(x, x, kernel, kxx, &wxx);
  kernel_terms<Scalar>(y, y, kernel, kyy, &wyy);
  kernel_terms<Scalar>(x, y, kernel, kxy, &wxy);
  const auto n = static_cast<Scalar>(x.rows());
  const auto m = static_cast<Scalar>(y.rows());
  MmdGrad<Scalar> r;
  r.value = within_mean(kxx, estimator) + within_mean(kyy, estimator) - Scalar(2) * kxy.sum() / (n * m);
  const Scalar cxx = estimator == MmdEstimator::kBiased ? n * n : n * (n - 1);
  const Scalar cyy = estimator == MmdEstimator::kBiased ? m * m : m * (m - 1);
  // d k(a,b)/da = -sum_i k_i(a,b) (a - b) / sigma_i^2; the diagonal never contributes.
  const Vector<Scalar> rxx = wxx.rowwise().sum();
  const Vector<Scalar> ryy = wyy.rowwise().sum();
  const Vector<Scalar> rxy = wxy.rowwise().sum();
  const Vector<Scalar> cxy = wxy.colwise().sum().transpose();
  r.dx = (Scalar(-2) / cxx) * (rxx.asDiagonal() * x - wxx * x) +
         (Scalar(2) / (n * m)) * (rxy.asDiagonal() * x - wxy * y);
  r.dy = (Scalar(-2) / cyy) * (ryy.asDiagonal() * y - wyy * y) +
         (Scalar(2) / (n * m)) * (cxy.asDiagonal() * y - wxy.transpose() * x);
  return r;
}

#define VARMIX_INSTANTIATE_MMD(S)                                                               \
  template Matrix<S> kernel_matrix<S>(const Matrix<S>&, const Matrix<S>&, const RbfKernel&);    \
  template S mmd<S>(const Matrix<S>&, const Matrix<S>&, const RbfKernel&, MmdEstimator);        \
  template MmdGrad<S> mmd_with_grad<S>(const Matrix<S>&, const Matrix<S>&, const RbfKernel&,    \
                                       MmdEstimator);

VARMIX_INSTANTIATE_MMD(float)
VARMIX_INSTANTIATE_MMD(double)

}  // namespace varmix
