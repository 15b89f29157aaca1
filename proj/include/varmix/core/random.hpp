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
#include <random>
#include <string_view>
#include <vector>

#include "varmix/core/types.hpp"

namespace varmix {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Stable seed for a named component: FNV-1a over the name mixed with the parent.
inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view component) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : component) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return splitmix64(parent ^ splitmix64(h));
}

/// Stable seed for the i-th item of a collection (per-example attack seeds).
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
  return splitmix64(splitmix64(parent) + 0x632BE59BD9B4E019ull * (index + 1));
}

/// Draw from Beta(a, b) as X / (X + Y) with X ~ Gamma(a), Y ~ Gamma(b).
template <typename Scalar>
Scalar sample_beta(Rng& rng, Scalar a, Scalar b) {
  std::gamma_distribution<double> ga(static_cast<double>(a), 1.0);
  std::gamma_distribution<double> gb(static_cast<double>(b), 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  if (x + y == 0.0) return Scalar(0.5);
  return static_cast<Scalar>(x / (x + y));
}

template <typename Scalar>
void fill_normal(Rng& rng, Eigen::Ref<Matrix<Scalar>> out) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (Index i = 0; i < out.rows(); ++i)
    for (Index j = 0; j < out.cols(); ++j) out(i, j) = static_cast<Scalar>(n(rng));
}

template <typename Scalar>
Matrix<Scalar> normal_matrix(Rng& rng, Index rows, Index cols) {
  Matrix<Scalar> m(rows, cols);
  fill_normal<Scalar>(rng, m);
  return m;
}

template <typename Scalar>
Matrix<Scalar> uniform_matrix(Rng& rng, Index rows, Index cols, Scalar lo, Scalar hi) {
  std::uniform_real_distribution<double> u(static_cast<double>(lo), static_cast<double>(hi));
  Matrix<Scalar> m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = static_cast<Scalar>(u(rng));
  return m;
}

/// Entries are +1 or -1 with equal probability.
template <typename Scalar>
Matrix<Scalar> rademacher_matrix(Rng& rng, Index rows, Index cols) {
  Matrix<Scalar> m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      m(i, j) = (rng() >> 63) ? Scalar(1) : Scalar(-1);
    }
  }
  return m;
}

inline std::vector<Index> random_permutation(Rng& rng, Index n) {
  std::vector<Index> p(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
  // Fisher-Yates with an explicit uniform draw, independent of the stdlib shuffle.
  for (Index i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<Index> d(0, i);
    std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(d(rng))]);
  }
  return p;
}

}  // namespace varmix
