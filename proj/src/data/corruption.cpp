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

#include "varmix/data/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "varmix/core/errors.hpp"
#include "varmix/core/random.hpp"

namespace varmix {
namespace {

constexpr std::array<std::string_view, kNumCorruptionKinds> kNames = {
    "gaussian_noise", "shot_noise",   "impulse_noise", "gaussian_blur", "motion_blur",
    "jpeg_like_blocking", "contrast", "brightness",    "pixelate",      "frost_like_overlay"};

using Plane = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Plane c of a flattened channel-first image.
Eigen::Map<Plane> plane(Vector<float>& img, const TensorShape& s, Index c) {
  return Eigen::Map<Plane>(img.data() + c * s.plane(), s.height, s.width);
}

Index reflect(Index i, Index n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

void gaussian_noise(Vector<float>& x, double sigma, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (Index i = 0; i < x.size(); ++i) x[i] += static_cast<float>(sigma * n(rng));
}

void shot_noise(Vector<float>& x, double scale, Rng& rng) {
  if (scale <= 0.0) throw InvalidArgument("shot_noise scale must be positive");
  for (Index i = 0; i < x.size(); ++i) {
    const double mean = static_cast<double>(x[i]) * scale;
    if (mean <= 0.0) {
      x[i] = 0.0f;
      continue;
    }
    std::poisson_distribution<long> p(mean);
    x[i] = static_cast<float>(static_cast<double>(p(rng)) / scale);
  }
}

void impulse_noise(Vector<float>& x, double amount, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Index i = 0; i < x.size(); ++i) {
    if (u(rng) < amount) x[i] = (rng() >> 63) ? 1.0f : 0.0f;
  }
}

void gaussian_blur(Vector<float>& x, const TensorShape& s, double sigma) {
  if (sigma <= 0.0) return;
  const auto radius = static_cast<Index>(std::max(1.0, std::ceil(3.0 * sigma)));
  std::vector<float> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (Index t = -radius; t <= radius; ++t) {
    const double w = std::exp(-0.5 * static_cast<double>(t * t) / (sigma * sigma));
    k[static_cast<std::size_t>(t + radius)] = static_cast<float>(w);
    total += w;
  }
  for (float& w : k) w = static_cast<float>(w / total);
  for (Index c = 0; c < s.channels; ++c) {
    auto p = plane(x, s, c);
    Plane tmp(s.height, s.width);
    for (Index i = 0; i < s.height; ++i)
      for (Index j = 0; j < s.width; ++j) {
        float acc = 0.0f;
        for (Index t = -radius; t <= radius; ++t)
          acc += k[static_cast<std::size_t>(t + radius)] * p(i, reflect(j + t, s.width));
        tmp(i, j) = acc;
      }
    for (Index i = 0; i < s.height; ++i)
      for (Index j = 0; j < s.width; ++j) {
        float acc = 0.0f;
        for (Index t = -radius; t <= radius; ++t)
          acc += k[static_cast<std::size_t>(t + radius)] * tmp(reflect(i + t, s.height), j);
        p(i, j) = acc;
      }
  }
}

void motion_blur(Vector<float>& x, const TensorShape& s, double length, Rng& rng) {
  const auto taps = static_cast<Index>(std::lround(length));
  if (taps <= 1) return;
  std::uniform_real_distribution<double> angle_dist(0.0, std::numbers::pi);
  const double angle = angle_dist(rng);
  const double dy = std::sin(angle);
  const double dx = std::cos(angle);
  std::vector<std::pair<Index, Index>> offsets;
  for (Index t = 0; t < taps; ++t) {
    const double r = static_cast<double>(t) - 0.5 * static_cast<double>(taps - 1);
    offsets.emplace_back(std::lround(r * dy), std::lround(r * dx));
  }
  const float w = 1.0f / static_cast<float>(taps);
  for (Index c = 0; c < s.channels; ++c) {
    auto p = plane(x, s, c);
    Plane src = p;
    for (Index i = 0; i < s.height; ++i)
      for (Index j = 0; j < s.width; ++j) {
        float acc = 0.0f;
        for (const auto& [oy, ox] : offsets) {
          const Index yi = std::clamp<Index>(i + oy, 0, s.height - 1);
          const Index xj = std::clamp<Index>(j + ox, 0, s.width - 1);
          acc += src(yi, xj);
        }
        p(i, j) = acc * w;
      }
  }
}

constexpr std::array<int, 64> kJpegLuma = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

void jpeg_like_blocking(Vector<float>& x, const TensorShape& s, double quality) {
  if (quality >= 100.0) return;
  const double q = std::clamp(quality, 1.0, 100.0);
  const double scale = q < 50.0 ? 5000.0 / q : 200.0 - 2.0 * q;
  Eigen::Matrix<double, 8, 8, Eigen::RowMajor> quant;
  for (int i = 0; i < 64; ++i)
    quant(i / 8, i % 8) = std::max(1.0, std::floor((kJpegLuma[static_cast<std::size_t>(i)] * scale + 50.0) / 100.0));
  Eigen::Matrix<double, 8, 8> dct;
  for (int k = 0; k < 8; ++k)
    for (int n = 0; n < 8; ++n)
      dct(k, n) = (k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0)) *
                  std::cos(std::numbers::pi * (2.0 * n + 1.0) * k / 16.0);

  for (Index c = 0; c < s.channels; ++c) {
    auto p = plane(x, s, c);
    for (Index bi = 0; bi < s.height; bi += 8)
      for (Index bj = 0; bj < s.width; bj += 8) {
        Eigen::Matrix<double, 8, 8> block;
        for (Index i = 0; i < 8; ++i)
          for (Index j = 0; j < 8; ++j) {
            const Index yi = std::min(bi + i, s.height - 1);
            const Index xj = std::min(bj + j, s.width - 1);
            block(i, j) = 255.0 * static_cast<double>(p(yi, xj)) - 128.0;
          }
        Eigen::Matrix<double, 8, 8> coef = dct * block * dct.transpose();
        for (int i = 0; i < 8; ++i)
          for (int j = 0; j < 8; ++j) coef(i, j) = std::round(coef(i, j) / quant(i, j)) * quant(i, j);
        block = dct.transpose() * coef * dct;
        for (Index i = 0; i < 8 && bi + i < s.height; ++i)
          for (Index j = 0; j < 8 && bj + j < s.width; ++j)
            p(bi + i, bj + j) = static_cast<float>((block(i, j) + 128.0) / 255.0);
      }
  }
}

void contrast(Vector<float>& x, const TensorShape& s, double factor) {
  for (Index c = 0; c < s.channels; ++c) {
    auto p = plane(x, s, c);
    const float mean = p.mean();
    p = (p - mean) * static_cast<float>(factor) + mean;
  }
}

void pixelate(Vector<float>& x, const TensorShape& s, double factor) {
  if (factor >= 1.0) return;
  const Index h = std::max<Index>(1, std::lround(static_cast<double>(s.height) * factor));
  const Index w = std::max<Index>(1, std::lround(static_cast<double>(s.width) * factor));
  for (Index c = 0; c < s.channels; ++c) {
    auto p = plane(x, s, c);
    Plane small = Plane::Zero(h, w);
    Plane counts = Plane::Zero(h, w);
    for (Index i = 0; i < s.height; ++i)
      for (Index j = 0; j < s.width; ++j) {
        const Index si = i * h / s.height;
        const Index sj = j * w / s.width;
        small(si, sj) += p(i, j);
        counts(si, sj) += 1.0f;
      }
    small /= counts.max(1.0f);
    for (Index i = 0; i < s.height; ++i)
      for (Index j = 0; j < s.width; ++j) p(i, j) = small(i * h / s.height, j * w / s.width);
  }
}

void frost_like_overlay(Vector<float>& x, const TensorShape& s, double image_weight,
                        double texture_weight, Rng& rng) {
  // Procedural texture: coarse value noise (bilinear) plus fine grain, min-max normalized.
  const Index grid = 5;
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Plane coarse(grid, grid);
  for (Index i = 0; i < grid; ++i)
    for (Index j = 0; j < grid; ++j) coarse(i, j) = u(rng);
  Plane tex(s.height, s.width);
  for (Index i = 0; i < s.height; ++i)
    for (Index j = 0; j < s.width; ++j) {
      const float gy = static_cast<float>(i) * static_cast<float>(grid - 1) /
                       static_cast<float>(std::max<Index>(1, s.height - 1));
      const float gx = static_cast<float>(j) * static_cast<float>(grid - 1) /
                       static_cast<float>(std::max<Index>(1, s.width - 1));
      const auto y0 = std::min<Index>(static_cast<Index>(gy), grid - 2);
      const auto x0 = std::min<Index>(static_cast<Index>(gx), grid - 2);
      const float fy = gy - static_cast<float>(y0);
      const float fx = gx - static_cast<float>(x0);
      const float top = coarse(y0, x0) * (1 - fx) + coarse(y0, x0 + 1) * fx;
      const float bottom = coarse(y0 + 1, x0) * (1 - fx) + coarse(y0 + 1, x0 + 1) * fx;
      tex(i, j) = top * (1 - fy) + bottom * fy + 0.35f * u(rng);
    }
  const float lo = tex.minCoeff();
  const float hi = tex.maxCoeff();
  if (hi > lo) tex = (tex - lo) / (hi - lo);
  for (Index c = 0; c < s.channels; ++c) {
    auto p = plane(x, s, c);
    p = p * static_cast<float>(image_weight) + tex * static_cast<float>(texture_weight);
  }
}

}  // namespace

std::string_view to_string(CorruptionKind kind) { return kNames[static_cast<std::size_t>(kind)]; }

CorruptionKind corruption_kind_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i)
    if (kNames[i] == name) return static_cast<CorruptionKind>(i);
  throw InvalidArgument("unknown corruption kind '" + std::string(name) + "'");
}

std::array<CorruptionKind, kNumCorruptionKinds> all_corruption_kinds() {
  std::array<CorruptionKind, kNumCorruptionKinds> out{};
  for (int i = 0; i < kNumCorruptionKinds; ++i) out[static_cast<std::size_t>(i)] = static_cast<CorruptionKind>(i);
  return out;
}

bool is_noise_kind(CorruptionKind kind) {
  return kind == CorruptionKind::kGaussianNoise || kind == CorruptionKind::kShotNoise ||
         kind == CorruptionKind::kImpulseNoise;
}

CorruptionTable CorruptionTable::defaults() {
  CorruptionTable t{};
  auto set = [&t](CorruptionKind k, std::array<CorruptionTable::Params, kNumSeverities> v) {
    t.params[static_cast<std::size_t>(k)] = v;
  };
  set(CorruptionKind::kGaussianNoise, {{{0.04, 0}, {0.06, 0}, {0.08, 0}, {0.09, 0}, {0.10, 0}}});
  set(CorruptionKind::kShotNoise, {{{500, 0}, {250, 0}, {100, 0}, {75, 0}, {50, 0}}});
  set(CorruptionKind::kImpulseNoise, {{{0.01, 0}, {0.02, 0}, {0.03, 0}, {0.05, 0}, {0.07, 0}}});
  set(CorruptionKind::kGaussianBlur, {{{0.4, 0}, {0.6, 0}, {0.7, 0}, {0.8, 0}, {1.0, 0}}});
  set(CorruptionKind::kMotionBlur, {{{3, 0}, {5, 0}, {7, 0}, {9, 0}, {11, 0}}});
  set(CorruptionKind::kJpegLikeBlocking, {{{80, 0}, {65, 0}, {58, 0}, {50, 0}, {40, 0}}});
  set(CorruptionKind::kContrast, {{{0.75, 0}, {0.5, 0}, {0.4, 0}, {0.3, 0}, {0.15, 0}}});
  set(CorruptionKind::kBrightness, {{{0.1, 0}, {0.2, 0}, {0.3, 0}, {0.4, 0}, {0.5, 0}}});
  set(CorruptionKind::kPixelate, {{{0.95, 0}, {0.9, 0}, {0.85, 0}, {0.75, 0}, {0.65, 0}}});
  set(CorruptionKind::kFrostLikeOverlay,
      {{{1.0, 0.2}, {1.0, 0.3}, {0.9, 0.4}, {0.85, 0.4}, {0.75, 0.45}}});
  return t;
}

CorruptionTable::Params& CorruptionTable::at(CorruptionKind kind, int severity) {
  if (severity < 1 || severity > kNumSeverities)
    throw InvalidArgument("severity must be in [1, 5], got " + std::to_string(severity));
  return params[static_cast<std::size_t>(kind)][static_cast<std::size_t>(severity - 1)];
}

const CorruptionTable::Params& CorruptionTable::at(CorruptionKind kind, int severity) const {
  return const_cast<CorruptionTable*>(this)->at(kind, severity);
}

Vector<float> corrupt(const Vector<float>& image, const TensorShape& shape,
                      const CorruptionSpec& spec, std::uint64_t seed,
                      const CorruptionTable& table) {
  if (image.size() != shape.size()) throw ShapeError("image does not match shape " + shape.str());
  const auto kind_index = static_cast<int>(spec.kind);
  if (kind_index < 0 || kind_index >= kNumCorruptionKinds)
    throw InvalidArgument("unknown corruption kind " + std::to_string(kind_index));
  const CorruptionTable::Params& p = table.at(spec.kind, spec.severity);
  Rng rng(derive_seed(seed, to_string(spec.kind)));
  Vector<float> x = image;
  switch (spec.kind) {
    case CorruptionKind::kGaussianNoise: gaussian_noise(x, p[0], rng); break;
    case CorruptionKind::kShotNoise: shot_noise(x, p[0], rng); break;
    case CorruptionKind::kImpulseNoise: impulse_noise(x, p[0], rng); break;
    case CorruptionKind::kGaussianBlur: gaussian_blur(x, shape, p[0]); break;
    case CorruptionKind::kMotionBlur: motion_blur(x, shape, p[0], rng); break;
    case CorruptionKind::kJpegLikeBlocking: jpeg_like_blocking(x, shape, p[0]); break;
    case CorruptionKind::kContrast: contrast(x, shape, p[0]); break;
    case CorruptionKind::kBrightness: x.array() += static_cast<float>(p[0]); break;
    case CorruptionKind::kPixelate: pixelate(x, shape, p[0]); break;
    case CorruptionKind::kFrostLikeOverlay: frost_like_overlay(x, shape, p[0], p[1], rng); break;
  }
  return x.cwiseMax(0.0f).cwiseMin(1.0f);
}

Dataset corrupt_dataset(const Dataset& ds, const CorruptionSpec& spec, std::uint64_t seed,
                        const CorruptionTable& table) {
  Matrix<float> out(ds.size(), ds.shape().size());
  for (Index i = 0; i < ds.size(); ++i) {
    const Vector<float> row = ds.images().row(i).transpose();
    out.row(i) = corrupt(row, ds.shape(), spec, derive_seed(seed, static_cast<std::uint64_t>(i)), table)
                     .transpose();
  }
  return ds.with_images(std::move(out));
}

}  // namespace varmix
