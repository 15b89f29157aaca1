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

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "varmix/core/types.hpp"
#include "varmix/data/dataset.hpp"

namespace varmix {

// Locally generated common corruptions. The enum order is the report order.
enum class CorruptionKind {
  kGaussianNoise,
  kShotNoise,
  kImpulseNoise,
  kGaussianBlur,
  kMotionBlur,
  kJpegLikeBlocking,
  kContrast,
  kBrightness,
  kPixelate,
  kFrostLikeOverlay,
};

inline constexpr int kNumCorruptionKinds = 10;
inline constexpr int kNumSeverities = 5;

std::string_view to_string(CorruptionKind kind);
/// Throws InvalidArgument for names outside the enum.
CorruptionKind corruption_kind_from_string(std::string_view name);
std::array<CorruptionKind, kNumCorruptionKinds> all_corruption_kinds();

/// True for the additive/replacement noise kinds whose distortion grows with severity.
bool is_noise_kind(CorruptionKind kind);

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::kGaussianNoise;
  int severity = 1;  // 1..5
};

/// Per kind, per severity: up to two numeric parameters.
///
///   gaussian_noise      sigma
///   shot_noise          photon count scale (lower is noisier)
///   impulse_noise       fraction of replaced values
///   gaussian_blur       sigma in pixels
///   motion_blur         kernel length in pixels
///   jpeg_like_blocking  quality 1..100 for 8x8 DCT quantization
///   contrast            contrast factor around the channel mean
///   brightness          additive offset
///   pixelate            resize factor
///   frost_like_overlay  (image weight, texture weight)
struct CorruptionTable {
  using Params = std::array<double, 2>;
  std::array<std::array<Params, kNumSeverities>, kNumCorruptionKinds> params;

  static CorruptionTable defaults();
  Params& at(CorruptionKind kind, int severity);
  const Params& at(CorruptionKind kind, int severity) const;
  bool operator==(const CorruptionTable&) const = default;
};

/// Corrupt one image (flattened, channel-first). Output stays in [0,1] and has
/// the same shape; identical (image, spec, seed, table) give identical bytes.
Vector<float> corrupt(const Vector<float>& image, const TensorShape& shape,
                      const CorruptionSpec& spec, std::uint64_t seed,
                      const CorruptionTable& table = CorruptionTable::defaults());

/// Corrupts every example with seeds derived from (seed, example index).
Dataset corrupt_dataset(const Dataset& ds, const CorruptionSpec& spec, std::uint64_t seed,
                        const CorruptionTable& table = CorruptionTable::defaults());

}  // namespace varmix
