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

#include <gtest/gtest.h>
#include <zlib.h>

#include <cmath>
#include <fstream>
#include <set>

#include "test_support.hpp"
#include "varmix/core/errors.hpp"
#include "varmix/data/corruption.hpp"
#include "varmix/data/dataset.hpp"
#include "varmix/data/loaders.hpp"

namespace varmix {
namespace {

using testing::TempDir;
namespace fs = std::filesystem;

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> be32(std::uint32_t v) {
  return {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
          static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
}

std::vector<std::uint8_t> idx_images(std::uint32_t magic, std::uint32_t n) {
  std::vector<std::uint8_t> b;
  for (auto v : {magic, n, 28u, 28u}) {
    auto w = be32(v);
    b.insert(b.end(), w.begin(), w.end());
  }
  for (std::uint32_t i = 0; i < n * 784; ++i) b.push_back(static_cast<std::uint8_t>(i * 7));
  return b;
}

std::vector<std::uint8_t> idx_labels(std::uint32_t magic, std::uint32_t n) {
  std::vector<std::uint8_t> b;
  for (auto v : {magic, n}) {
    auto w = be32(v);
    b.insert(b.end(), w.begin(), w.end());
  }
  for (std::uint32_t i = 0; i < n; ++i) b.push_back(static_cast<std::uint8_t>(i % 10));
  return b;
}

std::uint32_t gz_header_count(const fs::path& p) {
  gzFile f = gzopen(p.string().c_str(), "rb");
  unsigned char h[8];
  const int n = gzread(f, h, 8);
  gzclose(f);
  EXPECT_EQ(n, 8);
  return (std::uint32_t{h[4]} << 24) | (std::uint32_t{h[5]} << 16) | (std::uint32_t{h[6]} << 8) | h[7];
}

void write_cifar_batch(const fs::path& p, int records, int first_label = 0) {
  std::vector<std::uint8_t> b;
  for (int r = 0; r < records; ++r) {
    b.push_back(static_cast<std::uint8_t>((first_label + r) % 10));
    for (int i = 0; i < 3072; ++i) b.push_back(static_cast<std::uint8_t>((r * 31 + i) % 256));
  }
  write_bytes(p, b);
}

TEST(Dataset, RejectsOutOfRangePixelsAndLabels) {
  Matrix<float> img = Matrix<float>::Constant(2, 4, 0.5f);
  EXPECT_NO_THROW(Dataset(img, {0, 1}, {1, 2, 2}, 2, Split::kTrain));
  EXPECT_THROW(Dataset(img, {0, 2}, {1, 2, 2}, 2, Split::kTrain), InvalidArgument);
  img(1, 3) = 1.5f;
  EXPECT_THROW(Dataset(img, {0, 1}, {1, 2, 2}, 2, Split::kTrain), InvalidArgument);
  EXPECT_THROW(Dataset(Matrix<float>(0, 4), {}, {1, 2, 2}, 2, Split::kTrain), InvalidArgument);
  EXPECT_THROW(Dataset(Matrix<float>::Zero(2, 3), {0, 1}, {1, 2, 2}, 2, Split::kTrain), ShapeError);
}

TEST(LoadMnist, SubsetCountsMatchIdxHeaders) {
  const fs::path dir = testing::mnist_dir();
  const auto pair = load_mnist(dir);
  EXPECT_EQ(pair.train.size(), gz_header_count(dir / "train-labels-idx1-ubyte.gz"));
  EXPECT_EQ(pair.test.size(), gz_header_count(dir / "t10k-labels-idx1-ubyte.gz"));
  EXPECT_EQ(pair.train.shape(), (TensorShape{1, 28, 28}));
  EXPECT_EQ(pair.train.num_classes(), 10);
  EXPECT_GE(pair.train.images().minCoeff(), 0.0f);
  EXPECT_LE(pair.train.images().maxCoeff(), 1.0f);
  EXPECT_GT(pair.train.images().maxCoeff(), 0.99f);
  EXPECT_EQ(pair.test.split(), Split::kTest);
}

TEST(LoadMnist, RawFilesAndErrors) {
  TempDir tmp("mnist");
  write_bytes(tmp.path() / "train-images-idx3-ubyte", idx_images(0x803, 5));
  write_bytes(tmp.path() / "train-labels-idx1-ubyte", idx_labels(0x801, 5));
  write_bytes(tmp.path() / "t10k-images-idx3-ubyte", idx_images(0x803, 3));
  write_bytes(tmp.path() / "t10k-labels-idx1-ubyte", idx_labels(0x801, 3));
  const auto pair = load_mnist(tmp.path());
  EXPECT_EQ(pair.train.size(), 5);
  EXPECT_EQ(pair.test.size(), 3);
  EXPECT_FLOAT_EQ(pair.train.images()(0, 1), 7.0f / 255.0f);
  EXPECT_EQ(pair.train.label(3), 3);

  write_bytes(tmp.path() / "t10k-labels-idx1-ubyte", idx_labels(0x801, 4));
  EXPECT_THROW(load_mnist(tmp.path()), FormatError);
  write_bytes(tmp.path() / "t10k-labels-idx1-ubyte", idx_labels(0x801, 3));
  write_bytes(tmp.path() / "t10k-images-idx3-ubyte", idx_images(0x1234, 3));
  try {
    load_mnist(tmp.path());
    FAIL() << "expected a format error";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
  }
  fs::remove(tmp.path() / "t10k-images-idx3-ubyte");
  EXPECT_THROW(load_mnist(tmp.path()), IngestionError);
}

TEST(LoadCifar10, ReadsBatchesAndValidates) {
  TempDir tmp("cifar");
  EXPECT_THROW(load_cifar10(tmp.path()), IngestionError);
  for (int i = 1; i <= 5; ++i) write_cifar_batch(tmp.path() / ("data_batch_" + std::to_string(i) + ".bin"), 4, i);
  write_cifar_batch(tmp.path() / "test_batch.bin", 3);
  const auto pair = load_cifar10(tmp.path());
  EXPECT_EQ(pair.train.size(), 20);
  EXPECT_EQ(pair.test.size(), 3);
  EXPECT_EQ(pair.train.size() + pair.test.size(), 23);
  EXPECT_EQ(pair.train.shape(), (TensorShape{3, 32, 32}));
  EXPECT_EQ(pair.train.label(0), 1);
  EXPECT_FLOAT_EQ(pair.train.images()(1, 5), static_cast<float>((31 + 5) % 256) / 255.0f);
  EXPECT_GE(pair.train.images().minCoeff(), 0.0f);
  EXPECT_LE(pair.train.images().maxCoeff(), 1.0f);

  std::vector<std::uint8_t> truncated(3073 * 2 - 10, 1);
  write_bytes(tmp.path() / "data_batch_3.bin", truncated);
  try {
    load_cifar10(tmp.path());
    FAIL() << "expected a format error";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("data_batch_3.bin"), std::string::npos);
  }
  fs::remove(tmp.path() / "data_batch_3.bin");
  try {
    load_cifar10(tmp.path());
    FAIL() << "expected an ingestion error";
  } catch (const IngestionError& e) {
    EXPECT_NE(std::string(e.what()).find("data_batch_3.bin"), std::string::npos);
  }
}

TEST(Subsample, ExactPerClassCountsAndDeterminism) {
  const Dataset ds = testing::random_dataset(300, {1, 4, 4}, 10, 3);
  const Dataset a = subsample(ds, 7, 11);
  const Dataset b = subsample(ds, 7, 11);
  EXPECT_EQ(a.size(), 70);
  for (Index c : a.class_counts()) EXPECT_EQ(c, 7);
  EXPECT_EQ(a.labels(), b.labels());
  EXPECT_TRUE(a.images() == b.images());
  const Dataset c = subsample(ds, 7, 12);
  EXPECT_FALSE(a.images() == c.images());
}

TEST(Subsample, FullCountIsPermutation) {
  const Dataset ds = testing::random_dataset(50, {1, 3, 3}, 5, 4);
  const Dataset p = subsample(ds, 10, 1);
  ASSERT_EQ(p.size(), ds.size());
  std::multiset<float> a(ds.images().data(), ds.images().data() + ds.images().size());
  std::multiset<float> b(p.images().data(), p.images().data() + p.images().size());
  EXPECT_EQ(a, b);
}

TEST(Subsample, InsufficientExamplesNamesClassAndCount) {
  const Dataset ds = testing::random_dataset(25, {1, 2, 2}, 5, 4);
  try {
    subsample(ds, 6, 0);
    FAIL() << "expected an error";
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("class 0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("5"), std::string::npos) << msg;
  }
}

TEST(Batches, PartitionsWithSmallerLastBatch) {
  BatchStream s(10000, 64, 5, true);
  EXPECT_EQ(s.batch_count(), 157);
  std::vector<int> seen(10000, 0);
  Index count = 0;
  std::size_t last = 0;
  while (auto b = s.next()) {
    ++count;
    last = b->size();
    for (Index i : *b) ++seen[static_cast<std::size_t>(i)];
  }
  EXPECT_EQ(count, 157);
  EXPECT_EQ(last, 16u);
  for (int v : seen) EXPECT_EQ(v, 1);
}

TEST(Batches, OrderAndDeterminism) {
  BatchStream plain(10, 4, 1, false);
  Index expect = 0;
  while (auto b = plain.next())
    for (Index i : *b) EXPECT_EQ(i, expect++);
  BatchStream a(100, 8, 9, true);
  BatchStream b(100, 8, 9, true);
  while (auto x = a.next()) EXPECT_EQ(*x, *b.next());
  EXPECT_THROW(BatchStream(10, 0, 1, true), InvalidArgument);
  EXPECT_THROW(BatchStream(10, -3, 1, true), InvalidArgument);
}

TEST(Corrupt, ZeroSigmaLeavesImageUnchanged) {
  const Dataset ds = testing::random_dataset(1, {3, 8, 8}, 1, 2);
  CorruptionTable table = CorruptionTable::defaults();
  table.at(CorruptionKind::kGaussianNoise, 3) = {0.0, 0.0};
  const Vector<float> x = ds.example(0).image;
  const Vector<float> y = corrupt(x, ds.shape(), {CorruptionKind::kGaussianNoise, 3}, 42, table);
  EXPECT_TRUE(x == y);
}

TEST(Corrupt, OutputsClampedDeterministicAndShaped) {
  const Dataset ds = testing::random_dataset(2, {3, 16, 16}, 2, 8);
  for (CorruptionKind kind : all_corruption_kinds()) {
    for (int s = 1; s <= kNumSeverities; ++s) {
      const Vector<float> x = ds.example(s % 2).image;
      const Vector<float> a = corrupt(x, ds.shape(), {kind, s}, 99);
      const Vector<float> b = corrupt(x, ds.shape(), {kind, s}, 99);
      ASSERT_EQ(a.size(), x.size());
      EXPECT_TRUE(a == b) << to_string(kind);
      EXPECT_GE(a.minCoeff(), 0.0f) << to_string(kind);
      EXPECT_LE(a.maxCoeff(), 1.0f) << to_string(kind);
      EXPECT_FALSE(a == x) << to_string(kind) << " severity " << s << " had no effect";
    }
  }
}

TEST(Corrupt, UnknownKindAndBadSeverity) {
  EXPECT_THROW(corruption_kind_from_string("fog"), InvalidArgument);
  EXPECT_EQ(corruption_kind_from_string("motion_blur"), CorruptionKind::kMotionBlur);
  const Vector<float> x = Vector<float>::Constant(16, 0.5f);
  EXPECT_THROW(corrupt(x, {1, 4, 4}, {CorruptionKind::kContrast, 0}, 1), InvalidArgument);
  EXPECT_THROW(corrupt(x, {1, 4, 4}, {CorruptionKind::kContrast, 6}, 1), InvalidArgument);
  EXPECT_THROW(corrupt(x, {1, 4, 4}, {static_cast<CorruptionKind>(17), 1}, 1), InvalidArgument);
}

// Mean L2 distortion per severity over 100 seeds, strictly increasing at 95%
// one-sided confidence on paired differences.
TEST(Corrupt, NoiseDistortionIncreasesWithSeverity) {
  const Dataset ds = testing::random_dataset(1, {3, 16, 16}, 1, 21);
  const Vector<float> x = ds.example(0).image;
  for (CorruptionKind kind : all_corruption_kinds()) {
    if (!is_noise_kind(kind)) continue;
    std::vector<std::vector<double>> dist(kNumSeverities);
    for (int seed = 0; seed < 100; ++seed)
      for (int s = 1; s <= kNumSeverities; ++s)
        dist[static_cast<std::size_t>(s - 1)].push_back(
            (corrupt(x, ds.shape(), {kind, s}, static_cast<std::uint64_t>(seed)) - x)
                .template cast<double>()
                .norm());
    for (int s = 1; s < kNumSeverities; ++s) {
      const auto& lo = dist[static_cast<std::size_t>(s - 1)];
      const auto& hi = dist[static_cast<std::size_t>(s)];
      double mean = 0.0;
      double sq = 0.0;
      for (std::size_t i = 0; i < lo.size(); ++i) {
        const double d = hi[i] - lo[i];
        mean += d;
        sq += d * d;
      }
      const double n = static_cast<double>(lo.size());
      mean /= n;
      const double se = std::sqrt(std::max(0.0, sq / n - mean * mean) / (n - 1));
      EXPECT_GT(mean - 1.645 * se, 0.0) << to_string(kind) << " severity " << s << " -> " << s + 1;
    }
  }
}

TEST(CorruptDataset, PerExampleSeedsAndLabelsKept) {
  const Dataset ds = testing::random_dataset(6, {1, 8, 8}, 3, 5);
  const Dataset c = corrupt_dataset(ds, {CorruptionKind::kShotNoise, 2}, 7);
  EXPECT_EQ(c.labels(), ds.labels());
  EXPECT_TRUE(c.images() == corrupt_dataset(ds, {CorruptionKind::kShotNoise, 2}, 7).images());
  EXPECT_GE(c.images().minCoeff(), 0.0f);
  EXPECT_LE(c.images().maxCoeff(), 1.0f);
}

}  // namespace
}  // namespace varmix
