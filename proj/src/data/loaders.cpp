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

#include "varmix/data/loaders.hpp"

#include <zlib.h>

#include <array>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "varmix/core/errors.hpp"

namespace fs = std::filesystem;

namespace varmix {
namespace {

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.empty()) throw IngestionError("file is empty: " + path.string());
  return bytes;
}

// gzread passes uncompressed files through unchanged, so one path serves both.
std::vector<std::uint8_t> read_maybe_gz(const fs::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (f == nullptr) throw IngestionError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes;
  std::array<std::uint8_t, 1 << 16> chunk{};
  int n = 0;
  while ((n = gzread(f, chunk.data(), static_cast<unsigned>(chunk.size()))) > 0)
    bytes.insert(bytes.end(), chunk.begin(), chunk.begin() + n);
  const bool failed = n < 0;
  gzclose(f);
  if (failed) throw IngestionError("corrupt compressed stream in " + path.string());
  if (bytes.empty()) throw IngestionError("file is empty: " + path.string());
  return bytes;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

fs::path resolve_idx(const fs::path& dir, const std::string& name) {
  if (fs::exists(dir / name)) return dir / name;
  if (fs::exists(dir / (name + ".gz"))) return dir / (name + ".gz");
  throw IngestionError("missing MNIST file: " + (dir / name).string());
}

Dataset read_cifar_files(const std::vector<fs::path>& files, Split split) {
  std::vector<std::vector<std::uint8_t>> blobs;
  Index records = 0;
  for (const fs::path& f : files) {
    if (!fs::exists(f)) throw IngestionError("missing CIFAR-10 file: " + f.string());
    blobs.push_back(read_file(f));
    const auto size = static_cast<Index>(blobs.back().size());
    if (size % kCifarRecordBytes != 0) {
      throw FormatError("record length mismatch in " + f.string() + ": " +
                        std::to_string(size) + " bytes is not a multiple of " +
                        std::to_string(kCifarRecordBytes));
    }
    records += size / kCifarRecordBytes;
  }
  const TensorShape shape{3, 32, 32};
  Matrix<float> images(records, shape.size());
  std::vector<int> labels(static_cast<std::size_t>(records));
  Index row = 0;
  for (std::size_t b = 0; b < blobs.size(); ++b) {
    const auto& blob = blobs[b];
    for (std::size_t off = 0; off < blob.size(); off += kCifarRecordBytes) {
      const int label = blob[off];
      if (label > 9) {
        throw FormatError("label " + std::to_string(label) + " out of range in " +
                          files[b].string());
      }
      labels[static_cast<std::size_t>(row)] = label;
      for (Index p = 0; p < shape.size(); ++p)
        images(row, p) = static_cast<float>(blob[off + 1 + static_cast<std::size_t>(p)]) / 255.0f;
      ++row;
    }
  }
  return Dataset(std::move(images), std::move(labels), shape, 10, split);
}

}  // namespace

TrainTestPair load_cifar10(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IngestionError("not a directory: " + dir.string());
  std::vector<fs::path> train_files;
  for (int i = 1; i <= 5; ++i) train_files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
  Dataset train = read_cifar_files(train_files, Split::kTrain);
  Dataset test = read_cifar_files({dir / "test_batch.bin"}, Split::kTest);
  return {std::move(train), std::move(test)};
}

Dataset load_idx_pair(const fs::path& images_path, const fs::path& labels_path, Split split) {
  const std::vector<std::uint8_t> img = read_maybe_gz(images_path);
  const std::vector<std::uint8_t> lab = read_maybe_gz(labels_path);
  if (img.size() < 16) throw IngestionError("truncated IDX header in " + images_path.string());
  if (lab.size() < 8) throw IngestionError("truncated IDX header in " + labels_path.string());
  if (read_be32(img, 0) != kIdxImageMagic)
    throw FormatError("bad IDX magic number in " + images_path.string());
  if (read_be32(lab, 0) != kIdxLabelMagic)
    throw FormatError("bad IDX magic number in " + labels_path.string());

  const Index n_images = read_be32(img, 4);
  const Index rows = read_be32(img, 8);
  const Index cols = read_be32(img, 12);
  const Index n_labels = read_be32(lab, 4);
  if (n_images != n_labels) {
    throw FormatError("image/label count mismatch: " + std::to_string(n_images) + " images in " +
                      images_path.string() + ", " + std::to_string(n_labels) + " labels in " +
                      labels_path.string());
  }
  const TensorShape shape{1, rows, cols};
  if (static_cast<Index>(img.size()) != 16 + n_images * shape.size())
    throw FormatError("image payload length mismatch in " + images_path.string());
  if (static_cast<Index>(lab.size()) != 8 + n_labels)
    throw FormatError("label payload length mismatch in " + labels_path.string());

  Matrix<float> images(n_images, shape.size());
  std::vector<int> labels(static_cast<std::size_t>(n_images));
  for (Index i = 0; i < n_images; ++i) {
    const int y = lab[static_cast<std::size_t>(8 + i)];
    if (y > 9) throw FormatError("label out of range in " + labels_path.string());
    labels[static_cast<std::size_t>(i)] = y;
    for (Index p = 0; p < shape.size(); ++p)
      images(i, p) = static_cast<float>(img[static_cast<std::size_t>(16 + i * shape.size() + p)]) / 255.0f;
  }
  return Dataset(std::move(images), std::move(labels), shape, 10, split);
}

TrainTestPair load_mnist(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IngestionError("not a directory: " + dir.string());
  Dataset train = load_idx_pair(resolve_idx(dir, "train-images-idx3-ubyte"),
                                resolve_idx(dir, "train-labels-idx1-ubyte"), Split::kTrain);
  Dataset test = load_idx_pair(resolve_idx(dir, "t10k-images-idx3-ubyte"),
                               resolve_idx(dir, "t10k-labels-idx1-ubyte"), Split::kTest);
  return {std::move(train), std::move(test)};
}

}  // namespace varmix
