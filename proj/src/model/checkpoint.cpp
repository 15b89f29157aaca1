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

#include "varmix/model/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "varmix/core/errors.hpp"

namespace fs = std::filesystem;

namespace varmix {
namespace {

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const fs::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw FormatError("truncated checkpoint " + path.string());
  return v;
}

void put_vector(std::ostream& out, const Vector<double>& v) {
  put<std::uint64_t>(out, static_cast<std::uint64_t>(v.size()));
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

Vector<double> get_vector(std::istream& in, const fs::path& path) {
  const auto n = get<std::uint64_t>(in, path);
  if (n > (std::uint64_t{1} << 34)) throw FormatError("implausible tensor length in " + path.string());
  Vector<double> v(static_cast<Index>(n));
  if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double))))
    throw FormatError("truncated checkpoint " + path.string());
  return v;
}

}  // namespace

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IngestionError("cannot write " + tmp.string());
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    const std::string header = ckpt.header.dump();
    put<std::uint64_t>(out, header.size());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    put_vector(out, ckpt.params);
    put_vector(out, ckpt.buffers);
    if (!out) throw IngestionError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open checkpoint " + path.string());
  char magic[sizeof(kCheckpointMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw FormatError("not a checkpoint file: " + path.string());
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " in " + path.string());
  const auto header_len = get<std::uint64_t>(in, path);
  if (header_len > (std::uint64_t{1} << 30)) throw FormatError("implausible header length in " + path.string());
  std::string header(header_len, '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(header_len)))
    throw FormatError("truncated checkpoint " + path.string());
  Checkpoint ckpt;
  try {
    ckpt.header = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  ckpt.params = get_vector(in, path);
  ckpt.buffers = get_vector(in, path);
  return ckpt;
}

template <typename Scalar>
void save_model(const fs::path& path, const Model<Scalar>& model, const nlohmann::json& meta) {
  Checkpoint ckpt;
  ckpt.header = {{"kind", "classifier"}, {"model", model.config()}, {"meta", meta}};
  ckpt.params = model.net().params().template cast<double>();
  ckpt.buffers = model.net().buffers().template cast<double>();
  save_checkpoint(path, ckpt);
}

template <typename Scalar>
Model<Scalar> load_model(const fs::path& path, nlohmann::json* meta) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.header.value("kind", std::string()) != "classifier")
    throw FormatError(path.string() + " is not a classifier checkpoint");
  Model<Scalar> model = build_model<Scalar>(ckpt.header.at("model").get<ModelConfig>());
  if (ckpt.params.size() != model.net().params().size() || ckpt.buffers.size() != model.net().buffers().size())
    throw FormatError("checkpoint tensor sizes do not match the architecture in " + path.string());
  model.net().params() = ckpt.params.cast<Scalar>();
  model.net().buffers() = ckpt.buffers.cast<Scalar>();
  if (meta != nullptr) *meta = ckpt.header.value("meta", nlohmann::json::object());
  return model;
}

template void save_model<float>(const fs::path&, const Model<float>&, const nlohmann::json&);
template void save_model<double>(const fs::path&, const Model<double>&, const nlohmann::json&);
template Model<float> load_model<float>(const fs::path&, nlohmann::json*);
template Model<double> load_model<double>(const fs::path&, nlohmann::json*);

}  // namespace varmix
