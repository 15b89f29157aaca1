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

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "varmix/data/corruption.hpp"
#include "varmix/data/loaders.hpp"
#include "varmix/inference/inference.hpp"
#include "varmix/metrics/metrics.hpp"
#include "varmix/model/model.hpp"
#include "varmix/training/training.hpp"
#include "varmix/vae/vae.hpp"

namespace varmix {

struct DatasetSpec {
  std::string kind = "mnist";  // mnist | cifar10
  std::filesystem::path path = "data/mnist-subset";
  Index train_per_class = 0;  // 0 keeps every example
  Index test_per_class = 0;
  bool operator==(const DatasetSpec&) const = default;
};

void to_json(nlohmann::json& j, const DatasetSpec& d);
void from_json(const nlohmann::json& j, DatasetSpec& d);

struct NamedPolicy {
  std::string name;
  InferencePolicy policy;
  bool operator==(const NamedPolicy&) const = default;
};

void to_json(nlohmann::json& j, const NamedPolicy& p);
void from_json(const nlohmann::json& j, NamedPolicy& p);

struct MetricsToggles {
  Index eval_examples = 0;  // 0 evaluates the whole test split
  Index batch_size = 100;
  bool calibration = true;
  int ece_bins = kDefaultCalibrationBins;
  bool linearity = true;
  Index linearity_examples = 100;
  std::vector<double> linearity_grid = default_linearity_grid();
  LinearityConfig linearity_config;
  bool corruption = false;
  std::vector<CorruptionKind> corruption_kinds;  // empty means all kinds
  bool latent_stats = false;
  Index latent_stat_samples = 1000;
  bool operator==(const MetricsToggles&) const = default;
};

void to_json(nlohmann::json& j, const MetricsToggles& m);
void from_json(const nlohmann::json& j, MetricsToggles& m);

/// Everything one run needs. Component seeds are not read from the file;
/// derive_component_seeds() fills them from the global seed.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs/default";
  DatasetSpec dataset;
  ModelConfig model;
  std::optional<VaeConfig> vae;
  TrainConfig train;
  std::vector<AttackProfile> attacks = default_attack_profiles();
  std::vector<NamedPolicy> inference{{"plain", {}}};
  MetricsToggles metrics;

  void derive_component_seeds();
  /// Names unique within lists, shapes consistent, every part valid.
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

/// Parses a config file. Errors name the offending field. Relative dataset and
/// checkpoint paths are resolved against the file's directory when they exist
/// there, else left relative to the working directory.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Named training setups: erm, mixup, manifold-mixup, varerm, varmixup, at,
/// iat, variat. Unknown names throw ConfigError listing the presets.
std::vector<std::string> preset_names();
TrainConfig apply_preset(const std::string& name, TrainConfig base);

/// Git-style object id: SHA-1 of "blob <size>\0" + canonical JSON dump.
std::string content_hash(const nlohmann::json& j);

/// content_hash of the config without output_dir, so moving a run keeps its identity.
std::string experiment_hash(const ExperimentConfig& config);

/// UTC time as 2026-01-02T03:04:05Z.
std::string iso_timestamp(std::chrono::system_clock::time_point t = std::chrono::system_clock::now());

/// Exclusive ownership of a run directory through a lock file created with
/// O_EXCL; a second holder gets ConfigError naming the owning pid.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

inline constexpr char kRunRecordFile[] = "run.json";
inline constexpr char kLockFile[] = ".lock";

struct CommandEntry {
  std::string command;
  std::string config_hash;
  std::string started;
  std::string finished;
};

/// Config echo, its hash, timestamps, artifact paths (relative to the run
/// directory) and headline metrics, merged across the commands run in a directory.
struct RunRecord {
  nlohmann::json config;
  std::string config_hash;
  std::string created;
  std::string updated;
  std::map<std::string, std::string> artifacts;
  std::map<std::string, double> metrics;
  std::vector<CommandEntry> history;
};

void to_json(nlohmann::json& j, const RunRecord& r);
void from_json(const nlohmann::json& j, RunRecord& r);

/// Empty record when the directory has none yet.
RunRecord read_run_record(const std::filesystem::path& dir);
void write_run_record(const std::filesystem::path& dir, const RunRecord& record);

/// Regular files under dir not listed as artifacts (the record and lock excluded).
std::vector<std::filesystem::path> find_orphans(const std::filesystem::path& dir);

/// Parsed --sweep argument: "name=start:stop:step" or "name=v1,v2,...".
struct SweepSpec {
  std::string parameter;  // lambda-mi | n-mi | eta
  std::vector<double> values;
};

SweepSpec parse_sweep(const std::string& text);

struct LoadedData {
  Dataset train;
  Dataset test;
};

/// Loads and subsamples the configured dataset.
LoadedData load_data(const DatasetSpec& spec, std::uint64_t seed);

}  // namespace varmix
