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

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "varmix/cli/experiment.hpp"

namespace varmix {

/// Command-line overrides applied on top of the config file (or the defaults).
struct CommandOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<std::string> preset;
  std::optional<std::string> inference;
  std::optional<double> lambda_mi;
  std::optional<Index> n_mi;
  std::vector<std::string> attack_profiles;
  std::optional<double> epoch_scale;
  bool adversarial = false;
  std::optional<std::string> sweep;
  bool quiet = false;
};

ExperimentConfig resolve_config(const CommandOptions& options);

/// Each command owns the run directory while it runs, writes its artifacts
/// there, merges them into run.json and returns that record.
RunRecord cmd_train_vae(const CommandOptions& options);
RunRecord cmd_train(const CommandOptions& options);
RunRecord cmd_attack(const CommandOptions& options);
RunRecord cmd_eval(const CommandOptions& options);
RunRecord cmd_corrupt_eval(const CommandOptions& options);
RunRecord cmd_sweep(const CommandOptions& options);

struct ComparisonTable {
  std::vector<std::string> columns;  // run, policy, clean, then attacks in sorted order
  std::vector<std::vector<std::string>> rows;
  std::string text;  // aligned table, "attack (clean)" cells in percent
  std::string csv;
};

/// Compares the eval metrics of several run directories. Writes report.csv
/// and report.txt into out_dir when it is non-empty.
ComparisonTable cmd_report(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out_dir);

}  // namespace varmix
