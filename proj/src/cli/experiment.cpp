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

#include "varmix/cli/experiment.hpp"

#include <fcntl.h>
#include <openssl/evp.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include "varmix/core/errors.hpp"

namespace varmix {

namespace {

// Runs parse() and prefixes any failure with the field path.
template <typename F>
void field(const std::string& name, F&& parse) {
  try {
    parse();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config field '" + name + "': " + e.what());
  } catch (const Error& e) {
    const std::string what = e.what();
    if (what.rfind("config field '", 0) == 0) throw;
    throw ConfigError("config field '" + name + "': " + what);
  }
}

void reject_unknown(const nlohmann::json& j, const std::string& where, std::initializer_list<const char*> known) {
  if (!j.is_object()) throw ConfigError("config field '" + where + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
      throw ConfigError("config field '" + (where.empty() ? key : where + "." + key) + "' is not recognized");
  }
}

template <typename T>
void check_unique(const std::vector<T>& items, const std::string& what) {
  std::set<std::string> seen;
  for (const T& item : items) {
    if (item.name.empty()) throw ConfigError(what + " entry without a name");
    if (!seen.insert(item.name).second) throw ConfigError(what + " name '" + item.name + "' is used twice");
  }
}

}  // namespace

void to_json(nlohmann::json& j, const DatasetSpec& d) {
  j = nlohmann::json{{"kind", d.kind},
                     {"path", d.path.string()},
                     {"train_per_class", d.train_per_class},
                     {"test_per_class", d.test_per_class}};
}

void from_json(const nlohmann::json& j, DatasetSpec& d) {
  reject_unknown(j, "dataset", {"kind", "path", "train_per_class", "test_per_class"});
  const DatasetSpec def;
  d.kind = j.value("kind", def.kind);
  if (d.kind != "mnist" && d.kind != "cifar10")
    throw ConfigError("unknown dataset kind '" + d.kind + "' (expected mnist or cifar10)");
  d.path = j.value("path", def.path.string());
  d.train_per_class = j.value("train_per_class", def.train_per_class);
  d.test_per_class = j.value("test_per_class", def.test_per_class);
  if (d.train_per_class < 0 || d.test_per_class < 0) throw ConfigError("per-class counts must be >= 0");
}

void to_json(nlohmann::json& j, const NamedPolicy& p) {
  j = p.policy;
  j["name"] = p.name;
}

void from_json(const nlohmann::json& j, NamedPolicy& p) {
  p.name = j.at("name").get<std::string>();
  p.policy = j.get<InferencePolicy>();
  p.policy.validate();
}

void to_json(nlohmann::json& j, const MetricsToggles& m) {
  nlohmann::json kinds = nlohmann::json::array();
  for (CorruptionKind k : m.corruption_kinds) kinds.push_back(std::string(to_string(k)));
  j = nlohmann::json{{"eval_examples", m.eval_examples},
                     {"batch_size", m.batch_size},
                     {"calibration", m.calibration},
                     {"ece_bins", m.ece_bins},
                     {"linearity", m.linearity},
                     {"linearity_examples", m.linearity_examples},
                     {"linearity_grid", m.linearity_grid},
                     {"linearity_config", m.linearity_config},
                     {"corruption", m.corruption},
                     {"corruption_kinds", kinds},
                     {"latent_stats", m.latent_stats},
                     {"latent_stat_samples", m.latent_stat_samples}};
}

void from_json(const nlohmann::json& j, MetricsToggles& m) {
  reject_unknown(j, "metrics",
                 {"eval_examples", "batch_size", "calibration", "ece_bins", "linearity", "linearity_examples",
                  "linearity_grid", "linearity_config", "corruption", "corruption_kinds", "latent_stats",
                  "latent_stat_samples"});
  const MetricsToggles d;
  m.eval_examples = j.value("eval_examples", d.eval_examples);
  m.batch_size = j.value("batch_size", d.batch_size);
  m.calibration = j.value("calibration", d.calibration);
  m.ece_bins = j.value("ece_bins", d.ece_bins);
  m.linearity = j.value("linearity", d.linearity);
  m.linearity_examples = j.value("linearity_examples", d.linearity_examples);
  m.linearity_grid = j.value("linearity_grid", d.linearity_grid);
  m.linearity_config = j.contains("linearity_config") ? j.at("linearity_config").get<LinearityConfig>()
                                                      : d.linearity_config;
  m.corruption = j.value("corruption", d.corruption);
  m.corruption_kinds.clear();
  for (const auto& k : j.value("corruption_kinds", nlohmann::json::array()))
    m.corruption_kinds.push_back(corruption_kind_from_string(k.get<std::string>()));
  m.latent_stats = j.value("latent_stats", d.latent_stats);
  m.latent_stat_samples = j.value("latent_stat_samples", d.latent_stat_samples);
  if (m.eval_examples < 0) throw ConfigError("eval_examples must be >= 0");
  if (m.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (m.ece_bins < 1) throw ConfigError("ece_bins must be >= 1");
  if (m.linearity_examples < 1) throw ConfigError("linearity_examples must be >= 1");
  if (m.linearity_grid.empty()) throw ConfigError("linearity_grid is empty");
  for (double e : m.linearity_grid)
    if (!(e >= 0)) throw ConfigError("linearity_grid radii must be >= 0");
  if (m.latent_stat_samples < 2) throw ConfigError("latent_stat_samples must be >= 2");
}

void ExperimentConfig::derive_component_seeds() {
  model.seed = derive_seed(seed, "model");
  train.seed = derive_seed(seed, "train");
  if (vae) vae->seed = derive_seed(seed, "vae");
  for (NamedPolicy& p : inference) p.policy.seed = derive_seed(seed, "inference/" + p.name);
}

void ExperimentConfig::validate() const {
  model.validate();
  train.validate();
  if (vae) {
    vae->validate();
    if (!(vae->image_shape == model.input_shape))
      throw ConfigError("vae.image_shape " + vae->image_shape.str() + " differs from model.input_shape " +
                        model.input_shape.str());
  }
  if (attacks.empty()) throw ConfigError("attacks list is empty");
  if (inference.empty()) throw ConfigError("inference list is empty");
  check_unique(attacks, "attack profile");
  check_unique(inference, "inference policy");
  for (const AttackProfile& a : attacks) a.validate();
  for (const NamedPolicy& p : inference) p.policy.validate();
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"seed", c.seed},
                     {"output_dir", c.output_dir.string()},
                     {"dataset", c.dataset},
                     {"model", c.model},
                     {"train", c.train},
                     {"attacks", c.attacks},
                     {"inference", c.inference},
                     {"metrics", c.metrics}};
  if (c.vae) j["vae"] = *c.vae;
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  reject_unknown(j, "", {"seed", "output_dir", "dataset", "model", "vae", "train", "attacks", "inference", "metrics"});
  const ExperimentConfig d;
  field("seed", [&] { c.seed = j.value("seed", d.seed); });
  field("output_dir", [&] { c.output_dir = j.value("output_dir", d.output_dir.string()); });
  field("dataset", [&] { c.dataset = j.contains("dataset") ? j.at("dataset").get<DatasetSpec>() : d.dataset; });
  field("model", [&] {
    c.model = j.contains("model") ? j.at("model").get<ModelConfig>() : d.model;
    c.model.validate();
  });
  field("vae", [&] {
    c.vae.reset();
    if (j.contains("vae") && !j.at("vae").is_null()) {
      c.vae = j.at("vae").get<VaeConfig>();
      c.vae->validate();
    }
  });
  field("train", [&] {
    c.train = j.contains("train") ? j.at("train").get<TrainConfig>() : d.train;
    c.train.validate();
  });
  field("attacks", [&] {
    c.attacks = j.contains("attacks") ? j.at("attacks").get<std::vector<AttackProfile>>() : d.attacks;
  });
  field("inference", [&] {
    c.inference = j.contains("inference") ? j.at("inference").get<std::vector<NamedPolicy>>() : d.inference;
  });
  field("metrics", [&] { c.metrics = j.contains("metrics") ? j.at("metrics").get<MetricsToggles>() : d.metrics; });
  c.derive_component_seeds();
  c.validate();
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  ExperimentConfig c = j.get<ExperimentConfig>();
  const std::filesystem::path base = path.parent_path();
  auto resolve = [&](std::filesystem::path p) {
    if (p.empty() || p.is_absolute() || std::filesystem::exists(p)) return p;
    return base / p;
  };
  c.dataset.path = resolve(c.dataset.path);
  if (!c.train.vae_checkpoint.empty()) c.train.vae_checkpoint = resolve(c.train.vae_checkpoint).string();
  return c;
}

std::vector<std::string> preset_names() {
  return {"erm", "mixup", "manifold-mixup", "varerm", "varmixup", "at", "iat", "variat"};
}

TrainConfig apply_preset(const std::string& name, TrainConfig base) {
  const AttackBudget at_budget{8.0 / 255.0, 2.0 / 255.0, 10};
  base.epochs.reset();
  base.mixup = MixupConfig{};
  base.attack = at_budget;
  if (name == "erm") {
    base.trainer = Trainer::kErm;
  } else if (name == "mixup") {
    base.trainer = Trainer::kMixup;
    base.mixup.eta = 1.0;
    base.mixup.source = MixSource::kInput;
  } else if (name == "manifold-mixup") {
    base.trainer = Trainer::kManifoldMixup;
    base.mixup.eta = 1.0;
    base.mixup.source = MixSource::kHidden;
  } else if (name == "varerm") {
    base.trainer = Trainer::kVarErm;
  } else if (name == "varmixup") {
    base.trainer = Trainer::kVarMixup;
    base.mixup.eta = 1.0;
    base.mixup.source = MixSource::kLatent;
  } else if (name == "at") {
    base.trainer = Trainer::kAt;
  } else if (name == "iat") {
    base.trainer = Trainer::kIat;
    base.mixup.eta = 1.0;
  } else if (name == "variat") {
    base.trainer = Trainer::kVarIat;
    base.mixup.eta = 1.0;
    base.mixup.source = MixSource::kLatent;
  } else {
    std::string list;
    for (const std::string& p : preset_names()) list += (list.empty() ? "" : ", ") + p;
    throw ConfigError("unknown preset '" + name + "' (available: " + list + ")");
  }
  base.validate();
  return base;
}

std::string content_hash(const nlohmann::json& j) {
  const std::string body = j.dump();
  const std::string object = "blob " + std::to_string(body.size()) + std::string(1, '\0') + body;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(object.data(), object.size(), digest, &len, EVP_sha1(), nullptr) != 1)
    throw Error("SHA-1 digest failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

std::string experiment_hash(const ExperimentConfig& config) {
  nlohmann::json j = config;
  j.erase("output_dir");
  return content_hash(j);
}

std::string iso_timestamp(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RunLock::RunLock(const std::filesystem::path& dir) : path_(dir / kLockFile) {
  std::filesystem::create_directories(dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    std::ifstream in(path_);
    std::string owner;
    std::getline(in, owner);
    throw ConfigError("run directory " + dir.string() + " is locked by pid " + (owner.empty() ? "?" : owner) +
                      " (remove " + path_.string() + " if that process is gone)");
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  const ssize_t written = ::write(fd, pid.data(), pid.size());
  ::close(fd);
  if (written != static_cast<ssize_t>(pid.size())) {
    std::filesystem::remove(path_);
    throw IngestionError("cannot write lock file " + path_.string());
  }
}

RunLock::~RunLock() {
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

void to_json(nlohmann::json& j, const RunRecord& r) {
  nlohmann::json history = nlohmann::json::array();
  for (const CommandEntry& e : r.history)
    history.push_back(
        {{"command", e.command}, {"config_hash", e.config_hash}, {"started", e.started}, {"finished", e.finished}});
  j = nlohmann::json{{"config", r.config},   {"config_hash", r.config_hash}, {"created", r.created},
                     {"updated", r.updated}, {"artifacts", r.artifacts},     {"metrics", r.metrics},
                     {"history", history}};
}

void from_json(const nlohmann::json& j, RunRecord& r) {
  r.config = j.at("config");
  r.config_hash = j.at("config_hash").get<std::string>();
  r.created = j.at("created").get<std::string>();
  r.updated = j.at("updated").get<std::string>();
  r.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
  r.metrics = j.at("metrics").get<std::map<std::string, double>>();
  r.history.clear();
  for (const auto& e : j.at("history"))
    r.history.push_back({e.at("command").get<std::string>(), e.at("config_hash").get<std::string>(),
                         e.at("started").get<std::string>(), e.at("finished").get<std::string>()});
}

RunRecord read_run_record(const std::filesystem::path& dir) {
  const std::filesystem::path p = dir / kRunRecordFile;
  if (!std::filesystem::exists(p)) return {};
  std::ifstream in(p);
  if (!in) throw IngestionError("cannot open " + p.string());
  try {
    return nlohmann::json::parse(in).get<RunRecord>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed run record " + p.string() + ": " + e.what());
  }
}

void write_run_record(const std::filesystem::path& dir, const RunRecord& record) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path tmp = dir / (std::string(kRunRecordFile) + ".tmp");
  {
    std::ofstream out(tmp);
    out << nlohmann::json(record).dump(2) << "\n";
    if (!out) throw IngestionError("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, dir / kRunRecordFile);
}

std::vector<std::filesystem::path> find_orphans(const std::filesystem::path& dir) {
  const RunRecord record = read_run_record(dir);
  std::set<std::filesystem::path> known{kRunRecordFile, kLockFile};
  for (const auto& [name, rel] : record.artifacts) known.insert(std::filesystem::path(rel).lexically_normal());
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::filesystem::path rel = std::filesystem::relative(entry.path(), dir).lexically_normal();
    if (!known.count(rel)) out.push_back(rel);
  }
  std::sort(out.begin(), out.end());
  return out;
}

SweepSpec parse_sweep(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("sweep '" + text + "' needs the form name=values");
  SweepSpec s;
  s.parameter = text.substr(0, eq);
  if (s.parameter != "lambda-mi" && s.parameter != "n-mi" && s.parameter != "eta")
    throw ConfigError("unknown sweep parameter '" + s.parameter + "' (expected lambda-mi, n-mi or eta)");
  const std::string values = text.substr(eq + 1);
  auto number = [&](const std::string& v) {
    try {
      std::size_t used = 0;
      const double x = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (const std::exception&) {
      throw ConfigError("sweep value '" + v + "' is not a number");
    }
  };
  if (values.find(':') != std::string::npos) {
    std::vector<double> parts;
    std::stringstream ss(values);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(number(p));
    if (parts.size() != 3) throw ConfigError("sweep range needs start:stop:step");
    const double start = parts[0], stop = parts[1], step = parts[2];
    if (!(step > 0) || stop < start) throw ConfigError("sweep range needs step > 0 and stop >= start");
    const auto count = static_cast<Index>(std::floor((stop - start) / step + 1e-9)) + 1;
    // Grid points are start + k * step, so 0:1:0.1 has eleven exact-as-possible points.
    for (Index k = 0; k < count; ++k) s.values.push_back(start + static_cast<double>(k) * step);
  } else {
    std::stringstream ss(values);
    for (std::string p; std::getline(ss, p, ',');) s.values.push_back(number(p));
  }
  if (s.values.empty()) throw ConfigError("sweep '" + text + "' has no values");
  if (s.parameter == "n-mi")
    for (double v : s.values)
      if (v < 1 || v != std::floor(v)) throw ConfigError("n-mi sweep values must be positive integers");
  return s;
}

LoadedData load_data(const DatasetSpec& spec, std::uint64_t seed) {
  TrainTestPair pair = spec.kind == "cifar10" ? load_cifar10(spec.path) : load_mnist(spec.path);
  Dataset train = spec.train_per_class > 0 ? subsample(pair.train, spec.train_per_class, derive_seed(seed, "data/train"))
                                           : std::move(pair.train);
  Dataset test = spec.test_per_class > 0 ? subsample(pair.test, spec.test_per_class, derive_seed(seed, "data/test"))
                                         : std::move(pair.test);
  return {std::move(train), std::move(test)};
}

}  // namespace varmix
