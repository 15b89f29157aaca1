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

#include <fstream>

#include "test_support.hpp"
#include "varmix/cli/commands.hpp"
#include "varmix/core/errors.hpp"

namespace varmix {
namespace {

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

nlohmann::json parse(const std::string& text) { return nlohmann::json::parse(text); }

TEST(Config, RoundTripIsIdentity) {
  ExperimentConfig c;
  c.seed = 17;
  c.vae = VaeConfig{};
  c.train = apply_preset("varmixup", c.train);
  c.inference.push_back({"mi", {InferenceVariant::kMiOl, 0.4, 12, Averaging::kLogits, 0}});
  c.metrics.corruption_kinds = {CorruptionKind::kContrast};
  c.derive_component_seeds();
  const nlohmann::json once = c;
  const ExperimentConfig back = once.get<ExperimentConfig>();
  EXPECT_TRUE(back == c);
  EXPECT_EQ(nlohmann::json(back), once);
  EXPECT_EQ(experiment_hash(back), experiment_hash(c));
}

TEST(Config, ComponentSeedsDeriveFromTheGlobalSeed) {
  const ExperimentConfig a = parse(R"({"seed": 3, "model": {"seed": 99}})").get<ExperimentConfig>();
  EXPECT_EQ(a.model.seed, derive_seed(3, "model"));
  EXPECT_EQ(a.train.seed, derive_seed(3, "train"));
  EXPECT_EQ(a.inference[0].policy.seed, derive_seed(3, "inference/plain"));
  const ExperimentConfig b = parse(R"({"seed": 4})").get<ExperimentConfig>();
  EXPECT_NE(a.model.seed, b.model.seed);
  EXPECT_NE(a.model.seed, a.train.seed);
}

TEST(Config, ErrorsNameTheField) {
  EXPECT_NE(error_of([] { parse(R"({"train": {"batch_size": "x"}})").get<ExperimentConfig>(); }).find("'train'"),
            std::string::npos);
  EXPECT_NE(error_of([] { parse(R"({"modle": {}})").get<ExperimentConfig>(); }).find("'modle'"), std::string::npos);
  EXPECT_NE(error_of([] { parse(R"({"metrics": {"ece_bin": 3}})").get<ExperimentConfig>(); }).find("metrics.ece_bin"),
            std::string::npos);
  EXPECT_NE(error_of([] { parse(R"({"dataset": {"kind": "svhn"}})").get<ExperimentConfig>(); }).find("'dataset'"),
            std::string::npos);
  EXPECT_NE(error_of([] {
              parse(R"({"attacks": [{"name": "a"}, {"name": "a"}]})").get<ExperimentConfig>();
            }).find("used twice"),
            std::string::npos);
  EXPECT_NE(error_of([] {
              parse(R"({"vae": {"image_shape": [3, 32, 32]}})").get<ExperimentConfig>();
            }).find("image_shape"),
            std::string::npos);

  testing::TempDir dir("cfg");
  std::ofstream(dir.path() / "broken.json") << "{\"seed\": ";
  EXPECT_NE(error_of([&] { load_config(dir.path() / "broken.json"); }).find("not valid JSON"), std::string::npos);
  EXPECT_THROW(load_config(dir.path() / "absent.json"), ConfigError);
}

TEST(Presets, MatchTheBaselineSettings) {
  const TrainConfig mixup = apply_preset("mixup", TrainConfig{});
  EXPECT_EQ(mixup.trainer, Trainer::kMixup);
  EXPECT_EQ(mixup.mixup.eta, 1.0);
  EXPECT_EQ(mixup.mixup.source, MixSource::kInput);
  const TrainConfig at = apply_preset("at", TrainConfig{});
  EXPECT_EQ(at.trainer, Trainer::kAt);
  EXPECT_DOUBLE_EQ(at.attack.epsilon, 8.0 / 255);
  EXPECT_DOUBLE_EQ(at.attack.alpha, 2.0 / 255);
  EXPECT_EQ(at.attack.steps, 10);
  EXPECT_EQ(apply_preset("varmixup", TrainConfig{}).mixup.source, MixSource::kLatent);
  EXPECT_EQ(apply_preset("manifold-mixup", TrainConfig{}).mixup.source, MixSource::kHidden);
  for (const std::string& name : preset_names()) EXPECT_NO_THROW(apply_preset(name, TrainConfig{}));
  const std::string err = error_of([] { apply_preset("cutmix", TrainConfig{}); });
  EXPECT_NE(err.find("cutmix"), std::string::npos);
  for (const std::string& name : preset_names()) EXPECT_NE(err.find(name), std::string::npos);
}

TEST(Hash, MatchesGitBlobIds) {
  EXPECT_EQ(content_hash(parse(R"({"a":1})")), "daa5053ecf5f9a37b2de733d0751cc1ab53ac010");
  ExperimentConfig c;
  const std::string h = experiment_hash(c);
  c.output_dir = "elsewhere";
  EXPECT_EQ(experiment_hash(c), h);
  c.seed = 1;
  EXPECT_NE(experiment_hash(c), h);
  EXPECT_EQ(iso_timestamp(std::chrono::system_clock::time_point{}), "1970-01-01T00:00:00Z");
}

TEST(Lock, SecondHolderIsRejected) {
  testing::TempDir dir("lock");
  {
    RunLock first(dir.path() / "run");
    EXPECT_NE(error_of([&] { RunLock second(dir.path() / "run"); }).find("locked by pid"), std::string::npos);
  }
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "run" / kLockFile));
  EXPECT_NO_THROW(RunLock again(dir.path() / "run"));
}

TEST(Sweep, GridsAndLists) {
  const SweepSpec s = parse_sweep("lambda-mi=0:1:0.1");
  EXPECT_EQ(s.parameter, "lambda-mi");
  ASSERT_EQ(s.values.size(), 11u);
  EXPECT_EQ(s.values.front(), 0.0);
  EXPECT_NEAR(s.values.back(), 1.0, 1e-12);
  EXPECT_EQ(parse_sweep("eta=0.2,1,2").values, (std::vector<double>{0.2, 1, 2}));
  EXPECT_EQ(parse_sweep("n-mi=1:4:1").values.size(), 4u);
  EXPECT_THROW(parse_sweep("lambda-mi"), ConfigError);
  EXPECT_THROW(parse_sweep("gamma=1"), ConfigError);
  EXPECT_THROW(parse_sweep("eta=1:0:0.1"), ConfigError);
  EXPECT_THROW(parse_sweep("eta=0:1"), ConfigError);
  EXPECT_THROW(parse_sweep("eta=a,b"), ConfigError);
  EXPECT_THROW(parse_sweep("n-mi=1.5"), ConfigError);
}

CommandOptions smoke(const std::filesystem::path& out) {
  CommandOptions o;
  o.config = testing::source_dir() / "configs" / "mnist-smoke.json";
  o.out = out;
  o.quiet = true;
  return o;
}

TEST(Commands, OverridesApply) {
  CommandOptions o = smoke("unused");
  o.seed = 5;
  o.preset = "at";
  o.epoch_scale = 0.01;
  o.inference = "mi-ol";
  o.lambda_mi = 0.7;
  o.n_mi = 3;
  o.attack_profiles = {"fgsm", "pgd50"};
  const ExperimentConfig c = resolve_config(o);
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.model.seed, derive_seed(5, "model"));
  EXPECT_EQ(c.train.trainer, Trainer::kAt);
  EXPECT_EQ(c.train.resolved_epochs(), 3);
  ASSERT_EQ(c.inference.size(), 1u);
  EXPECT_EQ(c.inference[0].policy.lambda_mi, 0.7);
  EXPECT_EQ(c.inference[0].policy.n_mi, 3);
  ASSERT_EQ(c.attacks.size(), 2u);
  EXPECT_EQ(c.attacks[1].budget.steps, 50);
  o.attack_profiles = {"cw"};
  EXPECT_NE(error_of([&] { resolve_config(o); }).find("available: pgd10, fgsm"), std::string::npos);
}

TEST(Commands, TrainVaeCheckpointReloadsAndAdversarialDispatch) {
  testing::TempDir dir("cmd");
  const RunRecord r = cmd_train_vae(smoke(dir.path() / "run"));
  ASSERT_EQ(r.artifacts.at("vae"), "vae.ckpt");
  const ExperimentConfig c = resolve_config(smoke(dir.path() / "run"));
  const Vae<float> direct = train_vae<float>(load_data(c.dataset, c.seed).train, *c.vae);
  nlohmann::json meta;
  const Vae<float> loaded = load_vae<float>(dir.path() / "run" / "vae.ckpt", &meta);
  EXPECT_TRUE(loaded.encoder().params() == direct.encoder().params());
  EXPECT_TRUE(loaded.decoder().params() == direct.decoder().params());
  EXPECT_FALSE(meta.at("adversarial").get<bool>());
  EXPECT_EQ(meta.at("config_hash"), r.config_hash);

  CommandOptions adv = smoke(dir.path() / "run");
  adv.adversarial = true;
  const RunRecord ra = cmd_train_vae(adv);
  EXPECT_EQ(ra.history.back().command, "train-vae --adversarial");
  EXPECT_EQ(ra.history.size(), 2u);
  load_vae<float>(dir.path() / "run" / "vae.ckpt", &meta);
  EXPECT_TRUE(meta.at("adversarial").get<bool>());
  EXPECT_TRUE(find_orphans(dir.path() / "run").empty());
  std::ofstream(dir.path() / "run" / "stray.txt") << "x";
  EXPECT_EQ(find_orphans(dir.path() / "run"), std::vector<std::filesystem::path>{"stray.txt"});
}

TEST(Commands, MissingPrerequisitesAreReported) {
  testing::TempDir dir("cmd");
  EXPECT_NE(error_of([&] { cmd_train(smoke(dir.path() / "r")); }).find("run train-vae first"), std::string::npos);
  EXPECT_NE(error_of([&] { cmd_eval(smoke(dir.path() / "r")); }).find("run train first"), std::string::npos);
  CommandOptions o = smoke(dir.path() / "r");
  EXPECT_NE(error_of([&] { cmd_sweep(o); }).find("--sweep"), std::string::npos);
  EXPECT_NE(error_of([&] { cmd_report({dir.path() / "r"}, {}); }).find("no run.json"), std::string::npos);
  EXPECT_NE(error_of([&] { cmd_report({}, {}); }).find("at least one"), std::string::npos);
}

}  // namespace
}  // namespace varmix
