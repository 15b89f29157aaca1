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

#include <CLI11.hpp>

#include <iostream>

#include "varmix/cli/commands.hpp"
#include "varmix/core/errors.hpp"

namespace {

void add_common(CLI::App* cmd, varmix::CommandOptions& o) {
  cmd->add_option("--config", o.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Global seed; every component seed derives from it");
  cmd->add_option("--out", o.out, "Run directory (overrides output_dir)");
  cmd->add_flag("--quiet", o.quiet, "No progress lines on stderr");
}

void add_inference(CLI::App* cmd, varmix::CommandOptions& o) {
  cmd->add_option("--inference", o.inference, "Single inference policy: plain, mi-ol or var-mi")
      ->check(CLI::IsMember({"plain", "mi-ol", "var-mi"}));
  cmd->add_option("--lambda-mi", o.lambda_mi, "Mixing weight of the input in mixup inference");
  cmd->add_option("--n-mi", o.n_mi, "Pool draws averaged per prediction");
  cmd->add_option("--attack-profile", o.attack_profiles, "Attack profile names to run (repeatable)");
}

void print_record(const varmix::RunRecord& r, bool quiet) {
  if (quiet) return;
  for (const auto& [key, value] : r.metrics) std::cout << key << " = " << value << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial robustness laboratory: MMD-VAE, vicinal training, mixup inference and attacks"};
  app.require_subcommand(1);
  varmix::CommandOptions o;

  CLI::App* train_vae = app.add_subcommand("train-vae", "Train the MMD-VAE and write vae.ckpt");
  add_common(train_vae, o);
  train_vae->add_flag("--adversarial", o.adversarial, "Train on PGD-perturbed inputs (train.attack budget)");

  CLI::App* train = app.add_subcommand("train", "Train a classifier and write model.ckpt");
  add_common(train, o);
  train->add_option("--preset", o.preset, "Training preset (erm, mixup, manifold-mixup, varerm, varmixup, at, iat, variat)");
  train->add_option("--epoch-scale", o.epoch_scale, "Fraction of the reference epoch budget");

  CLI::App* attack = app.add_subcommand("attack", "Generate adversarial sets against the base model");
  add_common(attack, o);
  attack->add_option("--attack-profile", o.attack_profiles, "Attack profile names to run (repeatable)");

  CLI::App* eval = app.add_subcommand("eval", "Oblivious robustness, calibration and local linearity report");
  add_common(eval, o);
  add_inference(eval, o);
  eval->add_option("--sweep", o.sweep, "Also sweep lambda-mi or n-mi, e.g. lambda-mi=0:1:0.1");

  CLI::App* corrupt = app.add_subcommand("corrupt-eval", "Accuracy under generated corruptions");
  add_common(corrupt, o);
  add_inference(corrupt, o);

  CLI::App* sweep = app.add_subcommand("sweep", "Accuracy across lambda-mi, n-mi or eta values");
  add_common(sweep, o);
  add_inference(sweep, o);
  sweep->add_option("--sweep", o.sweep, "name=start:stop:step or name=v1,v2,...")->required();
  sweep->add_option("--preset", o.preset, "Training preset for eta sweeps");
  sweep->add_option("--epoch-scale", o.epoch_scale, "Fraction of the reference epoch budget for eta sweeps");

  std::vector<std::filesystem::path> runs;
  std::filesystem::path report_out;
  CLI::App* report = app.add_subcommand("report", "Compare eval metrics of several runs");
  report->add_option("runs", runs, "Run directories")->required();
  report->add_option("--out", report_out, "Directory for report.csv and report.txt");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*report) {
      std::cout << varmix::cmd_report(runs, report_out).text;
    } else if (*train_vae) {
      print_record(varmix::cmd_train_vae(o), o.quiet);
    } else if (*train) {
      print_record(varmix::cmd_train(o), o.quiet);
    } else if (*attack) {
      print_record(varmix::cmd_attack(o), o.quiet);
    } else if (*eval) {
      print_record(varmix::cmd_eval(o), o.quiet);
    } else if (*corrupt) {
      print_record(varmix::cmd_corrupt_eval(o), o.quiet);
    } else if (*sweep) {
      print_record(varmix::cmd_sweep(o), o.quiet);
    }
  } catch (const varmix::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
