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

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "varmix/core/budget.hpp"
#include "varmix/data/dataset.hpp"
#include "varmix/model/model.hpp"
#include "varmix/model/network.hpp"
#include "varmix/vae/codec.hpp"
#include "varmix/vicinal/vicinal.hpp"

namespace varmix {

// varIAT (VarMixup on interpolated adversarial training) is experimental.
enum class Trainer { kErm, kMixup, kManifoldMixup, kVarErm, kVarMixup, kAt, kIat, kVarIat };

std::string_view to_string(Trainer trainer);
Trainer trainer_from_string(std::string_view name);
bool trainer_needs_codec(Trainer trainer);
bool trainer_is_adversarial(Trainer trainer);

/// Full-scale epoch budget of each trainer before epoch_scale is applied.
int reference_epochs(Trainer trainer);

struct TrainConfig {
  Trainer trainer = Trainer::kErm;
  // Unset: round(reference_epochs(trainer) * epoch_scale), at least 1.
  std::optional<int> epochs;
  double epoch_scale = 0.2;
  Index batch_size = 128;
  double learning_rate = 1e-3;
  MixupConfig mixup;
  AttackBudget attack{8.0 / 255.0, 2.0 / 255.0, 10, 0.0, 1.0};
  std::string vae_checkpoint;
  std::uint64_t seed = 0;

  int resolved_epochs() const;
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochLog {
  int epoch = 0;
  double loss = 0;        // mean training objective
  double clean_loss = 0;  // mean cross-entropy on the clean batch (adversarial trainers)
  double adv_loss = 0;    // mean loss on the perturbed half (adversarial trainers)
  Index batches = 0;
  Index ascent_batches = 0;  // batches whose perturbed loss >= clean loss
  double seconds = 0;
  std::optional<double> eval_accuracy;
};

void to_json(nlohmann::json& j, const EpochLog& e);
void from_json(const nlohmann::json& j, EpochLog& e);

struct StepLoss {
  double loss = 0;
  double clean_loss = 0;
  double adv_loss = 0;
};

/// Gradient of one trainer's objective on one batch. Parameter gradients are
/// written to `grad`; the returned tape belongs to the clean forward pass and
/// carries the batch-norm statistics to commit.
template <typename Scalar>
struct StepContext {
  const Model<Scalar>& model;
  const LatentCodec<Scalar>* codec = nullptr;
  Vector<Scalar>& grad;
  std::vector<Tape<Scalar>> tapes;
};

/// Cross-entropy on (x, soft labels).
template <typename Scalar>
StepLoss erm_step(StepContext<Scalar>& ctx, const Matrix<Scalar>& x, const Matrix<Scalar>& y);

/// Cross-entropy on PGD(x, y); clean_loss is the loss on x.
template <typename Scalar>
StepLoss at_step(StepContext<Scalar>& ctx, const Matrix<Scalar>& x, const std::vector<int>& labels,
                 const AttackBudget& budget, std::uint64_t seed);

/// Mean of the mixup loss on clean pairs (plan_clean) and on PGD-perturbed pairs
/// (plan_adv). With a codec, both halves are mixed in latent space.
template <typename Scalar>
StepLoss iat_step(StepContext<Scalar>& ctx, const Matrix<Scalar>& x, const std::vector<int>& labels,
                  const AttackBudget& budget, const MixPlan& plan_clean, const MixPlan& plan_adv,
                  std::uint64_t seed);

/// Mixup of hidden(layer) activations, continued through the rest of the network.
template <typename Scalar>
StepLoss manifold_mixup_step(StepContext<Scalar>& ctx, const Matrix<Scalar>& x, const Matrix<Scalar>& y,
                             const MixPlan& plan, Index layer);

struct TrainHooks {
  std::function<void(const EpochLog&)> on_epoch;
  std::function<void(int epoch, Index batch, const StepLoss&)> on_batch;
};

template <typename Scalar>
struct TrainResult {
  Model<Scalar> model;
  std::vector<EpochLog> curve;
};

/// Trains a freshly built model. Latent trainers need `codec`; an
/// `eval_set` adds clean test accuracy to every epoch log.
template <typename Scalar>
TrainResult<Scalar> train(const Dataset& data, const ModelConfig& model_config, const TrainConfig& config,
                          const LatentCodec<Scalar>* codec = nullptr, const TrainHooks& hooks = {},
                          const Dataset* eval_set = nullptr);

struct RiskReport {
  double empirical_risk = 0;
  double adversarial_risk = 0;
  Index examples = 0;
};

void to_json(nlohmann::json& j, const RiskReport& r);

/// Mean cross-entropy on the data and on its PGD inner maximizer.
template <typename Scalar>
RiskReport estimate_risks(const Model<Scalar>& model, const Dataset& data, const AttackBudget& budget,
                          std::uint64_t seed, Index batch_size = 256);

/// Plain clean accuracy.
template <typename Scalar>
double accuracy(const Model<Scalar>& model, const Dataset& data, Index batch_size = 500);

}  // namespace varmix
