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

#include "varmix/training/training.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "varmix/attacks/attacks.hpp"
#include "varmix/core/errors.hpp"
#include "varmix/model/gradients.hpp"
#include "varmix/model/loss.hpp"
#include "varmix/model/optim.hpp"

namespace varmix {

namespace {

struct TrainerName {
  Trainer trainer;
  std::string_view name;
  int reference_epochs;
};

constexpr TrainerName kTrainers[] = {
    {Trainer::kErm, "erm", 100},      {Trainer::kMixup, "mixup", 150}, {Trainer::kManifoldMixup, "manifold_mixup", 150},
    {Trainer::kVarErm, "varerm", 100}, {Trainer::kVarMixup, "varmixup", 150}, {Trainer::kAt, "at", 250},
    {Trainer::kIat, "iat", 350},      {Trainer::kVarIat, "variat", 350},
};

template <typename Scalar>
LossFn<Scalar> ce() {
  return [](const Matrix<Scalar>& z, const Matrix<Scalar>& t) { return cross_entropy(z, t); };
}

}  // namespace

std::string_view to_string(Trainer trainer) {
  for (const auto& t : kTrainers)
    if (t.trainer == trainer) return t.name;
  return "erm";
}

Trainer trainer_from_string(std::string_view name) {
  std::string known;
  for (const auto& t : kTrainers) {
    if (t.name == name) return t.trainer;
    known += (known.empty() ? "" : ", ") + std::string(t.name);
  }
  throw ConfigError("unknown trainer '" + std::string(name) + "' (expected one of " + known + ")");
}

bool trainer_needs_codec(Trainer trainer) {
  return trainer == Trainer::kVarErm || trainer == Trainer::kVarMixup || trainer == Trainer::kVarIat;
}

bool trainer_is_adversarial(Trainer trainer) {
  return trainer == Trainer::kAt || trainer == Trainer::kIat || trainer == Trainer::kVarIat;
}

int reference_epochs(Trainer trainer) {
  for (const auto& t : kTrainers)
    if (t.trainer == trainer) return t.reference_epochs;
  return 100;
}

int TrainConfig::resolved_epochs() const {
  if (epochs) return *epochs;
  return std::max(1, static_cast<int>(std::lround(reference_epochs(trainer) * epoch_scale)));
}

void TrainConfig::validate() const {
  if (epochs && *epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (!(epoch_scale > 0)) throw ConfigError("train.epoch_scale must be > 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(learning_rate > 0)) throw ConfigError("train.learning_rate must be > 0");
  mixup.validate();
  attack.validate();
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"trainer", std::string(to_string(c.trainer))},
                     {"epochs", c.epochs ? nlohmann::json(*c.epochs) : nlohmann::json(nullptr)},
                     {"epoch_scale", c.epoch_scale},
                     {"batch_size", c.batch_size},
                     {"learning_rate", c.learning_rate},
                     {"mixup", c.mixup},
                     {"attack", c.attack},
                     {"vae_checkpoint", c.vae_checkpoint},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const TrainConfig d;
  c.trainer = trainer_from_string(j.value("trainer", std::string(to_string(d.trainer))));
  c.epochs.reset();
  if (j.contains("epochs") && !j.at("epochs").is_null()) c.epochs = j.at("epochs").get<int>();
  c.epoch_scale = j.value("epoch_scale", d.epoch_scale);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.mixup = j.contains("mixup") ? j.at("mixup").get<MixupConfig>() : d.mixup;
  c.attack = j.contains("attack") ? j.at("attack").get<AttackBudget>() : d.attack;
  c.vae_checkpoint = j.value("vae_checkpoint", d.vae_checkpoint);
  c.seed = j.value("seed", d.seed);
}

void to_json(nlohmann::json& j, const EpochLog& e) {
  j = nlohmann::json{{"epoch", e.epoch},         {"loss", e.loss},       {"clean_loss", e.clean_loss},
                     {"adv_loss", e.adv_loss},   {"batches", e.batches}, {"ascent_batches", e.ascent_batches},
                     {"seconds", e.seconds}};
  j["eval_accuracy"] = e.eval_accuracy ? nlohmann::json(*e.eval_accuracy) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, EpochLog& e) {
  e.epoch = j.at("epoch").get<int>();
  e.loss = j.at("loss").get<double>();
  e.clean_loss = j.value("clean_loss", 0.0);
  e.adv_loss = j.value("adv_loss", 0.0);
  e.batches = j.value("batches", Index{0});
  e.ascent_batches = j.value("ascent_batches", Index{0});
  e.seconds = j.value("seconds", 0.0);
  e.eval_accuracy.reset();
  if (j.contains("eval_accuracy") && !j.at("eval_accuracy").is_null())
    e.eval_accuracy = j.at("eval_accuracy").get<double>();
}

void to_json(nlohmann::json& j, const RiskReport& r) {
  j = nlohmann::json{
      {"empirical_risk", r.empirical_risk}, {"adversarial_risk", r.adversarial_risk}, {"examples", r.examples}};
}

template <typename Scalar>
StepLoss erm_step(StepContext<Scalar>& ctx, const Matrix<Scalar>& x, const Matrix<Scalar>& y) {
  ctx.tapes.assign(1, Tape<Scalar>{});
  ctx.grad.setZero();
  const LossGrad<Scalar> r = loss_and_grad(ctx.model, ce<Scalar>(), x, y, Mode::kTrain, &ctx.grad, &ctx.tapes[0]);
  const auto v = static_cast<double>(r.value);
  return {v, v, 0.0};
}

template <typename Scalar>
StepLoss at_step(StepContext<Scalar>& ctx, const Matrix<Scalar>& x, const std::vector<int>& labels,
                 const AttackBudget& budget, std::uint64_t seed) {
  const Matrix<Scalar> y = one_hot<Scalar>(labels, ctx.model.num_classes());
  const Matrix<Scalar> x_adv = pgd(ctx.model, x, labels, budget, seed, false, Mode::kTrain);
  StepLoss out = erm_step(ctx, x_adv, y);
  out.adv_loss = out.loss;
  out.clean_loss = budget.epsilon == 0
                       ? out.loss
                       : static_cast<double>(cross_entropy(ctx.model.net().forward(x, Mode::kTrain), y).value);
  return out;
}

template <typename Scalar>
StepLoss iat_step(StepContext<Scalar>& ctx, const Matrix<Scalar>& x, const std::vector<int>& labels,
                  const AttackBudget& budget, const MixPlan& plan_clean, const MixPlan& plan_adv,
                  std::uint64_t seed) {
  const Matrix<Scalar> y = one_hot<Scalar>(labels, ctx.model.num_classes());
  const Matrix<Scalar> x_adv = pgd(ctx.model, x, labels, budget, seed, false, Mode::kTrain);
  auto mix = [&](const Matrix<Scalar>& v, const MixPlan& plan) {
    return ctx.codec != nullptr ? varmixup_batch(*ctx.codec, v, y, plan) : mixup_batch(v, y, plan);
  };
  const MixedBatch<Scalar> clean = mix(x, plan_clean);
  const MixedBatch<Scalar> adv = mix(x_adv, plan_adv);

  ctx.tapes.assign(1, Tape<Scalar>{});
  Vector<Scalar> g_clean = Vector<Scalar>::Zero(ctx.grad.size());
  Vector<Scalar> g_adv = Vector<Scalar>::Zero(ctx.grad.size());
  const LossGrad<Scalar> rc =
      loss_and_grad(ctx.model, ce<Scalar>(), clean.x, clean.y, Mode::kTrain, &g_clean, &ctx.tapes[0]);
  const LossGrad<Scalar> ra = loss_and_grad(ctx.model, ce<Scalar>(), adv.x, adv.y, Mode::kTrain, &g_adv);
  ctx.grad = Scalar(0.5) * (g_clean + g_adv);
  StepLoss out;
  out.clean_loss = static_cast<double>(rc.value);
  out.adv_loss = static_cast<double>(ra.value);
  out.loss = static_cast<double>(Scalar(0.5) * (rc.value + ra.value));
  return out;
}

template <typename Scalar>
StepLoss manifold_mixup_step(StepContext<Scalar>& ctx, const Matrix<Scalar>& x, const Matrix<Scalar>& y,
                             const MixPlan& plan, Index layer) {
  const Network<Scalar>& net = ctx.model.net();
  if (layer < 0 || layer >= net.num_blocks()) throw InvalidArgument("manifold mixup layer outside the network");
  ctx.tapes.assign(2, Tape<Scalar>{});
  ctx.grad.setZero();
  const Matrix<Scalar> h = layer == 0 ? x : net.forward_blocks(x, 0, layer, Mode::kTrain, &ctx.tapes[0]);
  const Matrix<Scalar> logits =
      net.forward_blocks(mix_rows(h, plan), layer, net.num_blocks(), Mode::kTrain, &ctx.tapes[1]);
  const LossResult<Scalar> l = cross_entropy(logits, mix_rows(y, plan));
  const Matrix<Scalar> dh = net.backward(l.grad, ctx.tapes[1], &ctx.grad);
  if (layer > 0) net.backward(mix_rows_adjoint(dh, plan), ctx.tapes[0], &ctx.grad);
  if (layer == 0) ctx.tapes.erase(ctx.tapes.begin());
  const auto v = static_cast<double>(l.value);
  return {v, v, 0.0};
}

template <typename Scalar>
double accuracy(const Model<Scalar>& model, const Dataset& data, Index batch_size) {
  if (data.size() == 0) throw InvalidArgument("accuracy on an empty dataset");
  BatchStream stream(data.size(), batch_size, 0, false);
  Index correct = 0;
  while (auto idx = stream.next()) {
    const std::vector<int> pred = argmax_rows(model.logits(data.gather<Scalar>(*idx)));
    for (std::size_t r = 0; r < idx->size(); ++r) correct += pred[r] == data.label((*idx)[r]);
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

template <typename Scalar>
TrainResult<Scalar> train(const Dataset& data, const ModelConfig& model_config, const TrainConfig& config,
                          const LatentCodec<Scalar>* codec, const TrainHooks& hooks, const Dataset* eval_set) {
  config.validate();
  model_config.validate();
  if (!(data.shape() == model_config.input_shape))
    throw ShapeError("model expects " + model_config.input_shape.str() + " but data is " + data.shape().str());
  if (data.num_classes() != model_config.num_classes)
    throw ConfigError("model has " + std::to_string(model_config.num_classes) + " classes, data has " +
                      std::to_string(data.num_classes()));
  const bool latent = trainer_needs_codec(config.trainer);
  if (latent && codec == nullptr)
    throw ConfigError("trainer " + std::string(to_string(config.trainer)) + " needs a VAE (train.vae_checkpoint)");
  if (latent && !(codec->image_shape() == data.shape()))
    throw ShapeError("VAE resolution " + codec->image_shape().str() + " does not match data " + data.shape().str());

  TrainResult<Scalar> result{build_model<Scalar>(model_config), {}};
  Model<Scalar>& model = result.model;
  Adam<Scalar> opt(model.net().params().size(), {config.learning_rate});
  Vector<Scalar> grad(model.net().params().size());
  Rng mix_rng(derive_seed(config.seed, "train-mix"));
  const std::uint64_t batch_seed = derive_seed(config.seed, "train-batches");
  const std::uint64_t attack_seed = derive_seed(config.seed, "train-attack");
  const int epochs = config.resolved_epochs();
  std::uint64_t step_index = 0;

  for (int epoch = 1; epoch <= epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    BatchStream stream(data.size(), config.batch_size, derive_seed(batch_seed, static_cast<std::uint64_t>(epoch)), true);
    EpochLog log;
    log.epoch = epoch;
    while (auto idx = stream.next()) {
      const Matrix<Scalar> x = data.gather<Scalar>(*idx);
      const std::vector<int> labels = data.gather_labels(*idx);
      const Matrix<Scalar> y = one_hot<Scalar>(labels, data.num_classes());
      const Index n = x.rows();
      const std::uint64_t seed = derive_seed(attack_seed, step_index++);
      StepContext<Scalar> ctx{model, codec, grad, {}};
      StepLoss s;
      switch (config.trainer) {
        case Trainer::kErm:
          s = erm_step(ctx, x, y);
          break;
        case Trainer::kMixup: {
          const MixPlan plan = draw_mix_plan(mix_rng, n, config.mixup);
          const MixedBatch<Scalar> m = mixup_batch(x, y, plan);
          s = erm_step(ctx, m.x, m.y);
          break;
        }
        case Trainer::kManifoldMixup: {
          const MixPlan plan = draw_mix_plan(mix_rng, n, config.mixup);
          std::uniform_int_distribution<std::size_t> pick(0, kManifoldMixupLayers.size() - 1);
          s = manifold_mixup_step(ctx, x, y, plan, kManifoldMixupLayers[pick(mix_rng)]);
          break;
        }
        case Trainer::kVarErm:
          s = erm_step(ctx, codec->decode_mean(codec->encode_mean(x)), y);
          break;
        case Trainer::kVarMixup: {
          const MixPlan plan = draw_mix_plan(mix_rng, n, config.mixup);
          const MixedBatch<Scalar> m = varmixup_batch(*codec, x, y, plan);
          s = erm_step(ctx, m.x, m.y);
          break;
        }
        case Trainer::kAt:
          s = at_step(ctx, x, labels, config.attack, seed);
          break;
        case Trainer::kIat:
        case Trainer::kVarIat: {
          const MixPlan plan = draw_mix_plan(mix_rng, n, config.mixup);
          if (config.trainer == Trainer::kIat) ctx.codec = nullptr;
          s = iat_step(ctx, x, labels, config.attack, plan, plan, seed);
          break;
        }
      }
      if (!std::isfinite(s.loss) || !grad.allFinite())
        throw DivergenceError("training loss is not finite at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(log.batches) + " (trainer " + std::string(to_string(config.trainer)) +
                              ", loss " + std::to_string(s.loss) + ")");
      opt.step(model.net().params(), grad);
      for (const Tape<Scalar>& t : ctx.tapes) model.net().commit_statistics(t);
      if (hooks.on_batch) hooks.on_batch(epoch, log.batches, s);
      const auto w = static_cast<double>(n);
      log.loss += w * s.loss;
      log.clean_loss += w * s.clean_loss;
      log.adv_loss += w * s.adv_loss;
      log.ascent_batches += s.adv_loss >= s.clean_loss;
      ++log.batches;
    }
    const auto total = static_cast<double>(data.size());
    log.loss /= total;
    log.clean_loss /= total;
    log.adv_loss /= total;
    if (eval_set != nullptr) log.eval_accuracy = accuracy(model, *eval_set);
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.curve.push_back(log);
    if (hooks.on_epoch) hooks.on_epoch(log);
  }
  return result;
}

template <typename Scalar>
RiskReport estimate_risks(const Model<Scalar>& model, const Dataset& data, const AttackBudget& budget,
                          std::uint64_t seed, Index batch_size) {
  budget.validate();
  if (data.size() == 0) throw InvalidArgument("risk estimate on an empty dataset");
  BatchStream stream(data.size(), batch_size, 0, false);
  RiskReport r;
  Index first = 0;
  while (auto idx = stream.next()) {
    const Matrix<Scalar> x = data.gather<Scalar>(*idx);
    const std::vector<int> labels = data.gather_labels(*idx);
    const Matrix<Scalar> y = one_hot<Scalar>(labels, model.num_classes());
    const Matrix<Scalar> x_adv = pgd(model, x, labels, budget, derive_seed(seed, static_cast<std::uint64_t>(first)));
    r.empirical_risk += cross_entropy(model.logits(x), y).per_example.template cast<double>().sum();
    r.adversarial_risk += cross_entropy(model.logits(x_adv), y).per_example.template cast<double>().sum();
    first += x.rows();
  }
  r.examples = data.size();
  r.empirical_risk /= static_cast<double>(r.examples);
  r.adversarial_risk /= static_cast<double>(r.examples);
  return r;
}

#define VARMIX_INSTANTIATE_TRAINING(S)                                                                        \
  template StepLoss erm_step<S>(StepContext<S>&, const Matrix<S>&, const Matrix<S>&);                         \
  template StepLoss at_step<S>(StepContext<S>&, const Matrix<S>&, const std::vector<int>&,                    \
                               const AttackBudget&, std::uint64_t);                                           \
  template StepLoss iat_step<S>(StepContext<S>&, const Matrix<S>&, const std::vector<int>&,                   \
                                const AttackBudget&, const MixPlan&, const MixPlan&, std::uint64_t);          \
  template StepLoss manifold_mixup_step<S>(StepContext<S>&, const Matrix<S>&, const Matrix<S>&,               \
                                           const MixPlan&, Index);                                            \
  template TrainResult<S> train<S>(const Dataset&, const ModelConfig&, const TrainConfig&,                    \
                                   const LatentCodec<S>*, const TrainHooks&, const Dataset*);                 \
  template RiskReport estimate_risks<S>(const Model<S>&, const Dataset&, const AttackBudget&, std::uint64_t,  \
                                        Index);                                                               \
  template double accuracy<S>(const Model<S>&, const Dataset&, Index);

VARMIX_INSTANTIATE_TRAINING(float)
VARMIX_INSTANTIATE_TRAINING(double)

}  // namespace varmix
