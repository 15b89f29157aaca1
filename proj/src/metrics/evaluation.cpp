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

#include <cstdio>
#include <set>

#include "varmix/core/errors.hpp"
#include "varmix/metrics/metrics.hpp"
#include "varmix/model/loss.hpp"

namespace varmix {

std::string_view to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::kNone:
      return "none";
    case AttackKind::kFgsm:
      return "fgsm";
    case AttackKind::kPgd:
      return "pgd";
    case AttackKind::kPgdTargeted:
      return "pgd-targeted";
    case AttackKind::kSpsa:
      return "spsa";
    case AttackKind::kAdaptiveVarMi:
      return "adaptive-varmi";
  }
  return "none";
}

AttackKind attack_kind_from_string(std::string_view name) {
  for (AttackKind k : {AttackKind::kNone, AttackKind::kFgsm, AttackKind::kPgd, AttackKind::kPgdTargeted,
                       AttackKind::kSpsa, AttackKind::kAdaptiveVarMi})
    if (name == to_string(k)) return k;
  throw ConfigError("unknown attack kind '" + std::string(name) +
                    "' (expected none, fgsm, pgd, pgd-targeted, spsa or adaptive-varmi)");
}

void AttackProfile::validate() const {
  if (name.empty()) throw ConfigError("attack profile needs a name");
  budget.validate();
  if (kind == AttackKind::kSpsa) spsa.validate();
  if (kind == AttackKind::kAdaptiveVarMi) adaptive.validate();
}

void to_json(nlohmann::json& j, const AttackProfile& p) {
  j = nlohmann::json{{"name", p.name},
                     {"kind", std::string(to_string(p.kind))},
                     {"budget", p.budget},
                     {"random_start", p.random_start}};
  if (p.kind == AttackKind::kSpsa) j["spsa"] = p.spsa;
  if (p.kind == AttackKind::kAdaptiveVarMi) j["adaptive"] = p.adaptive;
}

void from_json(const nlohmann::json& j, AttackProfile& p) {
  const AttackProfile d;
  p.name = j.at("name").get<std::string>();
  p.kind = attack_kind_from_string(j.value("kind", std::string(to_string(d.kind))));
  p.budget = j.contains("budget") ? j.at("budget").get<AttackBudget>() : d.budget;
  p.random_start = j.value("random_start", d.random_start);
  p.spsa = j.contains("spsa") ? j.at("spsa").get<SpsaConfig>() : d.spsa;
  p.adaptive = j.contains("adaptive") ? j.at("adaptive").get<AdaptiveConfig>() : d.adaptive;
  p.validate();
}

std::vector<AttackProfile> default_attack_profiles() {
  constexpr double eps = 8.0 / 255.0;
  constexpr double a2 = 2.0 / 255.0;
  auto make = [](std::string name, AttackKind kind, AttackBudget budget) {
    AttackProfile p;
    p.name = std::move(name);
    p.kind = kind;
    p.budget = budget;
    return p;
  };
  return {make("pgd10", AttackKind::kPgd, {eps, eps, 10}),
          make("pgd10-a2", AttackKind::kPgd, {eps, a2, 10}),
          make("pgd50", AttackKind::kPgd, {eps, a2, 50}),
          make("fgsm", AttackKind::kFgsm, {eps, eps, 1}),
          make("pgd10-targeted", AttackKind::kPgdTargeted, {eps, a2, 10}),
          make("spsa", AttackKind::kSpsa, {eps, 1.0 / 255.0, 20})};
}

std::string tensor_hash(const Matrix<float>& x) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  auto mix = [&h](const unsigned char* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001B3ull;
    }
  };
  const std::int64_t dims[2] = {x.rows(), x.cols()};
  mix(reinterpret_cast<const unsigned char*>(dims), sizeof(dims));
  mix(reinterpret_cast<const unsigned char*>(x.data()), static_cast<std::size_t>(x.size()) * sizeof(float));
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

template <typename Scalar>
AdversarialSet generate_adversarial(const Model<Scalar>& model, const Dataset& data, const AttackProfile& profile,
                                    std::uint64_t seed, Index batch_size, const LatentCodec<Scalar>* codec,
                                    const ClassPools* pools) {
  profile.validate();
  if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
  if (data.size() == 0) throw InvalidArgument("attack on an empty dataset");
  if (profile.kind == AttackKind::kAdaptiveVarMi && (codec == nullptr || pools == nullptr))
    throw ConfigError("the adaptive attack needs a latent codec and clean pools");
  AdversarialSet out;
  out.images.resize(data.size(), data.shape().size());
  out.labels = data.labels();
  BatchStream stream(data.size(), batch_size, 0, false);
  for (Index b = 0; auto idx = stream.next(); ++b) {
    const Matrix<Scalar> x = data.gather<Scalar>(*idx);
    const std::vector<int> y = data.gather_labels(*idx);
    const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(b));
    Matrix<Scalar> adv;
    switch (profile.kind) {
      case AttackKind::kNone:
        adv = x;
        break;
      case AttackKind::kFgsm:
        adv = fgsm(model, x, y, profile.budget.epsilon);
        break;
      case AttackKind::kPgd:
        adv = pgd(model, x, y, profile.budget, s, profile.random_start);
        break;
      case AttackKind::kPgdTargeted:
        adv = pgd_targeted(model, x, runner_up_classes(model, x), profile.budget, s, profile.random_start);
        break;
      case AttackKind::kSpsa:
        adv = spsa(model, x, y, profile.budget, profile.spsa, s);
        break;
      case AttackKind::kAdaptiveVarMi:
        adv = adaptive_pgd_varmi(model, *codec, x, y, profile.budget, profile.adaptive, *pools, s);
        break;
    }
    const Index first = (*idx).front();
    out.images.middleRows(first, static_cast<Index>(idx->size())) = adv.template cast<float>();
  }
  out.hash = tensor_hash(out.images);
  return out;
}

template <typename Scalar>
Matrix<Scalar> defended_probs(const Model<Scalar>& model, const Matrix<Scalar>& x, const InferencePolicy& policy,
                              const LatentCodec<Scalar>* codec, const ClassPools* pools, Index first_row) {
  Matrix<Scalar> out = defended_predict(model, codec, x, policy, pools, first_row);
  if (policy.averaging == Averaging::kLogits) out = softmax(out);
  return out;
}

template <typename Scalar>
Predictor<Scalar> make_predictor(const Model<Scalar>& model, const InferencePolicy& policy,
                                 const LatentCodec<Scalar>* codec, const ClassPools* pools) {
  policy.validate();
  if (policy.variant != InferenceVariant::kPlain && pools == nullptr)
    throw ConfigError("mixup inference needs clean pools");
  if (policy.variant == InferenceVariant::kVarMi && codec == nullptr)
    throw ConfigError("var-mi inference needs a latent codec");
  return [&model, policy, codec, pools](const Matrix<Scalar>& x, Index first_row) {
    return argmax_rows(defended_predict(model, codec, x, policy, pools, first_row));
  };
}

template <typename Scalar>
double score(const Predictor<Scalar>& predict, const Matrix<float>& images, std::span<const int> labels,
             Index batch_size) {
  if (images.rows() != static_cast<Index>(labels.size())) throw ShapeError("images and labels differ in count");
  if (images.rows() == 0) throw InvalidArgument("scoring an empty set");
  std::vector<int> pred;
  pred.reserve(labels.size());
  for (Index first = 0; first < images.rows(); first += batch_size) {
    const Index n = std::min(batch_size, images.rows() - first);
    const std::vector<int> p = predict(images.middleRows(first, n).template cast<Scalar>(), first);
    pred.insert(pred.end(), p.begin(), p.end());
  }
  return accuracy_of(pred, labels);
}

template <typename Scalar>
ObliviousResult oblivious_eval(const Model<Scalar>& model, const InferencePolicy& policy,
                               const LatentCodec<Scalar>* codec, const ClassPools* pools, const Dataset& data,
                               const AttackProfile& profile, std::uint64_t seed, Index batch_size) {
  if (profile.kind == AttackKind::kAdaptiveVarMi)
    throw ConfigError("the adaptive attack is not oblivious; generate it explicitly");
  const AdversarialSet adv = generate_adversarial(model, data, profile, seed, batch_size);
  const Predictor<Scalar> predict = make_predictor(model, policy, codec, pools);
  return {score(predict, adv.images, adv.labels, batch_size), adv.hash, data.size()};
}

template <typename Scalar>
CorruptionResult corruption_eval(const Predictor<Scalar>& predict, const Dataset& data,
                                 const std::vector<CorruptionKind>& kinds, std::uint64_t seed,
                                 const CorruptionTable& table, Index batch_size) {
  if (kinds.empty()) throw InvalidArgument("corruption evaluation needs at least one kind");
  if (std::set<CorruptionKind>(kinds.begin(), kinds.end()).size() != kinds.size())
    throw InvalidArgument("corruption kinds repeat");
  CorruptionResult out;
  out.kinds = kinds;
  double sum = 0;
  for (CorruptionKind kind : kinds) {
    std::array<double, kNumSeverities> row{};
    for (int s = 1; s <= kNumSeverities; ++s) {
      const std::uint64_t cs = derive_seed(derive_seed(seed, to_string(kind)), static_cast<std::uint64_t>(s));
      const Dataset c = corrupt_dataset(data, {kind, s}, cs, table);
      row[static_cast<std::size_t>(s - 1)] = score(predict, c.images(), c.labels(), batch_size);
      sum += row[static_cast<std::size_t>(s - 1)];
    }
    out.accuracy.push_back(row);
  }
  out.mean = sum / static_cast<double>(kinds.size() * kNumSeverities);
  return out;
}

#define VARMIX_INSTANTIATE_EVALUATION(S)                                                                        \
  template AdversarialSet generate_adversarial<S>(const Model<S>&, const Dataset&, const AttackProfile&,        \
                                                  std::uint64_t, Index, const LatentCodec<S>*,                  \
                                                  const ClassPools*);                                           \
  template Matrix<S> defended_probs<S>(const Model<S>&, const Matrix<S>&, const InferencePolicy&,               \
                                       const LatentCodec<S>*, const ClassPools*, Index);                        \
  template Predictor<S> make_predictor<S>(const Model<S>&, const InferencePolicy&, const LatentCodec<S>*,       \
                                          const ClassPools*);                                                   \
  template double score<S>(const Predictor<S>&, const Matrix<float>&, std::span<const int>, Index);             \
  template ObliviousResult oblivious_eval<S>(const Model<S>&, const InferencePolicy&, const LatentCodec<S>*,     \
                                             const ClassPools*, const Dataset&, const AttackProfile&,           \
                                             std::uint64_t, Index);                                             \
  template CorruptionResult corruption_eval<S>(const Predictor<S>&, const Dataset&,                             \
                                               const std::vector<CorruptionKind>&, std::uint64_t,               \
                                               const CorruptionTable&, Index);

VARMIX_INSTANTIATE_EVALUATION(float)
VARMIX_INSTANTIATE_EVALUATION(double)

}  // namespace varmix
