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

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "varmix/attacks/attacks.hpp"
#include "varmix/data/corruption.hpp"
#include "varmix/data/dataset.hpp"
#include "varmix/inference/inference.hpp"

namespace varmix {

struct CalibrationBin {
  Index count = 0;
  double accuracy = 0;    // 0 for empty bins
  double confidence = 0;  // 0 for empty bins
  bool operator==(const CalibrationBin&) const = default;
};

struct CalibrationReport {
  double ece = 0;
  std::vector<CalibrationBin> bins;  // equal-width over [0,1], size M
  Index examples = 0;
};

void to_json(nlohmann::json& j, const CalibrationReport& r);
void from_json(const nlohmann::json& j, CalibrationReport& r);

inline constexpr int kDefaultCalibrationBins = 15;

/// Sum over bins of count / N * |accuracy - confidence|.
double ece_from_bins(const std::vector<CalibrationBin>& bins);

/// Confidence c falls in bin min(floor(c * M), M - 1). Throws on empty or
/// mismatched input and on confidences outside [0,1].
CalibrationReport ece(std::span<const double> confidences, std::span<const int> predictions,
                      std::span<const int> labels, int num_bins = kDefaultCalibrationBins);

/// Confidence and prediction are the row max and argmax of probability rows.
template <typename Scalar>
CalibrationReport ece_from_probs(const Matrix<Scalar>& probs, std::span<const int> labels,
                                 int num_bins = kDefaultCalibrationBins);

/// Integer count of matches over N.
double accuracy_of(std::span<const int> predictions, std::span<const int> labels);

enum class AttackKind { kNone, kFgsm, kPgd, kPgdTargeted, kSpsa, kAdaptiveVarMi };

std::string_view to_string(AttackKind kind);
AttackKind attack_kind_from_string(std::string_view name);

/// A named attack with its budget. Targeted PGD aims at the runner-up class.
struct AttackProfile {
  std::string name = "pgd10";
  AttackKind kind = AttackKind::kPgd;
  AttackBudget budget{8.0 / 255.0, 8.0 / 255.0, 10};
  bool random_start = false;
  SpsaConfig spsa;
  AdaptiveConfig adaptive;

  void validate() const;
  bool operator==(const AttackProfile&) const = default;
};

void to_json(nlohmann::json& j, const AttackProfile& p);
void from_json(const nlohmann::json& j, AttackProfile& p);

/// pgd10 (alpha = epsilon), pgd10-a2 (alpha = 2/255), pgd50, fgsm,
/// pgd10-targeted and spsa, all at epsilon = 8/255.
std::vector<AttackProfile> default_attack_profiles();

/// 64-bit FNV-1a over the raw bytes, as 16 hex digits.
std::string tensor_hash(const Matrix<float>& x);

/// Perturbed copies of a dataset's images, generated from the base model alone.
struct AdversarialSet {
  Matrix<float> images;
  std::vector<int> labels;
  std::string hash;
};

/// Attacks batch b of the dataset with seed derive_seed(seed, b). The adaptive
/// kind needs a codec and pools; every other kind only sees the model.
template <typename Scalar>
AdversarialSet generate_adversarial(const Model<Scalar>& model, const Dataset& data, const AttackProfile& profile,
                                    std::uint64_t seed, Index batch_size = 100,
                                    const LatentCodec<Scalar>* codec = nullptr, const ClassPools* pools = nullptr);

/// Defended class predictions for a batch whose first row has dataset index first_row.
template <typename Scalar>
using Predictor = std::function<std::vector<int>(const Matrix<Scalar>&, Index first_row)>;

/// Argmax of defended_predict under the policy.
template <typename Scalar>
Predictor<Scalar> make_predictor(const Model<Scalar>& model, const InferencePolicy& policy,
                                 const LatentCodec<Scalar>* codec = nullptr, const ClassPools* pools = nullptr);

/// Averaged defended outputs turned into probability rows: probs pass through,
/// averaged logits go through softmax.
template <typename Scalar>
Matrix<Scalar> defended_probs(const Model<Scalar>& model, const Matrix<Scalar>& x, const InferencePolicy& policy,
                              const LatentCodec<Scalar>* codec, const ClassPools* pools, Index first_row = 0);

template <typename Scalar>
double score(const Predictor<Scalar>& predict, const Matrix<float>& images, std::span<const int> labels,
             Index batch_size = 100);

struct ObliviousResult {
  double accuracy = 0;
  std::string attack_hash;
  Index examples = 0;
};

/// Attack tensors come from the base model first; the policy only scores them.
template <typename Scalar>
ObliviousResult oblivious_eval(const Model<Scalar>& model, const InferencePolicy& policy,
                               const LatentCodec<Scalar>* codec, const ClassPools* pools, const Dataset& data,
                               const AttackProfile& profile, std::uint64_t seed, Index batch_size = 100);

struct LinearityConfig {
  int steps = 20;
  double step_fraction = 1.0 / 8.0;  // alpha = step_fraction * epsilon
  bool random_start = true;
  bool clamp_to_unit = true;  // keep x + delta inside [0,1]

  void validate() const;
  bool operator==(const LinearityConfig&) const = default;
};

void to_json(nlohmann::json& j, const LinearityConfig& c);
void from_json(const nlohmann::json& j, LinearityConfig& c);

/// A differentiable scalar function of one point.
struct ScalarField {
  std::function<double(const Vector<double>&)> value;
  std::function<Vector<double>(const Vector<double>&)> grad;
};

struct LinearityPoint {
  double gamma = 0;
  Vector<double> delta;  // maximizer found
};

/// Best |f(x + d) - f(x) - d . grad f(x)| found by signed ascent over the
/// epsilon ball. A warm start replaces the random start and seeds the
/// best-so-far value.
LinearityPoint local_linearity_error(const ScalarField& f, const Vector<double>& x, double epsilon,
                                     const LinearityConfig& config, Rng& rng,
                                     const Vector<double>* warm_start = nullptr);

/// Per-example linearity error of the cross-entropy for every row, computed
/// in double precision. Row i uses the stream derive_seed(seed, first_row + i)
/// or, when warm is non-empty, starts from warm.row(i).
template <typename Scalar>
std::vector<LinearityPoint> local_linearity_errors(const Model<Scalar>& model, const Matrix<Scalar>& x,
                                                   const std::vector<int>& y, double epsilon,
                                                   const LinearityConfig& config, std::uint64_t seed,
                                                   const Matrix<double>& warm = {}, Index first_row = 0);

struct LinearityCurve {
  std::vector<double> epsilons;
  std::vector<double> mean_gamma;
};

/// {1, 2, 4, 8, 16} / 255
std::vector<double> default_linearity_grid();

/// Mean gamma per epsilon in increasing order; each radius warm-starts from
/// the maximizers of the previous one, so the curve is non-decreasing.
template <typename Scalar>
LinearityCurve linearity_curve(const Model<Scalar>& model, const Dataset& data, std::vector<double> epsilons,
                               const LinearityConfig& config, std::uint64_t seed, Index batch_size = 100);

struct CorruptionResult {
  std::vector<CorruptionKind> kinds;
  std::vector<std::array<double, kNumSeverities>> accuracy;  // kinds x severity 1..5
  double mean = 0;
};

/// Accuracy of the predictor on every (kind, severity) corruption of the data.
template <typename Scalar>
CorruptionResult corruption_eval(const Predictor<Scalar>& predict, const Dataset& data,
                                 const std::vector<CorruptionKind>& kinds, std::uint64_t seed,
                                 const CorruptionTable& table = CorruptionTable::defaults(), Index batch_size = 100);

/// Frechet distance between Gaussian fits of the rows of a and b:
/// |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)), with 1e-6 added to
/// both covariance diagonals.
double frechet_distance(const Matrix<double>& a, const Matrix<double>& b);

/// Frechet distance between the encoder means of two image sets; a
/// substitute for Inception-based sample statistics.
template <typename Scalar>
double latent_stat_distance(const Matrix<Scalar>& a, const Matrix<Scalar>& b, const LatentCodec<Scalar>& codec);

struct RobustnessReport {
  double clean_accuracy = 0;
  std::map<std::string, double> attack_accuracy;
  std::map<std::string, std::string> attack_hash;
  std::optional<CorruptionResult> corruption;
  std::optional<LinearityCurve> linearity;
  std::optional<double> latent_stat_distance;
  Index examples = 0;
};

void to_json(nlohmann::json& j, const CorruptionResult& r);
void from_json(const nlohmann::json& j, CorruptionResult& r);
void to_json(nlohmann::json& j, const LinearityCurve& c);
void from_json(const nlohmann::json& j, LinearityCurve& c);
void to_json(nlohmann::json& j, const RobustnessReport& r);
void from_json(const nlohmann::json& j, RobustnessReport& r);

/// One row per metric cell: metric,key,value.
void write_metrics_csv(const std::filesystem::path& path, const RobustnessReport& robustness,
                       const CalibrationReport* calibration = nullptr);

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Line chart with axes and gridlines, one colour per series. No text is drawn.
void write_line_plot(const std::filesystem::path& path, const std::vector<PlotSeries>& series, int width = 480,
                     int height = 320);

}  // namespace varmix
