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

#include <algorithm>
#include <cmath>

#include "varmix/core/errors.hpp"
#include "varmix/metrics/metrics.hpp"
#include "varmix/model/loss.hpp"

namespace varmix {

void to_json(nlohmann::json& j, const CalibrationReport& r) {
  nlohmann::json bins = nlohmann::json::array();
  for (const CalibrationBin& b : r.bins)
    bins.push_back({{"count", b.count}, {"accuracy", b.accuracy}, {"confidence", b.confidence}});
  j = nlohmann::json{{"ece", r.ece}, {"num_bins", r.bins.size()}, {"examples", r.examples}, {"bins", bins}};
}

void from_json(const nlohmann::json& j, CalibrationReport& r) {
  r.ece = j.at("ece").get<double>();
  r.examples = j.at("examples").get<Index>();
  r.bins.clear();
  for (const auto& b : j.at("bins"))
    r.bins.push_back({b.at("count").get<Index>(), b.at("accuracy").get<double>(), b.at("confidence").get<double>()});
}

double ece_from_bins(const std::vector<CalibrationBin>& bins) {
  Index n = 0;
  for (const CalibrationBin& b : bins) n += b.count;
  if (n == 0) throw InvalidArgument("calibration bins are empty");
  long double out = 0;
  for (const CalibrationBin& b : bins)
    out += static_cast<long double>(b.count) * std::abs(static_cast<long double>(b.accuracy) - b.confidence);
  return static_cast<double>(out / static_cast<long double>(n));
}

CalibrationReport ece(std::span<const double> confidences, std::span<const int> predictions,
                      std::span<const int> labels, int num_bins) {
  if (num_bins < 1) throw InvalidArgument("calibration needs at least one bin");
  if (confidences.empty()) throw InvalidArgument("calibration on an empty input");
  if (confidences.size() != predictions.size() || predictions.size() != labels.size())
    throw ShapeError("confidences, predictions and labels differ in length");
  std::vector<Index> count(static_cast<std::size_t>(num_bins), 0);
  std::vector<Index> correct(static_cast<std::size_t>(num_bins), 0);
  std::vector<long double> conf(static_cast<std::size_t>(num_bins), 0.0L);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const double c = confidences[i];
    if (!(c >= 0.0 && c <= 1.0)) throw InvalidArgument("confidence outside [0,1]: " + std::to_string(c));
    const auto b = static_cast<std::size_t>(std::min<double>(std::floor(c * num_bins), num_bins - 1));
    ++count[b];
    correct[b] += predictions[i] == labels[i];
    conf[b] += c;
  }
  CalibrationReport r;
  r.examples = static_cast<Index>(confidences.size());
  for (std::size_t b = 0; b < count.size(); ++b) {
    CalibrationBin bin;
    bin.count = count[b];
    if (count[b] > 0) {
      bin.accuracy = static_cast<double>(correct[b]) / static_cast<double>(count[b]);
      bin.confidence = static_cast<double>(conf[b] / static_cast<long double>(count[b]));
    }
    r.bins.push_back(bin);
  }
  long double gap = 0;
  for (std::size_t b = 0; b < count.size(); ++b) gap += std::abs(static_cast<long double>(correct[b]) - conf[b]);
  r.ece = static_cast<double>(gap / static_cast<long double>(r.examples));
  return r;
}

template <typename Scalar>
CalibrationReport ece_from_probs(const Matrix<Scalar>& probs, std::span<const int> labels, int num_bins) {
  if (probs.rows() != static_cast<Index>(labels.size())) throw ShapeError("probability rows do not match labels");
  std::vector<double> confidence(labels.size());
  std::vector<int> prediction(labels.size());
  for (Index i = 0; i < probs.rows(); ++i) {
    Index best = 0;
    probs.row(i).maxCoeff(&best);
    confidence[static_cast<std::size_t>(i)] = std::clamp(static_cast<double>(probs(i, best)), 0.0, 1.0);
    prediction[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return ece(confidence, prediction, labels, num_bins);
}

double accuracy_of(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw ShapeError("predictions and labels differ in length");
  if (labels.empty()) throw InvalidArgument("accuracy of an empty set");
  Index correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

template CalibrationReport ece_from_probs<float>(const Matrix<float>&, std::span<const int>, int);
template CalibrationReport ece_from_probs<double>(const Matrix<double>&, std::span<const int>, int);

}  // namespace varmix
