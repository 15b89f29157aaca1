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

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include "varmix/core/errors.hpp"
#include "varmix/core/png.hpp"
#include "varmix/metrics/metrics.hpp"

namespace varmix {

namespace {

Matrix<double> covariance(const Matrix<double>& x, const RowVector<double>& mean) {
  const Matrix<double> c = x.rowwise() - mean;
  return (c.transpose() * c) / static_cast<double>(x.rows() - 1);
}

}  // namespace

double frechet_distance(const Matrix<double>& a, const Matrix<double>& b) {
  if (a.rows() < 2 || b.rows() < 2) throw InvalidArgument("Frechet distance needs at least two samples per set");
  if (a.cols() != b.cols()) throw ShapeError("sample sets differ in dimension");
  constexpr double kLoading = 1e-6;
  const RowVector<double> ma = a.colwise().mean();
  const RowVector<double> mb = b.colwise().mean();
  const Index d = a.cols();
  const Matrix<double> sa = covariance(a, ma) + kLoading * Matrix<double>::Identity(d, d);
  const Matrix<double> sb = covariance(b, mb) + kLoading * Matrix<double>::Identity(d, d);
  // tr (S_a S_b)^(1/2) = tr (S_a^(1/2) S_b S_a^(1/2))^(1/2), which is symmetric.
  const Matrix<double> ra = Eigen::SelfAdjointEigenSolver<Matrix<double>>(sa).operatorSqrt();
  Matrix<double> inner = ra * sb * ra;
  inner = 0.5 * (inner + inner.transpose()).eval();
  const Vector<double> ev = Eigen::SelfAdjointEigenSolver<Matrix<double>>(inner, Eigen::EigenvaluesOnly).eigenvalues();
  double root = 0;
  for (Index i = 0; i < ev.size(); ++i) root += std::sqrt(std::max(0.0, ev(i)));
  const double out = (ma - mb).squaredNorm() + sa.trace() + sb.trace() - 2.0 * root;
  return std::max(0.0, out);
}

template <typename Scalar>
double latent_stat_distance(const Matrix<Scalar>& a, const Matrix<Scalar>& b, const LatentCodec<Scalar>& codec) {
  return frechet_distance(codec.encode_mean(a).template cast<double>(),
                          codec.encode_mean(b).template cast<double>());
}

template double latent_stat_distance<float>(const Matrix<float>&, const Matrix<float>&, const LatentCodec<float>&);
template double latent_stat_distance<double>(const Matrix<double>&, const Matrix<double>&,
                                             const LatentCodec<double>&);

void to_json(nlohmann::json& j, const CorruptionResult& r) {
  nlohmann::json acc = nlohmann::json::object();
  for (std::size_t k = 0; k < r.kinds.size(); ++k)
    acc[std::string(to_string(r.kinds[k]))] = std::vector<double>(r.accuracy[k].begin(), r.accuracy[k].end());
  nlohmann::json kinds = nlohmann::json::array();
  for (CorruptionKind k : r.kinds) kinds.push_back(std::string(to_string(k)));
  j = nlohmann::json{{"kinds", kinds}, {"accuracy", acc}, {"mean", r.mean}};
}

void from_json(const nlohmann::json& j, CorruptionResult& r) {
  r.kinds.clear();
  r.accuracy.clear();
  for (const auto& k : j.at("kinds")) {
    const std::string name = k.get<std::string>();
    r.kinds.push_back(corruption_kind_from_string(name));
    const auto row = j.at("accuracy").at(name).get<std::vector<double>>();
    if (row.size() != kNumSeverities) throw FormatError("corruption row '" + name + "' needs 5 severities");
    std::array<double, kNumSeverities> a{};
    std::copy(row.begin(), row.end(), a.begin());
    r.accuracy.push_back(a);
  }
  r.mean = j.at("mean").get<double>();
}

void to_json(nlohmann::json& j, const LinearityCurve& c) {
  j = nlohmann::json{{"epsilons", c.epsilons}, {"mean_gamma", c.mean_gamma}};
}

void from_json(const nlohmann::json& j, LinearityCurve& c) {
  c.epsilons = j.at("epsilons").get<std::vector<double>>();
  c.mean_gamma = j.at("mean_gamma").get<std::vector<double>>();
  if (c.epsilons.size() != c.mean_gamma.size()) throw FormatError("linearity curve lengths differ");
}

void to_json(nlohmann::json& j, const RobustnessReport& r) {
  j = nlohmann::json{{"clean_accuracy", r.clean_accuracy},
                     {"attack_accuracy", r.attack_accuracy},
                     {"attack_hash", r.attack_hash},
                     {"examples", r.examples}};
  if (r.corruption) j["corruption"] = *r.corruption;
  if (r.linearity) j["local_linearity"] = *r.linearity;
  if (r.latent_stat_distance) {
    j["latent_stat_distance"] = {{"value", *r.latent_stat_distance},
                                 {"note", "Frechet distance of encoder means; substitute for Inception statistics"}};
  }
}

void from_json(const nlohmann::json& j, RobustnessReport& r) {
  r.clean_accuracy = j.at("clean_accuracy").get<double>();
  r.attack_accuracy = j.at("attack_accuracy").get<std::map<std::string, double>>();
  r.attack_hash = j.value("attack_hash", std::map<std::string, std::string>{});
  r.examples = j.at("examples").get<Index>();
  r.corruption.reset();
  r.linearity.reset();
  r.latent_stat_distance.reset();
  if (j.contains("corruption")) r.corruption = j.at("corruption").get<CorruptionResult>();
  if (j.contains("local_linearity")) r.linearity = j.at("local_linearity").get<LinearityCurve>();
  if (j.contains("latent_stat_distance")) r.latent_stat_distance = j.at("latent_stat_distance").at("value").get<double>();
}

void write_metrics_csv(const std::filesystem::path& path, const RobustnessReport& robustness,
                       const CalibrationReport* calibration) {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write " + path.string());
  out.precision(10);
  out << "metric,key,value\n";
  out << "clean_accuracy,," << robustness.clean_accuracy << "\n";
  for (const auto& [name, acc] : robustness.attack_accuracy) out << "attack_accuracy," << name << "," << acc << "\n";
  if (robustness.corruption) {
    const CorruptionResult& c = *robustness.corruption;
    for (std::size_t k = 0; k < c.kinds.size(); ++k)
      for (int s = 0; s < kNumSeverities; ++s)
        out << "corruption_accuracy," << to_string(c.kinds[k]) << "@" << s + 1 << "," << c.accuracy[k][static_cast<std::size_t>(s)] << "\n";
    out << "corruption_mean,," << c.mean << "\n";
  }
  if (robustness.linearity)
    for (std::size_t e = 0; e < robustness.linearity->epsilons.size(); ++e)
      out << "local_linearity," << robustness.linearity->epsilons[e] << "," << robustness.linearity->mean_gamma[e] << "\n";
  if (robustness.latent_stat_distance) out << "latent_stat_distance,," << *robustness.latent_stat_distance << "\n";
  if (calibration != nullptr) {
    out << "ece,," << calibration->ece << "\n";
    for (std::size_t b = 0; b < calibration->bins.size(); ++b) {
      const CalibrationBin& bin = calibration->bins[b];
      out << "calibration_count," << b << "," << bin.count << "\n";
      out << "calibration_accuracy," << b << "," << bin.accuracy << "\n";
      out << "calibration_confidence," << b << "," << bin.confidence << "\n";
    }
  }
  if (!out) throw IngestionError("failed writing " + path.string());
}

namespace {

void draw_line(RgbImage& img, double x0, double y0, double x1, double y1, const std::array<std::uint8_t, 3>& c,
               int thickness) {
  const int steps = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    const int px = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
    const int py = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
    for (int dx = -(thickness / 2); dx <= thickness / 2; ++dx)
      for (int dy = -(thickness / 2); dy <= thickness / 2; ++dy) img.set(px + dx, py + dy, c[0], c[1], c[2]);
  }
}

}  // namespace

void write_line_plot(const std::filesystem::path& path, const std::vector<PlotSeries>& series, int width, int height) {
  if (series.empty()) throw InvalidArgument("plot needs at least one series");
  if (width < 64 || height < 64) throw InvalidArgument("plot is too small");
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const PlotSeries& s : series) {
    if (s.x.size() != s.y.size()) throw ShapeError("series '" + s.name + "' has mismatched x and y");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (!(xmin <= xmax)) throw InvalidArgument("plot has no finite points");
  if (xmax == xmin) xmax = xmin + 1;
  ymin = std::min(ymin, 0.0);
  if (ymax <= ymin) ymax = ymin + 1;
  ymax += 0.05 * (ymax - ymin);

  static constexpr std::array<std::array<std::uint8_t, 3>, 6> kPalette{
      {{31, 119, 180}, {255, 127, 14}, {44, 160, 44}, {214, 39, 40}, {148, 103, 189}, {140, 86, 75}}};
  const int left = 40, right = 16, top = 16, bottom = 32;
  const double pw = width - left - right, ph = height - top - bottom;
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

  RgbImage img(width, height);
  for (int g = 0; g <= 4; ++g) {
    const double y = top + ph * g / 4.0;
    const double x = left + pw * g / 4.0;
    draw_line(img, left, y, left + pw, y, {225, 225, 225}, 1);
    draw_line(img, x, top, x, top + ph, {225, 225, 225}, 1);
  }
  draw_line(img, left, top + ph, left + pw, top + ph, {0, 0, 0}, 1);
  draw_line(img, left, top, left, top + ph, {0, 0, 0}, 1);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& c = kPalette[k % kPalette.size()];
    const PlotSeries& s = series[k];
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (i > 0) draw_line(img, px(s.x[i - 1]), py(s.y[i - 1]), px(s.x[i]), py(s.y[i]), c, 2);
      for (int d = -3; d <= 3; ++d) draw_line(img, px(s.x[i]) - 3, py(s.y[i]) + d, px(s.x[i]) + 3, py(s.y[i]) + d, c, 1);
    }
    // Legend swatch, one per series, top right.
    for (int d = 0; d < 6; ++d)
      draw_line(img, width - right - 24, top + 4 + 10 * static_cast<double>(k) + d, width - right - 4,
                top + 4 + 10 * static_cast<double>(k) + d, c, 1);
  }
  write_png(path, img);
}

}  // namespace varmix
