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

#include "varmix/vicinal/vicinal.hpp"

#include <algorithm>
#include <cmath>

#include "varmix/core/errors.hpp"
#include "varmix/core/png.hpp"
#include "varmix/model/loss.hpp"

namespace varmix {

std::string_view to_string(MixSource source) {
  switch (source) {
    case MixSource::kInput:
      return "input_space";
    case MixSource::kLatent:
      return "latent_space";
    case MixSource::kHidden:
      return "hidden_space";
  }
  return "input_space";
}

MixSource mix_source_from_string(std::string_view name) {
  if (name == "input_space") return MixSource::kInput;
  if (name == "latent_space") return MixSource::kLatent;
  if (name == "hidden_space") return MixSource::kHidden;
  throw ConfigError("unknown mixup.source '" + std::string(name) +
                    "' (expected input_space, latent_space or hidden_space)");
}

void MixupConfig::validate() const {
  if (!(eta > 0)) throw ConfigError("mixup.eta must be > 0");
  if (fixed_lambda && !(*fixed_lambda >= 0 && *fixed_lambda <= 1))
    throw ConfigError("mixup.fixed_lambda must lie in [0, 1]");
}

void to_json(nlohmann::json& j, const MixupConfig& c) {
  j = nlohmann::json{{"eta", c.eta}, {"source", std::string(to_string(c.source))}};
  if (c.fixed_lambda) j["fixed_lambda"] = *c.fixed_lambda;
}

void from_json(const nlohmann::json& j, MixupConfig& c) {
  const MixupConfig d;
  c.eta = j.value("eta", d.eta);
  c.source = mix_source_from_string(j.value("source", std::string(to_string(d.source))));
  c.fixed_lambda.reset();
  if (j.contains("fixed_lambda") && !j.at("fixed_lambda").is_null()) c.fixed_lambda = j.at("fixed_lambda").get<double>();
}

double sample_lambda(double eta, Rng& rng) {
  if (!(eta > 0)) throw InvalidArgument("Beta parameter eta must be > 0");
  return sample_beta<double>(rng, eta, eta);
}

double sample_lambda(const MixupConfig& config, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "mixup-lambda"));
  const double l = sample_lambda(config.eta, rng);
  return config.fixed_lambda.value_or(l);
}

namespace {

void check_lambda(double lambda) {
  if (!(lambda >= 0 && lambda <= 1)) throw InvalidArgument("mixing coefficient must lie in [0, 1]");
}

void check_pair(const LabeledExample& a, const LabeledExample& b, int num_classes) {
  if (!(a.shape == b.shape) || a.image.size() != b.image.size())
    throw ShapeError("cannot mix images of shape " + a.shape.str() + " and " + b.shape.str());
  if (a.label < 0 || a.label >= num_classes || b.label < 0 || b.label >= num_classes)
    throw InvalidArgument("label outside [0, " + std::to_string(num_classes) + ")");
}

template <typename Scalar>
Vector<Scalar> mix_labels(int a, int b, double lambda, int num_classes) {
  Vector<Scalar> y = Vector<Scalar>::Zero(num_classes);
  y[a] += static_cast<Scalar>(lambda);
  y[b] += static_cast<Scalar>(1 - lambda);
  return y;
}

template <typename Scalar>
Matrix<Scalar> row_of(const LabeledExample& e) {
  return e.image.template cast<Scalar>().transpose();
}

}  // namespace

template <typename Scalar>
VicinalSample<Scalar> mixup_pair(const LabeledExample& a, const LabeledExample& b, double lambda, int num_classes) {
  check_lambda(lambda);
  check_pair(a, b, num_classes);
  const auto l = static_cast<Scalar>(lambda);
  const auto m = static_cast<Scalar>(1 - lambda);
  return {l * a.image.template cast<Scalar>() + m * b.image.template cast<Scalar>(),
          mix_labels<Scalar>(a.label, b.label, lambda, num_classes), lambda};
}

template <typename Scalar>
VicinalSample<Scalar> varmixup_pair(const LabeledExample& a, const LabeledExample& b, double lambda,
                                    const LatentCodec<Scalar>& codec, int num_classes) {
  check_lambda(lambda);
  check_pair(a, b, num_classes);
  if (!(a.shape == codec.image_shape()))
    throw ShapeError("codec trained on " + codec.image_shape().str() + " but images are " + a.shape.str());
  const auto l = static_cast<Scalar>(lambda);
  const auto m = static_cast<Scalar>(1 - lambda);
  const Matrix<Scalar> z = l * codec.encode_mean(row_of<Scalar>(a)) + m * codec.encode_mean(row_of<Scalar>(b));
  return {codec.decode_mean(z).row(0).transpose(), mix_labels<Scalar>(a.label, b.label, lambda, num_classes), lambda};
}

template <typename Scalar>
VicinalSample<Scalar> varerm_sample(const LabeledExample& a, const LatentCodec<Scalar>& codec, int num_classes) {
  return varmixup_pair<Scalar>(a, a, 1.0, codec, num_classes);
}

MixPlan draw_mix_plan(Rng& rng, Index n, const MixupConfig& config) {
  config.validate();
  MixPlan plan;
  plan.partner = random_permutation(rng, n);
  plan.lambda.resize(static_cast<std::size_t>(n));
  for (double& l : plan.lambda) {
    const double draw = sample_lambda(config.eta, rng);
    l = config.fixed_lambda.value_or(draw);
  }
  return plan;
}

template <typename Scalar>
Matrix<Scalar> mix_rows(const Matrix<Scalar>& a, const MixPlan& plan) {
  if (plan.size() != a.rows()) throw ShapeError("mix plan does not match the batch");
  Matrix<Scalar> out(a.rows(), a.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    const double l = plan.lambda[static_cast<std::size_t>(i)];
    out.row(i) = static_cast<Scalar>(l) * a.row(i) +
                 static_cast<Scalar>(1 - l) * a.row(plan.partner[static_cast<std::size_t>(i)]);
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> mix_rows_adjoint(const Matrix<Scalar>& g, const MixPlan& plan) {
  if (plan.size() != g.rows()) throw ShapeError("mix plan does not match the batch");
  Matrix<Scalar> out = Matrix<Scalar>::Zero(g.rows(), g.cols());
  for (Index i = 0; i < g.rows(); ++i) {
    const double l = plan.lambda[static_cast<std::size_t>(i)];
    out.row(i) += static_cast<Scalar>(l) * g.row(i);
    out.row(plan.partner[static_cast<std::size_t>(i)]) += static_cast<Scalar>(1 - l) * g.row(i);
  }
  return out;
}

template <typename Scalar>
MixedBatch<Scalar> mixup_batch(const Matrix<Scalar>& x, const Matrix<Scalar>& y, const MixPlan& plan) {
  if (x.rows() != y.rows()) throw ShapeError("images and labels have different batch sizes");
  return {mix_rows(x, plan), mix_rows(y, plan)};
}

template <typename Scalar>
MixedBatch<Scalar> varmixup_batch(const LatentCodec<Scalar>& codec, const Matrix<Scalar>& x,
                                  const Matrix<Scalar>& y, const MixPlan& plan) {
  if (x.rows() != y.rows()) throw ShapeError("images and labels have different batch sizes");
  return {codec.decode_mean(mix_rows(codec.encode_mean(x), plan)), mix_rows(y, plan)};
}

template <typename Scalar>
Matrix<Scalar> manifold_mixup_logits(const Model<Scalar>& model, const Matrix<Scalar>& a, const Matrix<Scalar>& b,
                                     const std::vector<double>& lambda, Index layer) {
  if (std::find(kManifoldMixupLayers.begin(), kManifoldMixupLayers.end(), layer) == kManifoldMixupLayers.end() ||
      layer >= model.net().num_blocks())
    throw InvalidArgument("layer " + std::to_string(layer) + " is not eligible for manifold mixup");
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("manifold mixup batches differ in shape");
  if (static_cast<Index>(lambda.size()) != a.rows()) throw ShapeError("one lambda per row is required");
  const Matrix<Scalar> ha = model.hidden(a, layer);
  const Matrix<Scalar> hb = model.hidden(b, layer);
  Matrix<Scalar> h(ha.rows(), ha.cols());
  for (Index i = 0; i < h.rows(); ++i) {
    const double l = lambda[static_cast<std::size_t>(i)];
    check_lambda(l);
    h.row(i) = static_cast<Scalar>(l) * ha.row(i) + static_cast<Scalar>(1 - l) * hb.row(i);
  }
  return model.net().forward_blocks(h, layer, model.net().num_blocks(), Mode::kEval);
}

void write_image_grid(const std::filesystem::path& path, const Matrix<float>& images, const TensorShape& shape,
                      Index columns, int scale) {
  if (images.rows() == 0) throw InvalidArgument("no images to write");
  if (images.cols() != shape.size()) throw ShapeError("images do not match " + shape.str());
  if (shape.channels != 1 && shape.channels != 3) throw ShapeError("image grid needs 1 or 3 channels");
  if (columns < 1 || scale < 1) throw InvalidArgument("grid columns and scale must be >= 1");
  const Index cols = std::min(columns, images.rows());
  const Index rows = (images.rows() + cols - 1) / cols;
  const int pad = 2;
  const int tile_w = static_cast<int>(shape.width) * scale;
  const int tile_h = static_cast<int>(shape.height) * scale;
  RgbImage img(static_cast<int>(cols) * (tile_w + pad) + pad, static_cast<int>(rows) * (tile_h + pad) + pad);
  auto byte = [](float v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); };
  for (Index n = 0; n < images.rows(); ++n) {
    const int ox = pad + static_cast<int>(n % cols) * (tile_w + pad);
    const int oy = pad + static_cast<int>(n / cols) * (tile_h + pad);
    for (Index yy = 0; yy < shape.height; ++yy)
      for (Index xx = 0; xx < shape.width; ++xx) {
        const Index p = yy * shape.width + xx;
        const std::uint8_t r = byte(images(n, p));
        const std::uint8_t g = shape.channels == 3 ? byte(images(n, shape.plane() + p)) : r;
        const std::uint8_t b = shape.channels == 3 ? byte(images(n, 2 * shape.plane() + p)) : r;
        for (int sy = 0; sy < scale; ++sy)
          for (int sx = 0; sx < scale; ++sx)
            img.set(ox + static_cast<int>(xx) * scale + sx, oy + static_cast<int>(yy) * scale + sy, r, g, b);
      }
  }
  write_png(path, img);
}

#define VARMIX_INSTANTIATE_VICINAL(S)                                                                          \
  template VicinalSample<S> mixup_pair<S>(const LabeledExample&, const LabeledExample&, double, int);          \
  template VicinalSample<S> varmixup_pair<S>(const LabeledExample&, const LabeledExample&, double,             \
                                             const LatentCodec<S>&, int);                                      \
  template VicinalSample<S> varerm_sample<S>(const LabeledExample&, const LatentCodec<S>&, int);               \
  template Matrix<S> mix_rows<S>(const Matrix<S>&, const MixPlan&);                                           \
  template Matrix<S> mix_rows_adjoint<S>(const Matrix<S>&, const MixPlan&);                                   \
  template MixedBatch<S> mixup_batch<S>(const Matrix<S>&, const Matrix<S>&, const MixPlan&);                  \
  template MixedBatch<S> varmixup_batch<S>(const LatentCodec<S>&, const Matrix<S>&, const Matrix<S>&,         \
                                           const MixPlan&);                                                    \
  template Matrix<S> manifold_mixup_logits<S>(const Model<S>&, const Matrix<S>&, const Matrix<S>&,            \
                                              const std::vector<double>&, Index);

VARMIX_INSTANTIATE_VICINAL(float)
VARMIX_INSTANTIATE_VICINAL(double)

}  // namespace varmix
