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

#include <cmath>
#include <fstream>

#include "test_support.hpp"
#include "varmix/core/errors.hpp"
#include "varmix/model/checkpoint.hpp"
#include "varmix/model/gradients.hpp"
#include "varmix/model/loss.hpp"
#include "varmix/model/model.hpp"
#include "varmix/model/optim.hpp"

namespace varmix {
namespace {

LossFn<double> ce64 = [](const Matrix<double>& z, const Matrix<double>& y) { return cross_entropy(z, y); };
LossFn<float> ce32 = [](const Matrix<float>& z, const Matrix<float>& y) { return cross_entropy(z, y); };

ModelConfig tiny_resnet_config() {
  ModelConfig c;
  c.architecture = Architecture::kThinResnet;
  c.width = 0.125;
  c.stage_blocks = {1, 1, 1, 1};
  c.input_shape = {3, 8, 8};
  c.seed = 5;
  return c;
}

template <typename Scalar>
Matrix<Scalar> random_batch(Index n, const TensorShape& s, std::uint64_t seed) {
  Rng rng(seed);
  return uniform_matrix<Scalar>(rng, n, s.size(), Scalar(0), Scalar(1));
}

// Single-layer network in double precision, checked against central differences
// of a random linear functional of its output.
void check_layer_gradients(LayerPtr<double> layer, Index batch, Mode mode, double tol = 1e-6) {
  const TensorShape in = layer->input_shape();
  std::vector<Network<double>::Block> blocks(1);
  blocks[0].push_back(std::move(layer));
  Network<double> net(in, std::move(blocks));
  net.initialize(3);
  Rng rng(17);
  net.params() += 0.1 * normal_matrix<double>(rng, net.params().size(), 1);
  const Matrix<double> x = normal_matrix<double>(rng, batch, in.size());
  const Matrix<double> w = normal_matrix<double>(rng, batch, net.output_shape().size());

  Tape<double> tape;
  net.forward(x, mode, &tape);
  Vector<double> gp = Vector<double>::Zero(net.params().size());
  const Matrix<double> gx = net.backward(w, tape, &gp);

  auto objective = [&](const Matrix<double>& xv) { return (net.forward(xv, mode).array() * w.array()).sum(); };
  const double h = 1e-6;
  for (Index i = 0; i < x.size(); i += std::max<Index>(1, x.size() / 40)) {
    Matrix<double> a = x, b = x;
    a.data()[i] += h;
    b.data()[i] -= h;
    EXPECT_NEAR(gx.data()[i], (objective(a) - objective(b)) / (2 * h), tol) << "input " << i;
  }
  const Vector<double> p0 = net.params();
  for (Index i = 0; i < p0.size(); i += std::max<Index>(1, p0.size() / 40)) {
    net.params()[i] = p0[i] + h;
    const double up = objective(x);
    net.params()[i] = p0[i] - h;
    const double down = objective(x);
    net.params()[i] = p0[i];
    EXPECT_NEAR(gp[i], (up - down) / (2 * h), tol) << "param " << i;
  }
}

TEST(Layers, GradientsMatchCentralDifferences) {
  check_layer_gradients(make_conv2d<double>({2, 5, 5}, {3, 3, 1, 1, true}), 2, Mode::kEval);
  check_layer_gradients(make_conv2d<double>({2, 6, 6}, {3, 3, 2, 1, false}), 2, Mode::kEval);
  check_layer_gradients(make_conv2d<double>({3, 5, 5}, {2, 1, 2, 0, false}), 2, Mode::kEval);
  check_layer_gradients(make_linear<double>({2, 3, 3}, 4), 3, Mode::kEval);
  check_layer_gradients(make_sigmoid<double>({1, 3, 3}), 2, Mode::kEval);
  check_layer_gradients(make_relu<double>({1, 3, 3}), 2, Mode::kEval);
  check_layer_gradients(make_max_pool2d<double>({2, 4, 4}, 2), 2, Mode::kEval);
  check_layer_gradients(make_global_avg_pool<double>({3, 2, 2}), 2, Mode::kEval);
  check_layer_gradients(make_upsample2d<double>({2, 2, 3}, 2), 2, Mode::kEval);
  check_layer_gradients(make_batch_norm2d<double>({3, 2, 2}), 4, Mode::kEval);
  check_layer_gradients(make_batch_norm2d<double>({3, 2, 2}), 4, Mode::kTrain, 1e-5);
  check_layer_gradients(make_basic_residual_block<double>({2, 4, 4}, 2, 1), 3, Mode::kTrain, 1e-5);
  check_layer_gradients(make_basic_residual_block<double>({2, 4, 4}, 4, 2), 3, Mode::kEval, 1e-5);
}

TEST(Layers, ShapeContracts) {
  EXPECT_EQ(make_conv2d<float>({3, 32, 32}, {16, 3, 1, 1, true})->output_shape(), (TensorShape{16, 32, 32}));
  EXPECT_EQ(make_conv2d<float>({3, 32, 32}, {16, 3, 2, 1, true})->output_shape(), (TensorShape{16, 16, 16}));
  EXPECT_EQ(make_max_pool2d<float>({4, 7, 7}, 2)->output_shape(), (TensorShape{4, 3, 3}));
  EXPECT_THROW(make_reshape<float>({1, 2, 2}, {1, 1, 3}), ShapeError);
  auto relu = make_relu<float>({1, 2, 2});
  EXPECT_THROW(relu->forward(Matrix<float>::Zero(1, 5), nullptr, nullptr, Mode::kEval, nullptr), ShapeError);
}

TEST(Layers, BatchNormRunningStatistics) {
  auto bn = make_batch_norm2d<double>({1, 1, 2}, 0.1, 1e-5);
  Vector<double> params(2), buffers(2);
  Rng rng(0);
  bn->initialize(params.data(), buffers.data(), rng);
  Matrix<double> x(2, 2);
  x << 1, 3, 5, 7;
  Cache<double> cache;
  const Matrix<double> y = bn->forward(x, params.data(), buffers.data(), Mode::kTrain, &cache);
  EXPECT_NEAR(y.mean(), 0.0, 1e-12);
  bn->update_buffers(cache, buffers.data());
  // mean 4, unbiased variance 20/3
  EXPECT_NEAR(buffers[0], 0.1 * 4.0, 1e-12);
  EXPECT_NEAR(buffers[1], 0.9 + 0.1 * 20.0 / 3.0, 1e-12);
  Cache<double> eval_cache;
  bn->forward(x, params.data(), buffers.data(), Mode::kEval, &eval_cache);
  const Vector<double> before = buffers;
  bn->update_buffers(eval_cache, buffers.data());
  EXPECT_TRUE(before == buffers);
}

TEST(BuildModel, SameSeedSameParameters) {
  ModelConfig c;
  c.seed = 9;
  const auto a = build_model<float>(c);
  const auto b = build_model<float>(c);
  EXPECT_TRUE(a.net().params() == b.net().params());
  c.seed = 10;
  EXPECT_FALSE(a.net().params() == build_model<float>(c).net().params());
}

TEST(BuildModel, SmallCnnLogitShape) {
  const auto m = build_model<float>(ModelConfig{});
  for (Index n : {1, 3, 17}) {
    const Matrix<float> z = m.logits(random_batch<float>(n, {1, 28, 28}, 1));
    EXPECT_EQ(z.rows(), n);
    EXPECT_EQ(z.cols(), 10);
  }
  EXPECT_EQ(m.net().num_blocks(), 4);
}

TEST(BuildModel, ThinResnetShapesAndEmptyBatchError) {
  ModelConfig c = tiny_resnet_config();
  const auto m = build_model<float>(c);
  EXPECT_EQ(m.logits(random_batch<float>(2, c.input_shape, 2)).cols(), 10);
  EXPECT_THROW(m.logits(Matrix<float>(0, c.input_shape.size())), InvalidArgument);

  ModelConfig full;
  full.architecture = Architecture::kThinResnet;
  full.width = 0.5;
  full.input_shape = {3, 32, 32};
  const auto r = build_model<float>(full);
  EXPECT_EQ(r.logits(random_batch<float>(1, full.input_shape, 3)).cols(), 10);
  EXPECT_EQ(r.net().block_input_shape(1), (TensorShape{32, 32, 32}));
  EXPECT_EQ(r.net().block_input_shape(3), (TensorShape{128, 8, 8}));
}

TEST(BuildModel, InvalidConfigs) {
  EXPECT_THROW(architecture_from_string("resnet34"), ConfigError);
  ModelConfig c;
  c.width = 0.0;
  EXPECT_THROW(build_model<float>(c), ConfigError);
}

TEST(BuildModel, ConfigJsonRoundTrip) {
  const ModelConfig c = tiny_resnet_config();
  const nlohmann::json j = c;
  EXPECT_EQ(j.get<ModelConfig>(), c);
}

TEST(Network, EvalForwardIsBitIdenticalAndRowPure) {
  for (const ModelConfig& c : {ModelConfig{}, tiny_resnet_config()}) {
    const auto m = build_model<float>(c);
    const Matrix<float> x = random_batch<float>(5, c.input_shape, 4);
    const Matrix<float> a = m.logits(x);
    EXPECT_TRUE(a == m.logits(x));
    for (Index i = 0; i < x.rows(); ++i) {
      const Matrix<float> row = x.row(i);
      EXPECT_TRUE(m.logits(row) == a.row(i)) << to_string(c.architecture) << " row " << i;
    }
  }
}

TEST(Network, ForwardWithParamsMatchesStoredParams) {
  auto m = build_model<double>(tiny_resnet_config());
  const Matrix<double> x = random_batch<double>(3, {3, 8, 8}, 6);
  const Vector<double> other = build_model<double>([] {
                                 ModelConfig c = tiny_resnet_config();
                                 c.seed = 77;
                                 return c;
                               }()).net().params();
  EXPECT_TRUE(m.net().forward_with_params(x, m.net().params()) == m.net().forward(x));
  const Matrix<double> swapped = m.net().forward_with_params(x, other);
  m.net().params() = other;
  EXPECT_TRUE(swapped == m.net().forward(x));
  EXPECT_THROW(m.net().forward_with_params(x, Vector<double>::Zero(3)), ShapeError);
}

TEST(Model, CastRejectsForeignNetworks) {
  ModelConfig c;
  c.input_shape = {1, 4, 4};
  std::vector<Network<double>::Block> blocks(1);
  blocks[0].push_back(make_linear<double>({1, 4, 4}, 10));
  Network<double> net({1, 4, 4}, std::move(blocks));
  net.initialize(1);
  const Model<double> m(c, std::move(net));
  EXPECT_THROW(m.cast<float>(), InvalidArgument);
  EXPECT_NO_THROW(build_model<double>(c).cast<float>());
}

TEST(Network, HiddenLayerAccess) {
  const auto m = build_model<double>(ModelConfig{});
  const Matrix<double> x = random_batch<double>(3, {1, 28, 28}, 5);
  EXPECT_TRUE(m.hidden(x, 0) == x);
  EXPECT_EQ(m.hidden(x, 1).cols(), (TensorShape{16, 14, 14}).size());
  EXPECT_EQ(m.hidden(x, 3).cols(), 128);
  EXPECT_THROW(m.hidden(x, 4), InvalidArgument);
  EXPECT_THROW(m.hidden(x, -1), InvalidArgument);
  EXPECT_TRUE(m.net().forward_blocks(m.hidden(x, 2), 2, 4, Mode::kEval) == m.logits(x));
}

TEST(CrossEntropy, UniformLogitsGiveLogK) {
  const Matrix<double> z = Matrix<double>::Constant(3, 10, 0.7);
  const auto r = cross_entropy(z, one_hot<double>({0, 4, 9}, 10));
  EXPECT_NEAR(r.value, std::log(10.0), 1e-12);
  EXPECT_NEAR(r.value, 2.302585, 1e-6);
}

TEST(CrossEntropy, SoftmaxLabelGivesEntropy) {
  Rng rng(2);
  const Matrix<double> z = normal_matrix<double>(rng, 4, 6);
  Matrix<double> p(4, 6);
  for (Index i = 0; i < 4; ++i) {
    double s = 0;
    for (Index k = 0; k < 6; ++k) s += std::exp(z(i, k));
    for (Index k = 0; k < 6; ++k) p(i, k) = std::exp(z(i, k)) / s;
  }
  double entropy = 0;
  for (Index i = 0; i < 4; ++i)
    for (Index k = 0; k < 6; ++k) entropy -= p(i, k) * std::log(p(i, k));
  EXPECT_NEAR(cross_entropy(z, p).value, entropy / 4, 1e-12);
}

TEST(CrossEntropy, LinearInTheLabel) {
  Rng rng(3);
  const Matrix<double> z = normal_matrix<double>(rng, 1, 5);
  const Matrix<double> yi = one_hot<double>({1}, 5);
  const Matrix<double> yj = one_hot<double>({3}, 5);
  const double lam = 0.3;
  EXPECT_NEAR(cross_entropy(z, (lam * yi + (1 - lam) * yj).eval()).value,
              lam * cross_entropy(z, yi).value + (1 - lam) * cross_entropy(z, yj).value, 1e-12);
  EXPECT_THROW(cross_entropy<double>(z, Matrix<double>::Zero(1, 4)), ShapeError);
  EXPECT_GE(cross_entropy(z, yi).value, 0.0);
}

TEST(GradInput, MatchesCentralDifferences) {
  const auto m = build_model<double>(ModelConfig{});
  const Matrix<double> x = random_batch<double>(2, {1, 28, 28}, 6);
  const Matrix<double> y = one_hot<double>({3, 8}, 10);
  FiniteDiffOptions o;
  o.h = 1e-3;
  o.probes = 10;
  EXPECT_LT(finite_diff_check(m, ce64, x, y, o), 1e-3);
}

TEST(GradInput, ConstantModelHasZeroGradient) {
  auto m = build_model<double>(ModelConfig{});
  m.net().params().setZero();
  const Matrix<double> x = random_batch<double>(2, {1, 28, 28}, 7);
  const Matrix<double> g = grad_input(m, ce64, x, one_hot<double>({1, 2}, 10));
  EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
}

TEST(GradInput, LinearModelClosedForm) {
  std::vector<Network<double>::Block> blocks(1);
  blocks[0].push_back(make_linear<double>({1, 2, 3}, 4));
  Network<double> net({1, 2, 3}, std::move(blocks));
  net.initialize(1);
  ModelConfig c;
  c.num_classes = 4;
  c.input_shape = {1, 2, 3};
  Model<double> m(c, std::move(net));
  // Column-major (out x in) weight layout.
  const Eigen::Map<const Eigen::MatrixXd> w(m.net().params().data(), 4, 6);
  const Eigen::Map<const Eigen::VectorXd> b(m.net().params().data() + 24, 4);
  const Matrix<double> x = random_batch<double>(3, {1, 2, 3}, 8);
  const Matrix<double> y = one_hot<double>({0, 2, 3}, 4);
  Matrix<double> expected(3, 6);
  for (Index i = 0; i < 3; ++i) {
    Eigen::VectorXd z = w * x.row(i).transpose() + b;
    Eigen::VectorXd p = (z.array() - z.maxCoeff()).exp();
    p /= p.sum();
    expected.row(i) = (w.transpose() * (p - y.row(i).transpose())).transpose() / 3.0;
  }
  EXPECT_LT((grad_input(m, ce64, x, y) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FiniteDiffCheck, SmallCnnFloat32) {
  const auto m = build_model<float>(ModelConfig{});
  const Matrix<float> x = random_batch<float>(1, {1, 28, 28}, 9);
  const Matrix<float> y = one_hot<float>({4}, 10);
  FiniteDiffOptions o;
  o.h = 1e-3;
  o.probes = 10;
  EXPECT_LT(finite_diff_check(m, ce32, x, y, o, GradTarget::kInput), 1e-2);
  EXPECT_LT(finite_diff_check(m, ce32, x, y, o, GradTarget::kParams), 1e-2);
}

TEST(FiniteDiffCheck, ThinResnetFloat32) {
  const auto m = build_model<float>(tiny_resnet_config());
  const Matrix<float> x = random_batch<float>(2, {3, 8, 8}, 10);
  const Matrix<float> y = one_hot<float>({4, 7}, 10);
  FiniteDiffOptions o;
  o.h = 1e-3;
  o.probes = 10;
  EXPECT_LT(finite_diff_check(m, ce32, x, y, o, GradTarget::kInput), 1e-2);
  EXPECT_LT(finite_diff_check(m, ce32, x, y, o, GradTarget::kParams), 1e-2);

  // Train mode normalizes with batch statistics; give every channel enough values.
  ModelConfig wide = tiny_resnet_config();
  wide.input_shape = {3, 16, 16};
  const auto t = build_model<float>(wide);
  const Matrix<float> xt = random_batch<float>(4, wide.input_shape, 11);
  const Matrix<float> yt = one_hot<float>({1, 2, 3, 4}, 10);
  o.mode = Mode::kTrain;
  EXPECT_LT(finite_diff_check(t, ce32, xt, yt, o, GradTarget::kInput), 1e-2);
  EXPECT_LT(finite_diff_check(t, ce32, xt, yt, o, GradTarget::kParams), 1e-2);
}

TEST(FiniteDiffCheck, QuadraticToy64) {
  Rng rng(4);
  const Vector<double> a = normal_matrix<double>(rng, 8, 1);
  const Vector<double> x0 = normal_matrix<double>(rng, 8, 1);
  auto f = [&](const Vector<double>& x) { return 0.5 * (x - a).squaredNorm() + x.sum(); };
  const Vector<double> g = (x0 - a).array() + 1.0;
  FiniteDiffOptions o;
  o.h = 1e-4;
  o.probes = 8;
  o.probe_floor = 0.0;
  EXPECT_LT(finite_diff_check<double>(f, x0, g, o), 1e-6);
  o.probes = 0;
  EXPECT_THROW(finite_diff_check<double>(f, x0, g, o), InvalidArgument);
  o.probes = 1;
  o.h = 0;
  EXPECT_THROW(finite_diff_check<double>(f, x0, g, o), InvalidArgument);
  o.h = 1e-4;
  auto never = [](const Vector<double>&, const Vector<double>&) { return false; };
  EXPECT_THROW(finite_diff_check<double>(f, x0, g, o, never), InvalidArgument);
}

TEST(Checkpoint, RoundTripAndCorruption) {
  testing::TempDir tmp("ckpt");
  auto m = build_model<float>(tiny_resnet_config());
  m.net().buffers().setConstant(0.25f);
  save_model(tmp.path() / "m.ckpt", m, {{"epoch", 3}, {"trainer", "erm"}});
  nlohmann::json meta;
  const auto r = load_model<float>(tmp.path() / "m.ckpt", &meta);
  EXPECT_EQ(r.config(), m.config());
  EXPECT_TRUE(r.net().params() == m.net().params());
  EXPECT_TRUE(r.net().buffers() == m.net().buffers());
  EXPECT_EQ(meta["epoch"], 3);
  std::ofstream(tmp.path() / "bad.ckpt") << "not a checkpoint";
  EXPECT_THROW(load_model<float>(tmp.path() / "bad.ckpt"), FormatError);
  EXPECT_THROW(load_model<float>(tmp.path() / "missing.ckpt"), IngestionError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Adam<double> opt(3);
  Vector<double> p = Vector<double>::Zero(3);
  Vector<double> g(3);
  g << 2.0, -0.5, 0.0;
  opt.step(p, g);
  // Bias-corrected first step is lr * g / (|g| + eps).
  EXPECT_NEAR(p[0], -1e-3 * 2.0 / (2.0 + 1e-8), 1e-15);
  EXPECT_NEAR(p[1], 1e-3 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_EQ(p[2], 0.0);
}

}  // namespace
}  // namespace varmix
