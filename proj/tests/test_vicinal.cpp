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

#include <algorithm>
#include <fstream>
#include <numeric>

#include "test_support.hpp"
#include "varmix/core/errors.hpp"
#include "varmix/model/loss.hpp"
#include "varmix/vae/vae.hpp"
#include "varmix/vicinal/vicinal.hpp"

namespace varmix {
namespace {

LabeledExample example(std::vector<float> pixels, int label) {
  LabeledExample e;
  e.image = Eigen::Map<Vector<float>>(pixels.data(), static_cast<Index>(pixels.size()));
  e.shape = {1, 1, static_cast<Index>(pixels.size())};
  e.label = label;
  return e;
}

LabeledExample random_example(Rng& rng, TensorShape shape, int label) {
  LabeledExample e;
  e.image = uniform_matrix<float>(rng, shape.size(), 1, 0.0f, 1.0f);
  e.shape = shape;
  e.label = label;
  return e;
}

TEST(SampleLambda, UniformMeanSupportAndDeterminism) {
  Rng rng(1);
  double sum = 0;
  for (int i = 0; i < 100000; ++i) {
    const double l = sample_lambda(1.0, rng);
    ASSERT_GE(l, 0.0);
    ASSERT_LE(l, 1.0);
    sum += l;
  }
  EXPECT_NEAR(sum / 100000, 0.5, 0.01);
  MixupConfig cfg;
  cfg.eta = 0.4;
  EXPECT_EQ(sample_lambda(cfg, 9), sample_lambda(cfg, 9));
  EXPECT_NE(sample_lambda(cfg, 9), sample_lambda(cfg, 10));
  EXPECT_THROW(sample_lambda(0.0, rng), InvalidArgument);
  cfg.eta = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(MixupConfig, JsonRoundTrip) {
  MixupConfig c;
  c.eta = 0.2;
  c.source = MixSource::kHidden;
  EXPECT_TRUE(nlohmann::json(c).get<MixupConfig>() == c);
  c.fixed_lambda = 1.0;
  EXPECT_TRUE(nlohmann::json(c).get<MixupConfig>() == c);
  EXPECT_THROW(mix_source_from_string("pixel"), ConfigError);
}

TEST(MixupPair, EndpointsMidpointAndSymmetry) {
  const LabeledExample a = example({0.0f}, 0);
  const LabeledExample b = example({1.0f}, 2);
  const VicinalSample<double> mid = mixup_pair<double>(a, b, 0.5, 4);
  EXPECT_EQ(mid.x[0], 0.5);
  EXPECT_EQ(mid.y, (Vector<double>(4) << 0.5, 0, 0.5, 0).finished());

  Rng rng(3);
  const LabeledExample p = random_example(rng, {1, 4, 4}, 1);
  const LabeledExample q = random_example(rng, {1, 4, 4}, 3);
  const VicinalSample<double> end = mixup_pair<double>(p, q, 1.0, 5);
  EXPECT_TRUE(end.x == p.image.cast<double>());
  EXPECT_TRUE(end.y == one_hot<double>({1}, 5).row(0).transpose());
  for (double l : {0.1, 0.37, 0.8}) {
    const VicinalSample<double> s = mixup_pair<double>(p, q, l, 5);
    const VicinalSample<double> t = mixup_pair<double>(q, p, 1 - l, 5);
    EXPECT_LT((s.x - t.x).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((s.y - t.y).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(s.y.sum(), 1.0, 1e-6);
    EXPECT_GE(s.y.minCoeff(), 0.0);
    for (Index i = 0; i < s.x.size(); ++i) {
      EXPECT_GE(s.x[i], std::min(p.image[i], q.image[i]) - 1e-12);
      EXPECT_LE(s.x[i], std::max(p.image[i], q.image[i]) + 1e-12);
    }
  }
  EXPECT_THROW(mixup_pair<double>(p, example({0.0f}, 0), 0.5, 5), ShapeError);
  EXPECT_THROW(mixup_pair<double>(p, q, 1.5, 5), InvalidArgument);
}

TEST(VarMixupPair, IdentityCodecReducesToMixup) {
  Rng rng(5);
  const TensorShape s{1, 3, 3};
  const IdentityCodec<double> id(s);
  for (int t = 0; t < 20; ++t) {
    const LabeledExample a = random_example(rng, s, t % 3);
    const LabeledExample b = random_example(rng, s, (t + 1) % 3);
    const double l = sample_lambda(1.0, rng);
    const VicinalSample<double> m = mixup_pair<double>(a, b, l, 3);
    const VicinalSample<double> v = varmixup_pair<double>(a, b, l, id, 3);
    EXPECT_TRUE(m.x == v.x);
    EXPECT_TRUE(m.y == v.y);
  }
}

TEST(VarMixupPair, EndpointsSymmetryAndVarErm) {
  VaeConfig cfg;
  cfg.image_shape = {1, 4, 4};
  cfg.latent_dim = 2;
  cfg.hidden = 8;
  const Vae<double> vae(cfg);
  Rng rng(8);
  const LabeledExample a = random_example(rng, cfg.image_shape, 0);
  const LabeledExample b = random_example(rng, cfg.image_shape, 1);
  const Matrix<double> ra = vae.decode_mean(vae.encode_mean(a.image.cast<double>().transpose()));
  const VicinalSample<double> end = varmixup_pair<double>(a, b, 1.0, vae, 2);
  EXPECT_TRUE(end.x == ra.row(0).transpose());
  EXPECT_TRUE(end.y == (Vector<double>(2) << 1, 0).finished());
  const VicinalSample<double> s = varmixup_pair<double>(a, b, 0.3, vae, 2);
  const VicinalSample<double> t = varmixup_pair<double>(b, a, 0.7, vae, 2);
  EXPECT_LT((s.x - t.x).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_GE(s.x.minCoeff(), 0.0);
  EXPECT_LE(s.x.maxCoeff(), 1.0);

  const VicinalSample<double> e = varerm_sample<double>(a, vae, 2);
  EXPECT_EQ(e.lambda, 1.0);
  EXPECT_TRUE(e.y == (Vector<double>(2) << 1, 0).finished());
  for (double l : {0.0, 0.25, 0.9})
    EXPECT_LT((varmixup_pair<double>(a, a, l, vae, 2).x - e.x).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(varerm_sample<double>(example({0.5f}, 0), vae, 2), ShapeError);
}

TEST(MixPlan, BatchMixingMatchesPairs) {
  Rng rng(2);
  const Dataset ds = testing::random_dataset(12, {1, 3, 3}, 3, 4);
  std::vector<Index> idx(12);
  std::iota(idx.begin(), idx.end(), Index{0});
  const Matrix<double> x = ds.gather<double>(idx);
  const Matrix<double> y = one_hot<double>(ds.labels(), 3);
  MixupConfig cfg;
  cfg.eta = 0.5;
  const MixPlan plan = draw_mix_plan(rng, 12, cfg);
  std::vector<Index> sorted = plan.partner;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, idx);
  const MixedBatch<double> mixed = mixup_batch(x, y, plan);
  for (Index i = 0; i < 12; ++i) {
    const auto j = plan.partner[static_cast<std::size_t>(i)];
    const VicinalSample<double> p = mixup_pair<double>(ds.example(i), ds.example(j), plan.lambda[static_cast<std::size_t>(i)], 3);
    EXPECT_LT((mixed.x.row(i).transpose() - p.x).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((mixed.y.row(i).transpose() - p.y).cwiseAbs().maxCoeff(), 1e-12);
  }
  const Matrix<double> g = normal_matrix<double>(rng, 12, 9);
  const Matrix<double> v = normal_matrix<double>(rng, 12, 9);
  EXPECT_NEAR(mix_rows(v, plan).cwiseProduct(g).sum(), v.cwiseProduct(mix_rows_adjoint(g, plan)).sum(), 1e-10);

  cfg.fixed_lambda = 1.0;
  Rng r1(7), r2(7);
  const MixPlan fixed = draw_mix_plan(r1, 12, cfg);
  cfg.fixed_lambda.reset();
  draw_mix_plan(r2, 12, cfg);
  EXPECT_EQ(r1(), r2());
  EXPECT_TRUE(mixup_batch(x, y, fixed).x == x);
  EXPECT_TRUE(mixup_batch(x, y, fixed).y == y);
  const IdentityCodec<double> id({1, 3, 3});
  EXPECT_TRUE(varmixup_batch(id, x, y, plan).x == mixed.x);
}

TEST(ManifoldMixup, LayerZeroEndpointAndAffineHead) {
  ModelConfig mc;
  mc.input_shape = {1, 12, 12};
  mc.width = 0.5;
  mc.seed = 4;
  const Model<double> model = build_model<double>(mc);
  Rng rng(6);
  const Matrix<double> a = uniform_matrix<double>(rng, 5, 144, 0.0, 1.0);
  const Matrix<double> b = uniform_matrix<double>(rng, 5, 144, 0.0, 1.0);
  std::vector<double> lambda(5);
  for (double& l : lambda) l = sample_lambda(1.0, rng);
  MixPlan plan;
  Matrix<double> ab(10, 144);
  ab << a, b;
  for (Index i = 0; i < 5; ++i) {
    plan.partner.push_back(i + 5);
    plan.lambda.push_back(lambda[static_cast<std::size_t>(i)]);
  }
  for (Index i = 0; i < 5; ++i) {
    plan.partner.push_back(i);
    plan.lambda.push_back(1.0);
  }
  const Matrix<double> input_mixed = mix_rows(ab, plan).topRows(5);
  EXPECT_LT((manifold_mixup_logits(model, a, b, lambda, 0) - model.logits(input_mixed)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE(manifold_mixup_logits(model, a, b, std::vector<double>(5, 1.0), 2) == model.logits(a));

  // The head (block 3) is a single linear layer, so mixing its input mixes logits.
  const Index last = model.net().num_blocks() - 1;
  const Matrix<double> ha = model.hidden(a, last);
  const Matrix<double> hb = model.hidden(b, last);
  Matrix<double> h(5, ha.cols());
  for (Index i = 0; i < 5; ++i) h.row(i) = lambda[static_cast<std::size_t>(i)] * ha.row(i) + (1 - lambda[static_cast<std::size_t>(i)]) * hb.row(i);
  const Matrix<double> mixed = model.net().forward_blocks(h, last, last + 1, Mode::kEval);
  const Matrix<double> la = model.logits(a);
  const Matrix<double> lb = model.logits(b);
  for (Index i = 0; i < 5; ++i) {
    const double l = lambda[static_cast<std::size_t>(i)];
    EXPECT_LT((mixed.row(i) - (l * la.row(i) + (1 - l) * lb.row(i))).cwiseAbs().maxCoeff(), 1e-9);
  }
  EXPECT_THROW(manifold_mixup_logits(model, a, b, lambda, 3), InvalidArgument);
  EXPECT_THROW(manifold_mixup_logits(model, a, b, lambda, -1), InvalidArgument);
}

TEST(ImageGrid, WritesPng) {
  testing::TempDir dir("grid");
  Rng rng(1);
  const Matrix<float> images = uniform_matrix<float>(rng, 10, 3 * 4 * 4, 0.0f, 1.0f);
  write_image_grid(dir.path() / "grid.png", images, {3, 4, 4}, 4);
  std::ifstream in(dir.path() / "grid.png", std::ios::binary);
  char sig[8];
  in.read(sig, 8);
  EXPECT_EQ(std::string(sig + 1, 3), "PNG");
  EXPECT_THROW(write_image_grid(dir.path() / "x.png", images, {1, 4, 4}), ShapeError);
}

}  // namespace
}  // namespace varmix
