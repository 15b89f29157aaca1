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

#include <set>

#include "test_support.hpp"
#include "varmix/core/errors.hpp"
#include "varmix/inference/inference.hpp"
#include "varmix/model/loss.hpp"
#include "varmix/vae/vae.hpp"

namespace varmix {
namespace {

ModelConfig small_model() {
  ModelConfig c;
  c.input_shape = {1, 8, 8};
  c.num_classes = 10;
  c.width = 0.5;
  c.seed = 8;
  return c;
}

TEST(Pool, OtherLabelsOnly) {
  const Dataset ds = testing::random_dataset(200, {1, 2, 2}, 10, 3);
  const std::vector<Index> pool = build_pool_other_labels(ds, 4);
  EXPECT_EQ(pool.size(), 180u);
  const ClassPools pools(ds);
  EXPECT_EQ(pools.other_than(4), pool);
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const int c = static_cast<int>(rng() % 10);
    for (Index idx : pools.draw(c, 1, rng)) ASSERT_NE(ds.label(idx), c);
  }
  const std::vector<Index> d = pools.draw(2, 30, rng);
  EXPECT_EQ(std::set<Index>(d.begin(), d.end()).size(), 30u);
  const std::vector<Index> big = pools.draw(2, 500, rng);
  EXPECT_EQ(big.size(), 500u);

  const Dataset one(Matrix<float>::Zero(3, 4), {1, 1, 1}, {1, 2, 2}, 10, Split::kTrain);
  EXPECT_THROW(build_pool_other_labels(one, 1), InvalidArgument);
  EXPECT_THROW(ClassPools(one).other_than(1), InvalidArgument);
  EXPECT_THROW(ClassPools(one).other_than(12), InvalidArgument);
}

TEST(Policy, JsonDefaultsAndValidation) {
  InferencePolicy p;
  EXPECT_EQ(p.lambda_mi, 0.5);
  EXPECT_EQ(p.n_mi, 30);
  const nlohmann::json j = p;
  EXPECT_EQ(j.at("lambda_mi"), 0.5);
  EXPECT_EQ(j.at("n_mi"), 30);
  EXPECT_EQ(j.at("averaging"), "probs");
  p.variant = InferenceVariant::kVarMi;
  p.averaging = Averaging::kLogits;
  EXPECT_TRUE(nlohmann::json(p).get<InferencePolicy>() == p);
  p.n_mi = 0;
  EXPECT_THROW(p.validate(), ConfigError);
  EXPECT_THROW(inference_variant_from_string("mi-pl"), ConfigError);
}

class MixupInference : public ::testing::Test {
 protected:
  MixupInference()
      : pool_(testing::random_dataset(100, {1, 8, 8}, 10, 5)),
        pools_(pool_),
        model_(build_model<double>(small_model())) {
    Rng rng(2);
    x_ = uniform_matrix<double>(rng, 7, 64, 0.0, 1.0);
  }
  Dataset pool_;
  ClassPools pools_;
  Model<double> model_;
  Matrix<double> x_;
};

TEST_F(MixupInference, LambdaOneIsPlainPrediction) {
  InferencePolicy p;
  p.variant = InferenceVariant::kMiOl;
  p.lambda_mi = 1.0;
  for (Averaging a : {Averaging::kProbs, Averaging::kLogits}) {
    p.averaging = a;
    EXPECT_TRUE(mi_ol_predict(model_, x_, p, pools_) == plain_predict(model_, x_, a));
  }
}

TEST_F(MixupInference, VarMiEndpointAndIdentityStub) {
  VaeConfig vc;
  vc.image_shape = {1, 8, 8};
  vc.latent_dim = 4;
  vc.hidden = 16;
  const Vae<double> vae(vc);
  InferencePolicy p;
  p.variant = InferenceVariant::kVarMi;
  p.lambda_mi = 1.0;
  p.n_mi = 5;
  const Matrix<double> expected = softmax(model_.logits(vae.decode_mean(vae.encode_mean(x_))));
  EXPECT_TRUE(varmi_predict(model_, vae, x_, p, pools_) == expected);
  p.seed = 99;
  EXPECT_TRUE(varmi_predict(model_, vae, x_, p, pools_) == expected);

  const IdentityCodec<double> id({1, 8, 8});
  p.lambda_mi = 0.5;
  p.n_mi = 6;
  for (Averaging a : {Averaging::kProbs, Averaging::kLogits}) {
    p.averaging = a;
    EXPECT_TRUE(varmi_predict(model_, id, x_, p, pools_) == mi_ol_predict(model_, x_, p, pools_));
  }
  EXPECT_THROW(varmi_predict(model_, vae, Matrix<double>(Matrix<double>::Zero(2, 10)), p, pools_), ShapeError);
}

TEST_F(MixupInference, OutputIsArithmeticMeanOfDraws) {
  InferencePolicy p;
  p.variant = InferenceVariant::kMiOl;
  p.n_mi = 9;
  p.seed = 4;
  const Matrix<double> out = mi_ol_predict(model_, x_, p, pools_, 3);
  EXPECT_TRUE(out == mi_ol_predict(model_, x_, p, pools_, 3));
  const std::vector<int> pred = argmax_rows(model_.logits(x_));
  for (Index i = 0; i < x_.rows(); ++i) {
    Rng rng(derive_seed(p.seed, static_cast<std::uint64_t>(3 + i)));
    const std::vector<Index> draws = pools_.draw(pred[static_cast<std::size_t>(i)], 9, rng);
    RowVector<double> sum = RowVector<double>::Zero(10);
    for (Index idx : draws) {
      ASSERT_NE(pool_.label(idx), pred[static_cast<std::size_t>(i)]);
      const Matrix<double> mixed = 0.5 * x_.row(i) + 0.5 * pool_.images().row(idx).cast<double>();
      sum += softmax(model_.logits(mixed));
    }
    EXPECT_LT((out.row(i) - sum / 9.0).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST_F(MixupInference, MeanVarianceShrinksLikeOneOverN) {
  InferencePolicy p;
  p.variant = InferenceVariant::kMiOl;
  const Matrix<double> x = x_.topRows(1);
  auto variance = [&](Index n) {
    p.n_mi = n;
    std::vector<double> v;
    for (std::uint64_t s = 0; s < 400; ++s) {
      p.seed = s;
      v.push_back(mi_ol_predict(model_, x, p, pools_)(0, 0));
    }
    double mean = 0, var = 0;
    for (double e : v) mean += e / static_cast<double>(v.size());
    for (double e : v) var += (e - mean) * (e - mean) / static_cast<double>(v.size() - 1);
    return var;
  };
  const double ratio = variance(1) / variance(8);
  // Draws are without replacement from a finite pool, which lowers the
  // variance of the mean slightly below the with-replacement 1/N.
  EXPECT_GT(ratio, 8.0 * 0.7);
  EXPECT_LT(ratio, 8.0 * 1.6);
}

TEST_F(MixupInference, DispatchRequiresResources) {
  InferencePolicy p;
  EXPECT_TRUE(defended_predict<double>(model_, nullptr, x_, p, nullptr) == softmax(model_.logits(x_)));
  p.variant = InferenceVariant::kMiOl;
  EXPECT_THROW(defended_predict<double>(model_, nullptr, x_, p, nullptr), ConfigError);
  p.variant = InferenceVariant::kVarMi;
  EXPECT_THROW(defended_predict<double>(model_, nullptr, x_, p, &pools_), ConfigError);
}

}  // namespace
}  // namespace varmix
