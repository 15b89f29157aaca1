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
#include <memory>
#include <numeric>

#include "test_support.hpp"
#include "varmix/attacks/attacks.hpp"
#include "varmix/core/errors.hpp"
#include "varmix/model/gradients.hpp"
#include "varmix/model/loss.hpp"
#include "varmix/training/training.hpp"
#include "varmix/vae/vae.hpp"

namespace varmix {
namespace {

bool in_budget(const Matrix<float>& adv, const Matrix<float>& x, double eps) {
  return (adv - x).cwiseAbs().maxCoeff() <= eps + 1e-6 && adv.minCoeff() >= 0.0f && adv.maxCoeff() <= 1.0f;
}

Vector<float> per_example_ce(const Model<float>& model, const Matrix<float>& x, const std::vector<int>& y) {
  return cross_entropy(model.logits(x), one_hot<float>(y, model.num_classes())).per_example;
}

double accuracy_on(const Model<float>& model, const Matrix<float>& x, const std::vector<int>& y) {
  const std::vector<int> p = argmax_rows(model.logits(x));
  Index c = 0;
  for (std::size_t i = 0; i < y.size(); ++i) c += p[i] == y[i];
  return static_cast<double>(c) / static_cast<double>(y.size());
}

TEST(Fgsm, ZeroBudgetAndLinearLoss) {
  Rng rng(1);
  const Matrix<float> x = uniform_matrix<float>(rng, 4, 6, 0.0f, 1.0f);
  Matrix<float> c = normal_matrix<float>(rng, 4, 6);
  c(0, 0) = 0;
  AttackBudget b;
  b.epsilon = 0.1;
  b.steps = 1;
  const InputGradFn<float> linear = [&](const Matrix<float>&) { return c; };
  const Matrix<float> adv = fgsm(linear, x, b);
  const Matrix<float> expected =
      (x + 0.1f * sign_of(c)).cwiseMax(0.0f).cwiseMin(1.0f);
  EXPECT_LT((adv - expected).cwiseAbs().maxCoeff(), 1e-7);
  EXPECT_EQ(adv(0, 0), x(0, 0));
  b.epsilon = 0;
  EXPECT_TRUE(fgsm(linear, x, b) == x);
}

TEST(Pgd, StepsZeroZeroGradientAndRandomStart) {
  Rng rng(2);
  const Matrix<float> x = uniform_matrix<float>(rng, 5, 10, 0.0f, 1.0f);
  const InputGradFn<float> zero = [](const Matrix<float>& v) { return Matrix<float>::Zero(v.rows(), v.cols()); };
  AttackBudget b;
  b.steps = 0;
  EXPECT_TRUE(pgd(zero, x, b, 3) == x);
  const Matrix<float> start = pgd(zero, x, b, 3, true);
  EXPECT_TRUE(in_budget(start, x, b.epsilon));
  EXPECT_FALSE(start == x);
  b.steps = 7;
  EXPECT_TRUE(pgd(zero, x, b, 3) == x);
  EXPECT_TRUE(pgd(zero, x, b, 3, true) == start);
  Matrix<float> feasible = start;
  project_linf(feasible, x, b);
  EXPECT_TRUE(feasible == start);
}

class TrainedModel : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    TrainTestPair mnist = load_mnist(testing::mnist_dir());
    train_ = new Dataset(subsample(mnist.train, 100, 1));
    test_ = new Dataset(subsample(mnist.test, 20, 2));
    ModelConfig mc;
    mc.seed = 3;
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 64;
    model_ = new Model<float>(train<float>(*train_, mc, tc).model);
    std::vector<Index> idx(static_cast<std::size_t>(test_->size()));
    std::iota(idx.begin(), idx.end(), Index{0});
    x_ = new Matrix<float>(test_->gather<float>(idx));
    y_ = new std::vector<int>(test_->gather_labels(idx));
  }
  static void TearDownTestSuite() {
    delete train_;
    delete test_;
    delete model_;
    delete x_;
    delete y_;
  }
  static inline Dataset* train_ = nullptr;
  static inline Dataset* test_ = nullptr;
  static inline Model<float>* model_ = nullptr;
  static inline Matrix<float>* x_ = nullptr;
  static inline std::vector<int>* y_ = nullptr;
};

TEST_F(TrainedModel, PgdIncreasesLoss) {
  ASSERT_GT(accuracy_on(*model_, *x_, *y_), 0.7);
  AttackBudget b;
  const Matrix<float> adv = pgd(*model_, *x_, *y_, b, 1);
  EXPECT_TRUE(in_budget(adv, *x_, b.epsilon));
  const Vector<float> before = per_example_ce(*model_, *x_, *y_);
  const Vector<float> after = per_example_ce(*model_, adv, *y_);
  Index up = 0;
  for (Index i = 0; i < before.size(); ++i) up += after[i] >= before[i];
  EXPECT_GE(static_cast<double>(up) / static_cast<double>(before.size()), 0.95);
  EXPECT_TRUE(pgd(*model_, *x_, *y_, b, 1) == adv);
  b.epsilon = 0;
  EXPECT_TRUE(pgd(*model_, *x_, *y_, b, 1) == *x_);
}

TEST_F(TrainedModel, AttackStrengthIsMonotone) {
  const double clean = accuracy_on(*model_, *x_, *y_);
  const double f = accuracy_on(*model_, fgsm(*model_, *x_, *y_, 8.0 / 255), *y_);
  AttackBudget b10;
  AttackBudget b50;
  b50.steps = 50;
  const double p10 = accuracy_on(*model_, pgd(*model_, *x_, *y_, b10, 1), *y_);
  const double p50 = accuracy_on(*model_, pgd(*model_, *x_, *y_, b50, 1), *y_);
  EXPECT_LE(f, clean);
  EXPECT_LE(p10, f);
  EXPECT_LE(p50, p10);
}

TEST_F(TrainedModel, TargetedAttack) {
  AttackBudget b;
  b.epsilon = 0.3;
  b.alpha = 0.02;
  b.steps = 20;
  const std::vector<int> target = runner_up_classes(*model_, *x_);
  const Matrix<float> adv = pgd_targeted(*model_, *x_, target, b, 1);
  EXPECT_TRUE(in_budget(adv, *x_, b.epsilon));
  const Matrix<float> untargeted = pgd(*model_, *x_, *y_, b, 1);
  const std::vector<int> pt = argmax_rows(model_->logits(adv));
  const std::vector<int> pu = argmax_rows(model_->logits(untargeted));
  Index hit = 0, coincide = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    hit += pt[i] == target[i];
    coincide += pu[i] == target[i];
  }
  EXPECT_GT(hit, coincide);

  const std::vector<int> current = argmax_rows(model_->logits(*x_));
  AttackBudget small;
  const Vector<float> before = per_example_ce(*model_, *x_, current);
  const Vector<float> after = per_example_ce(*model_, pgd_targeted(*model_, *x_, current, small, 2), current);
  EXPECT_LE(after.mean(), before.mean());
  Index down = 0;
  for (Index i = 0; i < before.size(); ++i) down += after[i] <= before[i] + 1e-6f;
  EXPECT_GE(static_cast<double>(down) / static_cast<double>(before.size()), 0.95);
  small.epsilon = 0;
  EXPECT_TRUE(pgd_targeted(*model_, *x_, target, small, 1) == *x_);
}

TEST_F(TrainedModel, SpsaContractsAndDeterminism) {
  AttackBudget b;
  b.steps = 3;
  SpsaConfig s;
  s.samples = 32;
  const Matrix<float> x = x_->topRows(20);
  const std::vector<int> y(y_->begin(), y_->begin() + 20);
  const Matrix<float> adv = spsa(*model_, x, y, b, s, 4);
  EXPECT_TRUE(in_budget(adv, x, b.epsilon));
  EXPECT_TRUE(spsa(*model_, x, y, b, s, 4) == adv);
  EXPECT_FALSE(spsa(*model_, x, y, b, s, 5) == adv);
  EXPECT_GE(per_example_ce(*model_, adv, y).mean(), per_example_ce(*model_, x, y).mean());
  b.epsilon = 0;
  EXPECT_TRUE(spsa(*model_, x, y, b, s, 4) == x);
}

TEST(Spsa, EstimateAlignsWithQuadraticGradient) {
  Rng rng(3);
  const Index d = 20;
  const Matrix<double> m = normal_matrix<double>(rng, d, d);
  const Matrix<double> a = m.transpose() * m / static_cast<double>(d) + Matrix<double>::Identity(d, d);
  const Vector<double> bvec = normal_matrix<double>(rng, d, 1);
  const Vector<double> x = normal_matrix<double>(rng, d, 1);
  auto f = [&](const Vector<double>& v) { return 0.5 * v.dot(a * v) + bvec.dot(v); };
  const Vector<double> g = a * x + bvec;
  SpsaConfig c;
  c.samples = 10000;
  Rng r(9);
  const Vector<double> est = spsa_gradient<double>(f, x, c, r);
  EXPECT_GT(est.dot(g) / (est.norm() * g.norm()), 0.95);
}

class AdaptiveAttack : public ::testing::Test {
 protected:
  void SetUp() override {
    VaeConfig vc;
    vc.image_shape = {1, 8, 8};
    vc.latent_dim = 4;
    vc.hidden = 24;
    vc.epochs = 3;
    vc.batch_size = 16;
    data_ = std::make_unique<Dataset>(testing::random_dataset(60, {1, 8, 8}, 3, 4));
    vae_ = std::make_unique<Vae<float>>(train_vae<float>(*data_, vc));
    ModelConfig mc;
    mc.input_shape = {1, 8, 8};
    mc.num_classes = 3;
    mc.width = 0.5;
    mc.seed = 2;
    model_ = std::make_unique<Model<float>>(build_model<float>(mc));
    pools_ = std::make_unique<ClassPools>(*data_);
    std::vector<Index> idx(12);
    std::iota(idx.begin(), idx.end(), Index{0});
    x_ = data_->gather<float>(idx);
    y_ = data_->gather_labels(idx);
  }
  std::unique_ptr<Dataset> data_;
  std::unique_ptr<Vae<float>> vae_;
  std::unique_ptr<Model<float>> model_;
  std::unique_ptr<ClassPools> pools_;
  Matrix<float> x_;
  std::vector<int> y_;
};

TEST_F(AdaptiveAttack, EndpointGradientMatchesFiniteDifferences) {
  const Matrix<float> x = x_.topRows(3);
  const std::vector<int> y(y_.begin(), y_.begin() + 3);
  const Matrix<float> partner = x_.bottomRows(3);
  const Matrix<float> g = varmi_composition_grad(*model_, *vae_, x, y, 1.0, {partner});
  auto f = [&](const Vector<float>& v) {
    return varmi_composition_loss(*model_, *vae_, Matrix<float>(Eigen::Map<const Matrix<float>>(v.data(), 3, 64)), y,
                                  1.0, partner);
  };
  FiniteDiffOptions opt;
  opt.h = 1e-2;
  const Vector<float> at = Eigen::Map<const Vector<float>>(x.data(), x.size());
  const Vector<float> analytic = Eigen::Map<const Vector<float>>(g.data(), g.size());
  EXPECT_LT(finite_diff_check<float>(f, at, analytic, opt), 1e-2);

  // With lambda = 1 the partner drops out and the composition is model o decode o encode_mean.
  const Matrix<float> other = varmi_composition_grad(*model_, *vae_, x, y, 1.0, {x_.middleRows(4, 3)});
  EXPECT_TRUE(g == other);
}

TEST_F(AdaptiveAttack, BudgetContractsAndZeroEpsilon) {
  AttackBudget b;
  b.steps = 4;
  AdaptiveConfig c;
  c.n_adaptive = 3;
  const Matrix<float> adv = adaptive_pgd_varmi(*model_, *vae_, x_, y_, b, c, *pools_, 5);
  EXPECT_TRUE(in_budget(adv, x_, b.epsilon));
  EXPECT_TRUE(adaptive_pgd_varmi(*model_, *vae_, x_, y_, b, c, *pools_, 5) == adv);
  b.epsilon = 0;
  EXPECT_TRUE(adaptive_pgd_varmi(*model_, *vae_, x_, y_, b, c, *pools_, 5) == x_);
  c.n_adaptive = 0;
  EXPECT_THROW(adaptive_pgd_varmi(*model_, *vae_, x_, y_, b, c, *pools_, 5), ConfigError);
  const Dataset single = testing::random_dataset(5, {1, 8, 8}, 1, 2);
  Dataset relabeled(single.images(), std::vector<int>(5, 0), {1, 8, 8}, 3, Split::kTrain);
  const ClassPools one_class(relabeled);
  const std::vector<int> pred = argmax_rows(model_->logits(x_));
  c.n_adaptive = 1;
  b.epsilon = 8.0 / 255;
  if (std::find(pred.begin(), pred.end(), 0) != pred.end())
    EXPECT_THROW(adaptive_pgd_varmi(*model_, *vae_, x_, y_, b, c, one_class, 5), InvalidArgument);
}

TEST_F(AdaptiveAttack, SignAgreementGrowsWithAdaptiveSamples) {
  const std::vector<int> pred = argmax_rows(model_->logits(x_));
  Rng rng(12);
  auto partners = [&](Index k) {
    std::vector<Matrix<float>> out(static_cast<std::size_t>(k), Matrix<float>(x_.rows(), x_.cols()));
    for (Index i = 0; i < x_.rows(); ++i) {
      const std::vector<Index> d = pools_->draw(pred[static_cast<std::size_t>(i)], k, rng);
      for (Index j = 0; j < k; ++j)
        out[static_cast<std::size_t>(j)].row(i) = data_->images().row(d[static_cast<std::size_t>(j)]);
    }
    return out;
  };
  const Matrix<float> reference = sign_of(varmi_composition_grad(*model_, *vae_, x_, y_, 0.5, partners(64)));
  std::vector<double> agreement;
  for (Index k : {1, 2, 4, 8}) {
    double sum = 0;
    const int repeats = 30;
    for (int r = 0; r < repeats; ++r) {
      const Matrix<float> s = sign_of(varmi_composition_grad(*model_, *vae_, x_, y_, 0.5, partners(k)));
      sum += (s.array() == reference.array()).cast<double>().mean();
    }
    agreement.push_back(sum / repeats);
  }
  for (std::size_t i = 1; i < agreement.size(); ++i)
    EXPECT_GE(agreement[i], agreement[i - 1]) << "N_A step " << i;
}

TEST(AttackFuzz, BallAndRangeContracts) {
  Rng rng(77);
  ModelConfig mc;
  mc.input_shape = {1, 8, 8};
  mc.width = 0.25;
  const IdentityCodec<float> id({1, 8, 8});
  const Dataset pool = testing::random_dataset(40, {1, 8, 8}, 10, 1);
  const ClassPools pools(pool);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    mc.seed = static_cast<std::uint64_t>(trial);
    const Model<float> model = build_model<float>(mc);
    const Index n = 1 + trial % 4;
    const Matrix<float> x = uniform_matrix<float>(rng, n, 64, 0.0f, 1.0f);
    std::vector<int> y(static_cast<std::size_t>(n));
    for (int& v : y) v = static_cast<int>(rng() % 10);
    AttackBudget b;
    b.epsilon = trial % 10 == 0 ? 0.0 : 0.3 * u(rng);
    b.alpha = 0.01 + 0.2 * u(rng);
    b.steps = 1 + trial % 5;
    const std::vector<Matrix<float>> outs = {
        fgsm(model, x, y, b.epsilon),
        pgd(model, x, y, b, 1, trial % 2 == 0),
        pgd_targeted(model, x, y, b, 1),
        spsa(model, x, y, b, SpsaConfig{8, 0.01}, 1),
        adaptive_pgd_varmi(model, id, x, y, b, AdaptiveConfig{2, 0.5}, pools, 1),
    };
    for (std::size_t a = 0; a < outs.size(); ++a) {
      ASSERT_TRUE(in_budget(outs[a], x, b.epsilon)) << "attack " << a << " trial " << trial;
      if (b.epsilon == 0) ASSERT_TRUE(outs[a] == x) << "attack " << a;
    }
  }
}

}  // namespace
}  // namespace varmix
