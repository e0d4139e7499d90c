// Copyright 2026 The lrsched Authors
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

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace lrsched {
namespace {

using testing::fd_gradient;
using testing::random_vector;

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

// ---------------------------------------------------------------------------
// Property checks shared by every objective.

void expect_contract(const Objective& obj, const Batch& batch, std::mt19937_64& rng, double point_scale,
                     int points) {
  const auto d = obj.dim();
  for (int k = 0; k < points; ++k) {
    const Vector w = random_vector(rng, d, point_scale);
    const Vector g = obj.grad(w, batch);
    const Vector fd = fd_gradient(obj, w, batch, 1e-6 * std::max(1.0, w.cwiseAbs().maxCoeff()));
    EXPECT_LE(relative_error(g, fd), 1e-6) << obj.name() << " point " << k;

    const Vector u = random_vector(rng, d);
    const Vector v = random_vector(rng, d);
    const Vector hu = obj.hvp(w, u, batch);
    const Vector hv = obj.hvp(w, v, batch);
    const double uhv = u.dot(hv);
    const double vhu = v.dot(hu);
    EXPECT_LE(std::abs(uhv - vhu), 1e-10 * std::max(1.0, std::abs(uhv))) << obj.name() << " symmetry";

    const Vector lin = obj.hvp(w, 2.0 * u - 3.0 * v, batch);
    EXPECT_LE((lin - (2.0 * hu - 3.0 * hv)).norm(), 1e-10 * std::max(1.0, lin.norm())) << obj.name() << " linearity";
  }
}

TEST(Quadratic, Examples) {
  const auto q = quadratic_objective(vec({1.0}));
  EXPECT_DOUBLE_EQ(q->loss(vec({2.0}), {}), 2.0);
  EXPECT_DOUBLE_EQ(q->grad(vec({3.0}), {})[0], 3.0);
  EXPECT_DOUBLE_EQ(q->hvp(vec({-7.0}), vec({2.0}), {})[0], 2.0);
  EXPECT_THROW(q->loss(vec({1.0, 2.0}), {}), ArgumentError);
  EXPECT_THROW(quadratic_objective(vec({1.0, -1.0})), ArgumentError);
}

TEST(Quadratic, Contract) {
  std::mt19937_64 rng(1);
  const auto q = quadratic_objective(random_vector(rng, 10).cwiseAbs());
  expect_contract(*q, {}, rng, 1.0, 100);
}

TEST(Beale, MinimumAndOrigin) {
  const auto b = beale_objective();
  EXPECT_EQ(b->loss(vec({3.0, 0.5}), {}), 0.0);
  const Vector g = b->grad(vec({3.0, 0.5}), {});
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 0.0);
  // 1.5^2 + 2.25^2 + 2.625^2
  EXPECT_DOUBLE_EQ(b->loss(vec({0.0, 0.0}), {}), 14.203125);
}

TEST(Beale, Contract) {
  std::mt19937_64 rng(2);
  expect_contract(*beale_objective(), {}, rng, 1.0, 100);
}

TEST(Beale, FdHvpMatchesAnalyticHessianColumn) {
  const auto b = beale_objective();
  // Hessian at (3, 0.5) from the residual formula by hand:
  // grad r1 = (-0.5, 3), grad r2 = (-0.75, 3), grad r3 = (-0.875, 2.25),
  // residuals vanish, so H = 2 sum grad r grad r^T; first column:
  // 2 (0.25 + 0.5625 + 0.765625) = 3.15625,
  // 2 (-1.5 - 2.25 - 1.96875)    = -11.4375.
  const Vector col = fd_hvp_oracle(*b, vec({3.0, 0.5}), vec({1.0, 0.0}), {}, 1e-5);
  EXPECT_NEAR(col[0], 3.15625, 1e-5);
  EXPECT_NEAR(col[1], -11.4375, 1e-5);
  const Vector exact = b->hvp(vec({3.0, 0.5}), vec({1.0, 0.0}), {});
  EXPECT_NEAR(exact[0], 3.15625, 1e-12);
  EXPECT_NEAR(exact[1], -11.4375, 1e-12);
}

TEST(Bukin, ValleyValue) {
  const auto b = bukin_smoothed_objective(1e-3);
  const double expected = std::sqrt(std::sqrt(1e-3) + 1e-3);
  EXPECT_NEAR(expected, 0.1806177, 1e-7);
  EXPECT_DOUBLE_EQ(b->loss(vec({0.0, 0.0}), {}), expected);
  EXPECT_DOUBLE_EQ(b->loss(vec({100.0, 1.0}), {}), b->loss(vec({0.0, 0.0}), {}));
  EXPECT_DOUBLE_EQ(b->loss(vec({-40.0, -0.4}), {}), expected);
}

TEST(Bukin, FlatAlongValleyAndLargerOff) {
  const auto b = bukin_smoothed_objective(1e-3);
  const double floor = b->loss(vec({0.0, 0.0}), {});
  for (double x : {-50.0, -3.0, 0.0, 7.5, 120.0}) {
    const Vector w = vec({x, 0.01 * x});
    EXPECT_NEAR(b->grad(w, {}).dot(vec({1.0, 0.01})), 0.0, 1e-15);
    EXPECT_GT(b->loss(vec({x, 0.01 * x + 0.1}), {}), floor);
    EXPECT_GT(b->loss(vec({x, 0.01 * x - 1e-3}), {}), floor);
  }
}

TEST(Bukin, Contract) {
  std::mt19937_64 rng(3);
  expect_contract(*bukin_smoothed_objective(1e-3), {}, rng, 1.0, 100);
  expect_contract(*bukin_smoothed_objective(0.5), {}, rng, 3.0, 20);
}

TEST(Bukin, RejectsNonPositiveEps) {
  EXPECT_THROW(bukin_smoothed_objective(0.0), ArgumentError);
  EXPECT_THROW(bukin_smoothed_objective(-1.0), ArgumentError);
}

TEST(FdHvpOracle, QuadraticAndLinearity) {
  const auto q = quadratic_objective(vec({1.0}));
  EXPECT_NEAR(fd_hvp_oracle(*q, vec({0.3}), vec({1.0}), {}, 1e-4)[0], 1.0, 1e-8);
  const auto b = beale_objective();
  const Vector w = vec({1.0, 1.2});
  const Vector v = vec({0.3, -0.2});
  const Vector one = fd_hvp_oracle(*b, w, v, {}, 1e-5);
  const Vector two = fd_hvp_oracle(*b, w, 2.0 * v, {}, 1e-5);
  EXPECT_LE(relative_error(two, 2.0 * one), 1e-6);
  EXPECT_THROW(fd_hvp_oracle(*b, w, v, {}, 0.0), ArgumentError);
}

TEST(Mlp, ParameterCountAndLayout) {
  MlpSpec spec;
  spec.layer_sizes = {784, 500, 500, 10};
  EXPECT_EQ(spec.parameter_count(), 785u * 500 + 501u * 500 + 501u * 10);
  EXPECT_EQ(mlp_objective(spec)->dim(), spec.parameter_count());
}

TEST(Mlp, ZeroWeightsGiveLogTwo) {
  MlpSpec spec;
  spec.layer_sizes = {2, 2};
  const auto mlp = mlp_objective(spec);
  const auto ds = testing::small_blobs(10);
  EXPECT_NEAR(mlp->loss(Vector::Zero(6), Batch::all_of(ds)), std::log(2.0), 1e-15);
}

TEST(Mlp, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  const auto ds = testing::small_blobs(40);
  const Batch batch = Batch::all_of(ds);
  for (auto act : {Activation::kTanh, Activation::kSoftplus}) {
    const auto mlp = testing::small_mlp(act, 1e-2);
    const Vector w = mlp->initial_weights(RngStream(5, "init"));
    const Vector g = mlp->grad(w, batch);
    Vector picked(20);
    Vector fd(20);
    for (int k = 0; k < 20; ++k) {
      const std::size_t i = RngStream(6, "coord" + std::to_string(k)).index(mlp->dim());
      picked[k] = g[static_cast<Eigen::Index>(i)];
      fd[k] = fd_partial(*mlp, w, i, batch, 1e-6);
    }
    EXPECT_LE(relative_error(picked, fd), 1e-6) << to_string(act);
  }
}

TEST(Mlp, HvpMatchesFiniteDifferenceOracle) {
  std::mt19937_64 rng(7);
  const auto ds = testing::small_blobs(40);
  const Batch batch = Batch::all_of(ds);
  for (auto act : {Activation::kTanh, Activation::kSoftplus}) {
    const auto mlp = testing::small_mlp(act);
    for (int k = 0; k < 5; ++k) {
      const Vector w = random_vector(rng, mlp->dim(), 0.7);
      const Vector v = random_vector(rng, mlp->dim());
      const Vector hv = mlp->hvp(w, v, batch);
      const Vector fd = fd_hvp_oracle(*mlp, w, v, batch, 1e-5);
      EXPECT_LE(relative_error(hv, fd), 1e-5) << to_string(act);
    }
  }
}

TEST(Mlp, DeeperNetworkContract) {
  std::mt19937_64 rng(8);
  MlpSpec spec;
  spec.layer_sizes = {3, 5, 4, 3};
  spec.weight_decay = 1e-3;
  const auto mlp = mlp_objective(spec);
  const auto ds = std::make_shared<const Dataset>(make_blobs(30, 3, 3, 0.4, RngStream(1, "b")));
  expect_contract(*mlp, Batch::all_of(ds), rng, 0.5, 10);
  const Vector w = random_vector(rng, mlp->dim(), 0.5);
  const Vector v = random_vector(rng, mlp->dim());
  EXPECT_LE(relative_error(mlp->hvp(w, v, Batch::all_of(ds)), fd_hvp_oracle(*mlp, w, v, Batch::all_of(ds), 1e-5)), 1e-5);
}

TEST(Mlp, ReluHvpUsesAlmostEverywhereDerivative) {
  std::mt19937_64 rng(9);
  const auto ds = testing::small_blobs(40);
  const auto mlp = testing::small_mlp(Activation::kRelu);
  const Vector w = random_vector(rng, mlp->dim(), 0.7);
  const Vector v = random_vector(rng, mlp->dim());
  // Away from kinks a tiny FD step stays on one linear piece.
  const Vector fd = fd_hvp_oracle(*mlp, w, v, Batch::all_of(ds), 1e-7);
  EXPECT_LE(relative_error(mlp->hvp(w, v, Batch::all_of(ds)), fd), 1e-5);
}

TEST(Mlp, GradHvpAgreesWithSeparateCalls) {
  std::mt19937_64 rng(10);
  const auto ds = testing::small_blobs(40);
  const auto mlp = testing::small_mlp();
  const Vector w = random_vector(rng, mlp->dim(), 0.7);
  const Vector v = random_vector(rng, mlp->dim());
  const GradHvp gh = mlp->grad_hvp(w, v, Batch::all_of(ds));
  EXPECT_TRUE(gh.grad == mlp->grad(w, Batch::all_of(ds)));
  EXPECT_TRUE(gh.hvp == mlp->hvp(w, v, Batch::all_of(ds)));
  const LossGrad lg = mlp->loss_grad(w, Batch::all_of(ds));
  EXPECT_EQ(lg.loss, mlp->loss(w, Batch::all_of(ds)));
}

TEST(Mlp, AccuracyOnSeparableData) {
  MlpSpec spec;
  spec.layer_sizes = {2, 2};
  const auto mlp = mlp_objective(spec);
  auto ds = std::make_shared<Dataset>();
  ds->features.resize(4, 2);
  ds->features << 1, 0, 2, 0, 0, 1, 0, 3;
  ds->labels = {0, 0, 1, 1};
  ds->num_classes = 2;
  Vector w = Vector::Zero(6);
  w << 1, 0, 0, 1, 0, 0;  // logits = identity features
  EXPECT_DOUBLE_EQ(*mlp->accuracy(w, Batch::all_of(ds)), 1.0);
  w << 0, 1, 1, 0, 0, 0;
  EXPECT_DOUBLE_EQ(*mlp->accuracy(w, Batch::all_of(ds)), 0.0);
}

TEST(Mlp, Errors) {
  const auto mlp = testing::small_mlp();
  auto bad = std::make_shared<Dataset>(make_blobs(10, 3, 2, 0.1, RngStream(1, "b")));
  const Vector w = Vector::Zero(static_cast<Eigen::Index>(mlp->dim()));
  EXPECT_THROW(mlp->loss(w, Batch::all_of(bad)), ArgumentError);  // label 2 with two classes
  EXPECT_THROW(mlp->loss(w, Batch{}), ArgumentError);
  const auto wide = std::make_shared<const Dataset>(make_blobs(10, 2, 3, 0.1, RngStream(1, "b")));
  EXPECT_THROW(mlp->loss(w, Batch::all_of(wide)), ArgumentError);

  Vector huge = Vector::Constant(static_cast<Eigen::Index>(mlp->dim()), 1e308);
  EXPECT_THROW(mlp->loss(huge, Batch::all_of(testing::small_blobs())), NumericError);
}

TEST(Mlp, InitializationIsSeededAndBounded) {
  MlpSpec spec;
  spec.layer_sizes = {64, 64, 10};
  const auto mlp = mlp_objective(spec);
  const Vector a = mlp->initial_weights(RngStream(1, "init"));
  const Vector b = mlp->initial_weights(RngStream(1, "init"));
  EXPECT_TRUE(a == b);
  EXPECT_LE(a.cwiseAbs().maxCoeff(), 1.0 / 8.0);
  EXPECT_GT(a.cwiseAbs().maxCoeff(), 0.1);
}

}  // namespace
}  // namespace lrsched
