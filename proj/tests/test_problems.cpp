// SPDX-License-Identifier: Apache-2.0

#include "sgsim/problems.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "sgsim/dataset.hpp"
#include "sgsim/dense.hpp"
#include "sgsim/rng.hpp"

namespace {

using sgsim::DenseVector;
using sgsim::LeastSquaresProblem;
using sgsim::MlpProblem;
using sgsim::QuadraticProblem;
using sgsim::Rng;

TEST(Quadratic, GradientAtWorkerTargets) {
  const auto p = sgsim::toy_quadratic(100);
  EXPECT_EQ(p.gradient(0, DenseVector(100, 1.0)), DenseVector(100, 0.0));
  EXPECT_EQ(p.gradient(1, DenseVector(100, 5.0)), DenseVector(100, 0.0));
  EXPECT_EQ(p.gradient(2, DenseVector(100, 0.0)), DenseVector(100, -10.0));
  EXPECT_THROW(p.gradient(3, DenseVector(100, 0.0)), std::invalid_argument);
}

TEST(Quadratic, OptimumClosedForm) {
  const auto p = sgsim::toy_quadratic(100);
  const auto [w_star, f_star] = sgsim::quadratic_optimum(p);
  EXPECT_NEAR(f_star, 6100.0 / 9.0, 1e-12 * 6100.0 / 9.0);
  for (double w : w_star) ASSERT_NEAR(w, 16.0 / 3.0, 1e-12 * 16.0 / 3.0);

  const auto tiny = sgsim::toy_quadratic(1);
  EXPECT_NEAR(tiny.optimum().second, 61.0 / 9.0, 1e-12 * 61.0 / 9.0);

  const QuadraticProblem single({DenseVector{2.0, -3.0}}, {1.0});
  const auto [ws, fs] = single.optimum();
  EXPECT_EQ(ws, (DenseVector{2.0, -3.0}));
  EXPECT_DOUBLE_EQ(fs, 0.0);
}

TEST(Quadratic, GlobalLoss) {
  const auto p = sgsim::toy_quadratic(100);
  EXPECT_NEAR(p.loss(DenseVector(100, 16.0 / 3.0)), 6100.0 / 9.0, 1e-9);
  EXPECT_NEAR(p.loss(DenseVector(100, 1.0)), 4850.0 / 3.0, 1e-9);

  const QuadraticProblem single({DenseVector{7.0}}, {1.0});
  EXPECT_DOUBLE_EQ(single.loss(DenseVector{7.0}), 0.0);
}

TEST(Quadratic, GradientIsOneLipschitz) {
  const auto p = sgsim::toy_quadratic(20);
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    DenseVector u(20), v(20);
    for (auto& x : u) x = 10.0 * rng.normal();
    for (auto& x : v) x = 10.0 * rng.normal();
    DenseVector gu(20, 0.0), gv(20, 0.0);
    for (std::size_t q = 0; q < 3; ++q) {
      sgsim::add_scaled(gu, p.weights()[q], p.gradient(q, u));
      sgsim::add_scaled(gv, p.weights()[q], p.gradient(q, v));
    }
    ASSERT_NEAR(sgsim::l2_distance(gu, gv), QuadraticProblem::kLipschitz * sgsim::l2_distance(u, v),
                1e-9);
  }
}

TEST(LeastSquares, FullBatchEqualsFullGradient) {
  const auto p = LeastSquaresProblem::synthetic(5, 2, 4, 4, 0.1, Rng(3));
  Rng rng(4);
  DenseVector w(5);
  for (auto& x : w) x = rng.normal();
  Rng grad_rng(5);
  EXPECT_EQ(p.stochastic_gradient(0, w, grad_rng), p.full_gradient(0, w));
}

TEST(LeastSquares, TwoSampleEnumeration) {
  // d=2, one worker with a 2-sample shard, batch 1: the average of the two
  // possible minibatch gradients is the full gradient.
  LeastSquaresProblem::Shard shard;
  shard.samples = 2;
  shard.design = {1.0, 2.0, -3.0, 0.5};
  shard.targets = {0.25, -1.0};
  const LeastSquaresProblem p(2, {shard}, {1.0}, 1);
  const DenseVector w{0.7, -0.2};

  const auto grad_of_sample = [&](std::size_t i) {
    const double r = shard.design[i * 2] * w[0] + shard.design[i * 2 + 1] * w[1] - shard.targets[i];
    return DenseVector{r * shard.design[i * 2], r * shard.design[i * 2 + 1]};
  };
  const auto g0 = grad_of_sample(0);
  const auto g1 = grad_of_sample(1);
  const DenseVector mean{0.5 * (g0[0] + g1[0]), 0.5 * (g0[1] + g1[1])};
  const auto full = p.full_gradient(0, w);
  EXPECT_NEAR(sgsim::l2_distance(mean, full), 0.0, 1e-12);
}

TEST(LeastSquares, ExhaustiveUnbiasedness) {
  const std::size_t d = 4;
  const auto p = LeastSquaresProblem::synthetic(d, 1, 6, 2, 0.2, Rng(8));
  Rng rng(9);
  DenseVector w(d);
  for (auto& x : w) x = rng.normal();

  const auto& shard = p.shard(0);
  const auto sample_grad = [&](std::size_t i) {
    DenseVector g(d, 0.0);
    double r = -shard.targets[i];
    for (std::size_t j = 0; j < d; ++j) r += shard.design[i * d + j] * w[j];
    for (std::size_t j = 0; j < d; ++j) g[j] = r * shard.design[i * d + j];
    return g;
  };
  DenseVector mean(d, 0.0);
  int count = 0;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = i + 1; j < 6; ++j) {
      const auto gi = sample_grad(i);
      const auto gj = sample_grad(j);
      for (std::size_t c = 0; c < d; ++c) mean[c] += 0.5 * (gi[c] + gj[c]);
      ++count;
    }
  for (auto& v : mean) v /= count;
  EXPECT_NEAR(sgsim::l2_distance(mean, p.full_gradient(0, w)), 0.0, 1e-12);
}

TEST(LeastSquares, SameRngStateSameGradient) {
  const auto p = LeastSquaresProblem::synthetic(6, 3, 5, 2, 0.1, Rng(12));
  DenseVector w(6, 0.3);
  Rng r1(77);
  Rng r2(77);
  EXPECT_EQ(p.stochastic_gradient(1, w, r1), p.stochastic_gradient(1, w, r2));
}

MlpProblem make_small_mlp(std::size_t n = 24, std::size_t features = 6, std::size_t classes = 3,
                          std::vector<std::size_t> layers = {6, 5, 3}, std::size_t batch = 4) {
  auto ds = sgsim::make_blob_dataset(n, features, classes, Rng(20));
  auto shards = sgsim::partition_indices(n, 2, Rng(21));
  return MlpProblem(std::move(layers), std::move(ds), std::move(shards),
                    sgsim::uniform_weights(2), batch);
}

TEST(Mlp, ParameterCountMatchesLayerSizes) {
  const auto p = make_small_mlp();
  EXPECT_EQ(p.dim(), 6u * 5 + 5 + 5 * 3 + 3);

  auto ds = sgsim::make_blob_dataset(10, 784, 10, Rng(22));
  auto shards = sgsim::partition_indices(10, 1, Rng(23));
  const MlpProblem wide({784, 64, 10}, std::move(ds), std::move(shards), {1.0}, 2);
  EXPECT_EQ(wide.dim(), 50890u);
}

TEST(Mlp, UniformLogitsGiveLogClasses) {
  // zero parameters -> all logits zero -> cross entropy is ln(#outputs)
  auto ds = sgsim::make_blob_dataset(12, 4, 10, Rng(30));
  auto shards = sgsim::partition_indices(12, 1, Rng(31));
  const MlpProblem p({4, 10}, std::move(ds), std::move(shards), {1.0}, 3);
  const DenseVector zero(p.dim(), 0.0);
  const auto [loss, grad] = p.loss_grad(zero, {0, 1, 2});
  EXPECT_NEAR(loss, std::log(10.0), 1e-12);
  EXPECT_EQ(grad.size(), p.dim());
}

TEST(Mlp, DuplicatedBatchLeavesLossAndGradUnchanged) {
  const auto p = make_small_mlp();
  const DenseVector w = p.init_params(Rng(40));
  const std::vector<std::size_t> batch{0, 3, 5};
  const std::vector<std::size_t> doubled{0, 3, 5, 0, 3, 5};
  const auto [l1, g1] = p.loss_grad(w, batch);
  const auto [l2, g2] = p.loss_grad(w, doubled);
  EXPECT_NEAR(l1, l2, 1e-12 * std::max(1.0, std::fabs(l1)));
  EXPECT_NEAR(sgsim::l2_distance(g1, g2), 0.0, 1e-12);
}

TEST(Mlp, GradientMatchesCentralDifferences) {
  const auto p = make_small_mlp();
  const DenseVector w = p.init_params(Rng(41));
  const std::vector<std::size_t> batch{0, 1, 2, 3, 4, 5};
  const auto [loss, grad] = p.loss_grad(w, batch);
  (void)loss;

  Rng pick(42);
  const double h = 1e-5;
  for (int probe = 0; probe < 50; ++probe) {
    const auto i = static_cast<std::size_t>(pick.below(w.size()));
    DenseVector wp = w, wm = w;
    wp[i] += h;
    wm[i] -= h;
    const double fd = (p.loss_grad(wp, batch).first - p.loss_grad(wm, batch).first) / (2 * h);
    ASSERT_NEAR(fd, grad[i], 1e-5) << "coordinate " << i;
  }
}

TEST(Mlp, ShapeMismatchRejected) {
  const auto p = make_small_mlp();
  EXPECT_THROW(p.loss_grad(DenseVector(p.dim() + 1, 0.0), {0}), std::invalid_argument);
  EXPECT_THROW(p.loss_grad(DenseVector(p.dim(), 0.0), {}), std::invalid_argument);
}

TEST(Mlp, InitBoundsAndBiasZero) {
  auto ds = sgsim::make_blob_dataset(8, 3, 2, Rng(50));
  auto shards = sgsim::partition_indices(8, 1, Rng(51));
  const MlpProblem p({3, 4, 2}, std::move(ds), std::move(shards), {1.0}, 2);
  const DenseVector w = p.init_params(Rng(52));
  const double bound0 = 1.0 / std::sqrt(3.0);
  for (std::size_t i = 0; i < 12; ++i) ASSERT_LE(std::fabs(w[i]), bound0);
  for (std::size_t i = 12; i < 16; ++i) ASSERT_EQ(w[i], 0.0);  // first-layer biases
  const double bound1 = 1.0 / std::sqrt(4.0);
  for (std::size_t i = 16; i < 24; ++i) ASSERT_LE(std::fabs(w[i]), bound1);
  for (std::size_t i = 24; i < 26; ++i) ASSERT_EQ(w[i], 0.0);
}

}  // namespace
