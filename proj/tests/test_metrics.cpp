// SPDX-License-Identifier: Apache-2.0

#include "sgsim/metrics.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "sgsim/rng.hpp"

namespace {

using sgsim::CommParams;
using sgsim::DenseVector;
using sgsim::Mode;
using sgsim::Schedule;
using sgsim::SparseVector;

TEST(MeasureRhoHat, SingleWorkerIsZero) {
  const std::vector<DenseVector> a{{3.0, -1.0, 0.5}};
  const auto rho_hat = sgsim::measure_rho_hat(a, {1.0}, DenseVector{1.0, 0.0, 0.0}, 2);
  ASSERT_TRUE(rho_hat.has_value());
  EXPECT_DOUBLE_EQ(*rho_hat, 0.0);
}

TEST(MeasureRhoHat, HandComputedTwoWorkerCase) {
  const std::vector<DenseVector> a{{10.0, 0.0}, {0.0, -10.0}};
  const std::vector<double> p{0.5, 0.5};
  // ||mean_update|| = 2
  const DenseVector mean_update{1.2, 1.6};
  const auto rho_hat = sgsim::measure_rho_hat(a, p, mean_update, 1);
  ASSERT_TRUE(rho_hat.has_value());
  EXPECT_DOUBLE_EQ(*rho_hat, 2.5);
}

TEST(MeasureRhoHat, AbsentBelowTolerance) {
  const std::vector<DenseVector> a{{1.0, 2.0}};
  EXPECT_FALSE(sgsim::measure_rho_hat(a, {1.0}, DenseVector{0.0, 1e-13}, 1).has_value());
}

TEST(MeasureRho, SingleWorkerZeroDelta) {
  const std::vector<DenseVector> a{{3.0, -1.0, 0.5}};
  const DenseVector delta(3, 0.0);
  const auto rho = sgsim::measure_rho(delta, a, {1.0}, DenseVector{1.0, 0.0, 0.0}, 2, 2);
  ASSERT_TRUE(rho.has_value());
  EXPECT_DOUBLE_EQ(*rho, 0.0);
}

TEST(MeasureRho, NestedCompressionShrinksTheGap) {
  // same instance as the rho_hat example; the outer top-1 collapses both
  // sides to the same vector
  const std::vector<DenseVector> a{{10.0, 0.0}, {0.0, -10.0}};
  const std::vector<double> p{0.5, 0.5};
  const DenseVector delta(2, 0.0);
  const DenseVector mean_update{1.2, 1.6};
  const auto rho = sgsim::measure_rho(delta, a, p, mean_update, 1, 1);
  ASSERT_TRUE(rho.has_value());
  EXPECT_DOUBLE_EQ(*rho, 0.0);

  const auto rho_hat = sgsim::measure_rho_hat(a, p, mean_update, 1);
  EXPECT_LE(*rho, *rho_hat);
}

TEST(NonzeroFraction, CountsOverDimension) {
  EXPECT_DOUBLE_EQ(sgsim::nonzero_fraction(SparseVector{10, {}}), 0.0);
  EXPECT_DOUBLE_EQ(sgsim::nonzero_fraction(SparseVector{10, {{1, 1.0}, {7, -2.0}}}), 0.2);
}

TEST(CommTime, WorkedParameterSet) {
  CommParams p;
  p.alpha1 = p.alpha2 = 0.0;
  p.beta1 = p.beta2 = 1.0;
  p.workers = 10;
  p.k_uplink = p.k_downlink = 5;
  EXPECT_DOUBLE_EQ(sgsim::comm_time(Mode::unidirectional, p), 110.0);
  EXPECT_DOUBLE_EQ(sgsim::comm_time(Mode::bidirectional, p), 20.0);
  EXPECT_THROW(sgsim::comm_time(Mode::vanilla, p), std::invalid_argument);
}

TEST(CommTime, SingleWorkerModesAgree) {
  CommParams p;
  p.alpha1 = 0.3;
  p.alpha2 = 0.4;
  p.beta1 = 2.0;
  p.beta2 = 5.0;
  p.workers = 1;
  p.k_uplink = p.k_downlink = 17;
  EXPECT_DOUBLE_EQ(sgsim::comm_time(Mode::unidirectional, p),
                   sgsim::comm_time(Mode::bidirectional, p));
}

TEST(CommTime, ZeroLatencyRatio) {
  CommParams p;
  p.beta1 = p.beta2 = 1.0;
  p.workers = 40;
  p.k_uplink = p.k_downlink = 8;
  const double ratio =
      sgsim::comm_time(Mode::unidirectional, p) / sgsim::comm_time(Mode::bidirectional, p);
  EXPECT_DOUBLE_EQ(ratio, (1.0 + 40.0) / 2.0);
  // downlink-dominated costs make the ratio approach N
  p.beta1 = 0.0;
  const double dominated =
      sgsim::comm_time(Mode::unidirectional, p) / sgsim::comm_time(Mode::bidirectional, p);
  EXPECT_DOUBLE_EQ(dominated, 40.0);
}

TEST(BoundD, GeometricClosedForm) {
  // constant alpha: D -> alpha/(1-gamma) * r/(1-r) with r = (1+l)(1-g)
  const double value = sgsim::bound_D(Schedule::constant(0.1), 0.5, 0.5, 300);
  EXPECT_NEAR(value, 0.6, 1e-9);
}

TEST(BoundD, RejectsUnboundedCondition) {
  EXPECT_THROW(sgsim::bound_D(Schedule::constant(0.1), 0.5, 1.0, 10), std::invalid_argument);
  EXPECT_THROW(sgsim::bound_D(Schedule::constant(0.1), 0.2, 0.5, 10), std::invalid_argument);
}

TEST(BoundD, MatchesNaiveSummation) {
  const auto schedule = Schedule::inverse_poly(1.0, 0.75);
  const double gamma = 0.4;
  const double lambda = 0.25;
  const long T = 300;
  const double ratio = (1.0 + lambda) * (1.0 - gamma);

  double naive_best = 0.0;
  for (long t = 1; t <= T; ++t) {
    double sum = 0.0;
    for (long i = 1; i <= t; ++i) {
      const double alpha_prev = sgsim::step_size(schedule, t - i);
      sum += std::pow(ratio, static_cast<double>(i)) * alpha_prev * alpha_prev;
    }
    naive_best = std::max(naive_best, sum / ((1.0 - gamma) * sgsim::step_size(schedule, t)));
  }
  EXPECT_NEAR(sgsim::bound_D(schedule, gamma, lambda, T), naive_best,
              1e-9 * std::max(1.0, naive_best));
}

TEST(BoundD, InversePolyMaximaStabilize) {
  const auto schedule = Schedule::inverse_poly(1.0, 1.0);
  const double a = sgsim::bound_D(schedule, 0.5, 0.5, 50000);
  const double b = sgsim::bound_D(schedule, 0.5, 0.5, 100000);
  EXPECT_NEAR(a, b, 1e-9 * std::max(1.0, b));
}

TEST(BoundRhs, LosslessReducesToFirstMomentTerm) {
  // gamma -> 1 and rho = 0 kill the D-dependent constant
  sgsim::BoundConstants c(2.0, 3.0, 1.0 - 1e-12, 0.5, 10.0, 4.0, 0.0);
  const auto schedule = Schedule::constant(0.1);
  const long T = 99;  // 100 steps, sum alpha = 10
  const double rhs = sgsim::bound_rhs(c, schedule, T);
  const double expected = 2.0 / 10.0 * (10.0 - 4.0) + 2.0 * 3.0 * (0.1 * 0.1 * 100.0 / 10.0);
  EXPECT_NEAR(rhs, expected, 1e-6);
}

TEST(BoundRhs, ZeroInitialGapDropsFirstTerm) {
  sgsim::BoundConstants c(1.0, 1.0, 0.5, 0.5, 5.0, 5.0, 0.1);
  const auto schedule = Schedule::constant(0.1);
  const double rhs = sgsim::bound_rhs(c, schedule, 99);
  sgsim::BoundConstants chigh = c;
  chigh.initial_loss = 6.0;
  EXPECT_LT(rhs, sgsim::bound_rhs(chigh, schedule, 99));
  // first term exactly zero: rhs is only the constant * alpha ratio
  const double constant = 1.0 + 1.0 * sgsim::bound_D(schedule, 0.5, 0.5, 99) *
                                    std::pow(std::sqrt(0.5) + 0.1, 2.0) / 0.5;
  EXPECT_NEAR(rhs, constant * 0.1, 1e-9);
}

TEST(BoundConstants, EnforcesLambdaRange) {
  EXPECT_NO_THROW(sgsim::BoundConstants(1, 1, 0.5, 0.9, 0, 0, 0));
  EXPECT_THROW(sgsim::BoundConstants(1, 1, 0.5, 1.0, 0, 0, 0), std::invalid_argument);
  EXPECT_THROW(sgsim::BoundConstants(1, 1, 0.2, 0.5, 0, 0, 0), std::invalid_argument);
}

TEST(Lemma1Residual, ExactInputsGiveZero) {
  const DenseVector prev{1.0, 2.0};
  const DenseVector update{0.25, -0.5};
  const DenseVector next{0.75, 2.5};
  EXPECT_DOUBLE_EQ(sgsim::lemma1_residual(next, prev, update), 0.0);
  EXPECT_GT(sgsim::lemma1_residual(DenseVector{0.8, 2.5}, prev, update), 0.0);
}

TEST(GapInequality, VanillaAllZeros) {
  EXPECT_DOUBLE_EQ(sgsim::gap_inequality_check(0.0, 0.0, 0.0, 1.0, 0.0), 0.0);
}

TEST(GapInequality, MatchesPartsForm) {
  const double gap = 0.4, gap_prev = 0.3, tilde_step = 0.2, gamma = 0.6, rho = 0.5;
  const double via_rho = sgsim::gap_inequality_check(gap, gap_prev, tilde_step, gamma, rho);
  const double via_parts = sgsim::gap_slack_from_parts(gap, gap_prev, tilde_step,
                                                       std::sqrt(1.0 - gamma), rho * tilde_step);
  EXPECT_NEAR(via_rho, via_parts, 1e-15);
}

TEST(GapInequality, BaseCaseReducesToCompressorBound) {
  // t = 1 from zero memories: gap_prev = 0 and the bound is
  // (sqrt(1-gamma)+rho) * ||update||
  const double slack = sgsim::gap_inequality_check(0.5, 0.0, 1.0, 0.75, 0.1);
  EXPECT_NEAR(slack, 0.5 + 0.1 - 0.5, 1e-15);
}

TEST(ErrorSplit, SingleWorkerHasNoDistributedError) {
  const std::vector<DenseVector> a{{5.0, -2.0, 1.0, 0.0}};
  const auto split = sgsim::error_split(a, {1.0}, nullptr, 2, 2);
  EXPECT_DOUBLE_EQ(split.distributed, 0.0);
  EXPECT_GT(split.inherent, 0.0);

  const DenseVector delta(4, 0.0);
  const auto nested = sgsim::error_split(a, {1.0}, &delta, 2, 2);
  EXPECT_DOUBLE_EQ(nested.distributed, 0.0);
}

TEST(ErrorSplit, UnNestedVariantMeasuresAggregationGap) {
  const std::vector<DenseVector> a{{10.0, 0.0}, {0.0, -10.0}};
  const std::vector<double> p{0.5, 0.5};
  const auto split = sgsim::error_split(a, p, nullptr, 1, 1);
  // Top_1(sum p a) = [5, 0]; sum Top_1(p a) = [5, -5]
  EXPECT_DOUBLE_EQ(split.distributed, 5.0);
  EXPECT_DOUBLE_EQ(split.inherent, 5.0);  // [5,-5] minus [5,0]
}

TEST(StepDiagnostics, MatchesDefinitionalOperations) {
  sgsim::Rng rng(101);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t d = 24;
    const std::size_t n = 1 + rng.below(4);
    const std::size_t k_up = 1 + rng.below(d);
    const std::size_t k_down = 1 + rng.below(d);
    std::vector<DenseVector> a(n, DenseVector(d));
    std::vector<double> p(n, 1.0 / static_cast<double>(n));
    for (auto& v : a)
      for (auto& x : v) x = rng.normal();
    DenseVector delta(d);
    for (auto& x : delta) x = 0.5 * rng.normal();
    DenseVector mean_update(d);
    for (auto& x : mean_update) x = rng.normal();

    // sum of per-worker compressed values, definitional form
    const DenseVector sum_pa = sgsim::weighted_sum(a, p);
    DenseVector compressed(d, 0.0);
    for (std::size_t q = 0; q < n; ++q) {
      DenseVector scaled(d);
      for (std::size_t i = 0; i < d; ++i) scaled[i] = p[q] * a[q][i];
      for (const auto& e : sgsim::top_k_select(scaled, k_up).entries)
        compressed[e.index] += e.value;
    }

    const bool with_delta = trial % 2 == 0;
    const auto fast = sgsim::step_diagnostics(sum_pa, compressed, with_delta ? &delta : nullptr,
                                              mean_update, k_up, k_down);

    const auto rho_hat = sgsim::measure_rho_hat(a, p, mean_update, k_up);
    ASSERT_EQ(fast.rho_hat.has_value(), rho_hat.has_value());
    if (rho_hat) ASSERT_NEAR(*fast.rho_hat, *rho_hat, 1e-13 * std::max(1.0, *rho_hat));

    if (with_delta) {
      const auto rho = sgsim::measure_rho(delta, a, p, mean_update, k_up, k_down);
      ASSERT_TRUE(fast.rho.has_value() == rho.has_value());
      if (rho) ASSERT_NEAR(*fast.rho, *rho, 1e-13 * std::max(1.0, *rho));
      const auto split = sgsim::error_split(a, p, &delta, k_up, k_down);
      ASSERT_NEAR(fast.inherent, split.inherent, 1e-13 * std::max(1.0, split.inherent));
      ASSERT_NEAR(fast.distributed, split.distributed,
                  1e-13 * std::max(1.0, split.distributed));
    } else {
      const auto split = sgsim::error_split(a, p, nullptr, k_up, k_up);
      ASSERT_NEAR(fast.inherent, split.inherent, 1e-13 * std::max(1.0, split.inherent));
      ASSERT_NEAR(fast.distributed, split.distributed,
                  1e-13 * std::max(1.0, split.distributed));
      ASSERT_FALSE(fast.rho.has_value());
    }
  }
}

TEST(EpochMaxima, SkipsAbsentAndTakesMax) {
  std::vector<sgsim::StepRecord> records(4);
  records[0].rho = 1.0;
  records[1].rho = std::nullopt;
  records[2].rho = 3.0;
  records[3].rho = 2.0;
  for (auto& r : records) r.loss = 1.0;
  const auto epochs = sgsim::epoch_maxima(records, 2);
  ASSERT_EQ(epochs.size(), 2u);
  ASSERT_TRUE(epochs[0].max_rho.has_value());
  EXPECT_DOUBLE_EQ(*epochs[0].max_rho, 1.0);
  EXPECT_DOUBLE_EQ(*epochs[1].max_rho, 3.0);
  EXPECT_FALSE(epochs[0].max_rho_hat.has_value());
}

}  // namespace
