// SPDX-License-Identifier: Apache-2.0

#include "sgsim/compression.hpp"

#include <cmath>
#include <stdexcept>

#include <gtest/gtest.h>

#include "sgsim/rng.hpp"

namespace {

using sgsim::compress;
using sgsim::CompressorSpec;
using sgsim::DenseVector;

TEST(Compress, EqualMagnitudesHitTheFloor) {
  const auto out = compress(CompressorSpec::top_k(1), {1.0, 1.0, 1.0, 1.0});
  ASSERT_TRUE(out.measured_one_minus_gamma.has_value());
  EXPECT_DOUBLE_EQ(*out.measured_one_minus_gamma, 0.75);
  EXPECT_DOUBLE_EQ(*out.measured_one_minus_gamma, sgsim::gamma_floor(4, 1));
}

TEST(Compress, AlreadySparseIsLossless) {
  const auto out = compress(CompressorSpec::top_k(1), {10.0, 0.0, 0.0, 0.0});
  ASSERT_TRUE(out.measured_one_minus_gamma.has_value());
  EXPECT_DOUBLE_EQ(*out.measured_one_minus_gamma, 0.0);
  EXPECT_EQ(out.residual, DenseVector(4, 0.0));
}

TEST(Compress, ZeroVectorHasNoRatio) {
  const auto out = compress(CompressorSpec::top_k(1), DenseVector(3, 0.0));
  EXPECT_TRUE(out.kept.entries.empty());
  EXPECT_EQ(out.residual, DenseVector(3, 0.0));
  EXPECT_FALSE(out.measured_one_minus_gamma.has_value());
}

TEST(Compress, KeptPlusResidualIsInputBitExactly) {
  sgsim::Rng rng(3);
  DenseVector v(100);
  for (auto& x : v) x = rng.normal();
  const auto out = compress(CompressorSpec::top_k(7), v);
  const auto kept = sgsim::densify(out.kept);
  for (std::size_t i = 0; i < v.size(); ++i) ASSERT_EQ(kept[i] + out.residual[i], v[i]);
  EXPECT_LE(out.kept.entries.size(), 7u);
}

TEST(Compress, RatioStaysInsideTheFloor) {
  sgsim::Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    DenseVector v(50);
    for (auto& x : v) x = rng.normal();
    const auto k = 1 + static_cast<std::size_t>(rng.below(50));
    const auto out = compress(CompressorSpec::top_k(k), v);
    ASSERT_TRUE(out.measured_one_minus_gamma.has_value());
    ASSERT_GE(*out.measured_one_minus_gamma, 0.0);
    ASSERT_LE(*out.measured_one_minus_gamma, sgsim::gamma_floor(50, k) + 1e-12);
  }
}

TEST(Compress, IdentityKeepsEverything) {
  sgsim::Rng rng(11);
  DenseVector v(32);
  for (auto& x : v) x = rng.normal();
  const auto out = compress(CompressorSpec::identity(), v);
  ASSERT_TRUE(out.measured_one_minus_gamma.has_value());
  EXPECT_DOUBLE_EQ(*out.measured_one_minus_gamma, 0.0);
  EXPECT_EQ(out.residual, DenseVector(32, 0.0));
  EXPECT_EQ(sgsim::densify(out.kept), v);
}

TEST(GammaFloor, FormulaAndEdges) {
  EXPECT_DOUBLE_EQ(sgsim::gamma_floor(4, 1), 0.75);
  EXPECT_DOUBLE_EQ(sgsim::gamma_floor(123, 123), 0.0);
  EXPECT_NEAR(sgsim::gamma_floor(50890, 51), 0.998998, 1e-6);
  EXPECT_DOUBLE_EQ(sgsim::gamma_floor(50890, 51), 50839.0 / 50890.0);
  EXPECT_THROW(sgsim::gamma_floor(4, 0), std::invalid_argument);
  EXPECT_THROW(sgsim::gamma_floor(4, 5), std::invalid_argument);
}

TEST(KFromSparsity, MatchesHandEvaluation) {
  EXPECT_EQ(sgsim::k_from_sparsity(50890, 0.001), 51u);
  EXPECT_EQ(sgsim::k_from_sparsity(100, 0.001), 1u);  // 100 - floor(99.9)
  EXPECT_EQ(sgsim::k_from_sparsity(7, 1.0), 7u);
  EXPECT_GE(sgsim::k_from_sparsity(3, 1e-9), 1u);
  EXPECT_THROW(sgsim::k_from_sparsity(10, 0.0), std::invalid_argument);
  EXPECT_THROW(sgsim::k_from_sparsity(10, -0.5), std::invalid_argument);
  EXPECT_THROW(sgsim::k_from_sparsity(10, 1.5), std::invalid_argument);
}

}  // namespace
