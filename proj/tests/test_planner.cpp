// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "mpolstm/error.hpp"
#include "mpolstm/planner.hpp"
#include "test_support.hpp"

using namespace mpolstm;
using testing_support::brute_force_count;

namespace {
const std::vector<std::size_t> kF{8, 2, 2, 8};
}

TEST(GateFusedCount, MatchesDirectSum) {
  for (std::size_t d = 1; d <= 64; ++d) {
    const std::size_t want = brute_force_count(kF, kF, d, 4);
    EXPECT_EQ(gate_fused_count(GateFusedPlan::uniform(kF, kF, d)), want) << d;
    EXPECT_EQ(want, 320 * d + 8 * d * d);
  }
  EXPECT_EQ(gate_fused_count(GateFusedPlan::uniform(kF, kF, 64)), 53248u);
  EXPECT_EQ(gate_fused_count(GateFusedPlan::uniform(kF, kF, 7)), 2632u);
}

TEST(GateFusedPlan, FusedPlanScalesFirstOutputFactor) {
  const GateFusedPlan g = GateFusedPlan::uniform({2, 2}, {4, 2}, 3);
  const MpoPlan p = g.fused();
  EXPECT_EQ(p.output_factors, (std::vector<std::size_t>{16, 2}));
  EXPECT_EQ(g.effective_output_dim(), 32u);
  EXPECT_EQ(p.output_dim(), 32u);
}

TEST(DenseCount, FourGatesBothMatrices) {
  EXPECT_EQ(dense_lstm_count(256, 256), 524288u);
  EXPECT_EQ(dense_lstm_count(16, 64), 4u * 64 * 80);
}

TEST(CompressionRatio, DefinitionByHand) {
  const auto r = compression_ratio(GateFusedPlan::uniform(kF, kF, 13), GateFusedPlan::uniform(kF, kF, 12), 256, 256);
  const double cw = 320.0 * 13 + 8.0 * 169, cu = 320.0 * 12 + 8.0 * 144;
  EXPECT_EQ(r.params_w, static_cast<std::size_t>(cw));
  EXPECT_EQ(r.params_u, static_cast<std::size_t>(cu));
  EXPECT_DOUBLE_EQ(r.rho_w, 262144.0 / cw);
  EXPECT_DOUBLE_EQ(r.rho_u, 262144.0 / cu);
  EXPECT_DOUBLE_EQ(r.rho_total, 524288.0 / (cw + cu));
  EXPECT_THROW(compression_ratio(GateFusedPlan::uniform(kF, kF, 1), GateFusedPlan::uniform(kF, kF, 1), 128, 256),
               ExtentError);
}

TEST(BondsForTarget, MeetsTargetWithinSlackAndIsMaximal) {
  for (double target : {3.0, 5.0, 12.0, 40.0, 100.0, 300.0}) {
    const BondChoice c = bonds_for_target(target, kF, kF);
    EXPECT_GE(c.report.rho_total, 0.98 * target);
    EXPECT_LE(c.d_w > c.d_u ? c.d_w - c.d_u : c.d_u - c.d_w, 1u);
    EXPECT_GE(c.d_w, c.d_u);
    // No admissible pair keeps more parameters.
    const std::size_t chosen = c.report.params_w + c.report.params_u;
    for (std::size_t dw = 1; dw <= 64; ++dw)
      for (std::size_t du = (dw > 1 ? dw - 1 : 1); du <= std::min<std::size_t>(64, dw + 1); ++du) {
        const std::size_t total = brute_force_count(kF, kF, dw, 4) + brute_force_count(kF, kF, du, 4);
        if (524288.0 / static_cast<double>(total) >= 0.98 * target) EXPECT_LE(total, chosen);
      }
  }
}

TEST(BondsForTarget, ExactSearchWithoutSpreadLimit) {
  BondSearchOptions wide;
  wide.max_spread = 64;
  const BondChoice c = bonds_for_target(10, kF, kF, wide);
  EXPECT_GE(c.report.rho_total, 9.8);
}

TEST(BondsForTarget, Errors) {
  EXPECT_THROW(bonds_for_target(1e9, kF, kF), PlanningError);
  EXPECT_THROW(bonds_for_target(0.5, kF, kF), PlanningError);
}

TEST(BondsForTarget, KnownEndpoints) {
  const BondChoice c5 = bonds_for_target(5, kF, kF);
  EXPECT_EQ(c5.d_w, 64u);
  EXPECT_EQ(c5.d_u, 64u);
  const BondChoice c100 = bonds_for_target(100, kF, kF);
  EXPECT_EQ(c100.d_w, 7u);
  EXPECT_EQ(c100.d_u, 7u);
}

TEST(ParameterCurve, MonotoneAndBelowDense) {
  const auto curve = parameter_curve(kF, kF, 1, 64);
  ASSERT_EQ(curve.size(), 64u);
  for (std::size_t k = 0; k < curve.size(); ++k) {
    EXPECT_EQ(curve[k].d, k + 1);
    EXPECT_EQ(curve[k].total(), 2 * brute_force_count(kF, kF, k + 1, 4));
    EXPECT_LT(curve[k].total(), 524288u);
    if (k) EXPECT_GT(curve[k].total(), curve[k - 1].total());
  }
}
