// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "mpolstm/cells.hpp"
#include "mpolstm/error.hpp"
#include "test_support.hpp"

using namespace mpolstm;
using namespace testing_support;

namespace {

std::vector<std::vector<double>> random_sequence(std::size_t steps, std::size_t dim, std::mt19937_64& rng) {
  std::vector<std::vector<double>> xs;
  for (std::size_t t = 0; t < steps; ++t) xs.push_back(random_vector(dim, rng));
  return xs;
}

double objective(const SequenceTrace& t, const SequenceUpstream& up) {
  double s = 0.0;
  for (std::size_t k = 0; k < t.states.size(); ++k) s += dot(up.dh[k], t.states[k].h);
  if (!up.dc_final.empty()) s += dot(up.dc_final, t.states.back().c);
  return s;
}

SequenceUpstream random_upstream(std::size_t steps, std::size_t n_h, std::mt19937_64& rng) {
  SequenceUpstream up;
  for (std::size_t t = 0; t < steps; ++t) up.dh.push_back(random_vector(n_h, rng));
  up.dc_final = random_vector(n_h, rng);
  return up;
}

constexpr double kFdTol = 1e-6;

}  // namespace

TEST(LstmCell, ZeroWeightsGiveZeroState) {
  const LstmParams p = LstmParams::zeros(3, 4);
  const StepOutput out = lstm_cell_forward(p, std::vector<double>{1.0, -2.0, 0.5}, CellState::zeros(4));
  for (double v : out.state.h) EXPECT_EQ(v, 0.0);
  for (double v : out.state.c) EXPECT_EQ(v, 0.0);
  for (double v : out.cache.i) EXPECT_EQ(v, 0.5);
}

TEST(LstmCell, SaturatedForgetGateCarriesMemory) {
  LstmParams p = LstmParams::zeros(2, 3);
  for (std::size_t u = 0; u < 3; ++u) p.b[3 + u] = 30.0;  // forget block
  const CellState s{std::vector<double>(3, 0.0), {0.7, -1.3, 2.0}};
  const StepOutput out = lstm_cell_forward(p, std::vector<double>{0.3, 0.1}, s);
  // sigma(30) = 1 - 9.4e-14, so c_t = c_{t-1} to well within 1e-9.
  for (std::size_t u = 0; u < 3; ++u) EXPECT_NEAR(out.state.c[u], s.c[u], 1e-9);
}

TEST(LstmCell, MatchesScalarReimplementation) {
  std::mt19937_64 rng(1);
  LstmParams p = LstmParams::glorot(4, 3, rng);
  p.b = random_vector(12, rng, 0.5);
  const auto x = random_vector(4, rng);
  const CellState s{random_vector(3, rng), random_vector(3, rng)};
  const StepOutput out = lstm_cell_forward(p, x, s);
  const ScalarStep ref = scalar_lstm_step(p.w_x, p.w_h, p.b, x, s.h, s.c);
  for (std::size_t u = 0; u < 3; ++u) {
    EXPECT_NEAR(out.state.h[u], ref.h[u], 1e-14);
    EXPECT_NEAR(out.state.c[u], ref.c[u], 1e-14);
  }
}

TEST(LstmCell, RejectsBadInputs) {
  const LstmParams p = LstmParams::zeros(2, 2);
  EXPECT_THROW(lstm_cell_forward(p, std::vector<double>{1.0}, CellState::zeros(2)), ExtentError);
  EXPECT_THROW(lstm_cell_forward(p, std::vector<double>{1.0, std::nan("")}, CellState::zeros(2)), NumericError);
}

TEST(LstmCell, ActivationsStayInRange) {
  std::mt19937_64 rng(2);
  LstmParams p = LstmParams::glorot(5, 6, rng);
  for (double& v : p.w_x.data()) v *= 4.0;
  const auto xs = random_sequence(30, 5, rng);
  const SequenceTrace t = sequence_forward(p, xs, CellState::zeros(6));
  for (const StepCache& c : t.caches) {
    for (std::size_t u = 0; u < 6; ++u) {
      for (double g : {c.i[u], c.f[u], c.o[u]}) {
        EXPECT_GT(g, 0.0);
        EXPECT_LT(g, 1.0);
      }
      EXPECT_LT(std::abs(c.g[u]), 1.0);
    }
  }
  for (const CellState& s : t.states)
    for (double h : s.h) EXPECT_LT(std::abs(h), 1.0);
}

TEST(Sequence, EmptyAndUnrolled) {
  std::mt19937_64 rng(3);
  const LstmParams p = LstmParams::glorot(3, 4, rng);
  const CellState s0{random_vector(4, rng), random_vector(4, rng)};
  EXPECT_TRUE(sequence_forward(p, std::vector<std::vector<double>>{}, s0).states.empty());
  const auto xs = random_sequence(5, 3, rng);
  const SequenceTrace t = sequence_forward(p, xs, s0);
  CellState s = s0;
  for (std::size_t k = 0; k < 5; ++k) {
    const ScalarStep r = scalar_lstm_step(p.w_x, p.w_h, p.b, xs[k], s.h, s.c);
    s = {r.h, r.c};
    EXPECT_LT(distance(t.states[k].h, s.h), 1e-13);
  }
}

TEST(MpoLstmCell, ExactDecompositionMatchesDense) {
  std::mt19937_64 rng(4);
  const std::vector<std::size_t> xf{2, 4}, hf{4, 2};
  const LstmParams dense = LstmParams::glorot(8, 8, rng);
  const MpoLstmParams mpo =
      MpoLstmParams::from_dense(dense, GateFusedPlan::uniform(xf, hf, 1000), GateFusedPlan::uniform(hf, hf, 1000));
  const auto xs = random_sequence(20, 8, rng);
  const SequenceTrace a = sequence_forward(dense, xs, CellState::zeros(8));
  const SequenceTrace b = sequence_forward(mpo, xs, CellState::zeros(8));
  for (std::size_t t = 0; t < 20; ++t) EXPECT_LT(distance(a.states[t].h, b.states[t].h), 1e-8);
}

TEST(MpoLstmCell, TruncatedMatchesReconstructedDense) {
  std::mt19937_64 rng(5);
  const std::vector<std::size_t> xf{2, 2, 2, 2}, hf{2, 2, 2, 2};
  const LstmParams dense = LstmParams::glorot(16, 16, rng);
  const MpoLstmParams mpo =
      MpoLstmParams::from_dense(dense, GateFusedPlan::uniform(xf, hf, 7), GateFusedPlan::uniform(hf, hf, 7));
  // The oracle cell is assembled from brute-force reconstructions.
  LstmParams oracle{brute_force_dense(mpo.w), brute_force_dense(mpo.u), mpo.b};
  const auto xs = random_sequence(20, 16, rng);
  const SequenceTrace a = sequence_forward(oracle, xs, CellState::zeros(16));
  const SequenceTrace b = sequence_forward(mpo, xs, CellState::zeros(16));
  for (std::size_t t = 0; t < 20; ++t) {
    EXPECT_LT(distance(a.states[t].h, b.states[t].h), 1e-10);
    EXPECT_LT(distance(a.states[t].c, b.states[t].c), 1e-10);
  }
}

TEST(MpoLstmCell, ZeroEverythingGivesZero) {
  std::mt19937_64 rng(6);
  MpoLstmParams p = MpoLstmParams::random(GateFusedPlan::uniform({2, 2}, {2, 2}, 2),
                                          GateFusedPlan::uniform({2, 2}, {2, 2}, 2), rng);
  std::fill(p.b.begin(), p.b.end(), 0.0);
  const StepOutput out = mpo_lstm_cell_forward(p, std::vector<double>(4, 0.0), CellState::zeros(4));
  for (double v : out.state.h) EXPECT_EQ(v, 0.0);
}

TEST(MpoLstmParams, RandomInitHasGlorotScale) {
  std::mt19937_64 rng(7);
  const std::vector<std::size_t> xf{2, 2, 2, 2}, hf{4, 2, 2, 4};
  double s2 = 0.0;
  std::size_t n = 0;
  for (int k = 0; k < 10; ++k) {
    const MpoLstmParams p = MpoLstmParams::random(GateFusedPlan::uniform(xf, hf, 8), GateFusedPlan::uniform(hf, hf, 8), rng);
    const Matrix w = reconstruct(p.w);
    for (double v : w.data()) s2 += v * v;
    n += w.size();
  }
  const double glorot = 2.0 / (16.0 + 256.0);
  EXPECT_NEAR(s2 / static_cast<double>(n), glorot, 0.25 * glorot);
}

TEST(Backward, ZeroUpstreamGivesZeroGrads) {
  std::mt19937_64 rng(8);
  const LstmParams p = LstmParams::glorot(3, 4, rng);
  const auto xs = random_sequence(3, 3, rng);
  SequenceUpstream up;
  up.dh.assign(3, std::vector<double>(4, 0.0));
  const DenseLstmGrads g = backward_through_time(p, sequence_forward(p, xs, CellState::zeros(4)), up);
  EXPECT_EQ(norm(g.w_x.data()), 0.0);
  EXPECT_EQ(norm(g.w_h.data()), 0.0);
  EXPECT_EQ(norm(g.b), 0.0);
}

TEST(Backward, DenseMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  for (std::size_t steps : {1u, 4u, 6u}) {
    LstmParams p = LstmParams::glorot(3, 5, rng);
    p.b = random_vector(20, rng, 0.5);
    auto xs = random_sequence(steps, 3, rng);
    CellState s0{random_vector(5, rng), random_vector(5, rng)};
    const auto up = random_upstream(steps, 5, rng);
    const DenseLstmGrads g = backward_through_time(p, sequence_forward(p, xs, s0), up);
    auto f = [&] { return objective(sequence_forward(p, xs, s0), up); };
    EXPECT_LT(rel_distance(numeric_gradient(p.w_x.data(), f), g.w_x.data()), kFdTol);
    EXPECT_LT(rel_distance(numeric_gradient(p.w_h.data(), f), g.w_h.data()), kFdTol);
    EXPECT_LT(rel_distance(numeric_gradient(p.b, f), g.b), kFdTol);
    EXPECT_LT(rel_distance(numeric_gradient(xs[0], f), g.x[0]), kFdTol);
    EXPECT_LT(rel_distance(numeric_gradient(s0.h, f), g.h0), kFdTol);
    EXPECT_LT(rel_distance(numeric_gradient(s0.c, f), g.c0), kFdTol);
  }
}

TEST(Backward, MpoMatchesFiniteDifferences) {
  std::mt19937_64 rng(10);
  const std::vector<std::size_t> xf{2, 2}, hf{2, 3};
  MpoLstmParams p =
      MpoLstmParams::random(GateFusedPlan::uniform(xf, hf, 2), GateFusedPlan::uniform(hf, hf, 3), rng, 0.5);
  auto xs = random_sequence(4, 4, rng);
  CellState s0{random_vector(6, rng), random_vector(6, rng)};
  const auto up = random_upstream(4, 6, rng);
  const MpoLstmGrads g = backward_through_time(p, sequence_forward(p, xs, s0), up);
  auto f = [&] { return objective(sequence_forward(p, xs, s0), up); };
  for (std::size_t k = 0; k < p.w.num_cores(); ++k)
    EXPECT_LT(rel_distance(numeric_gradient(p.w.core_values(k), f), g.w_cores[k].data()), kFdTol);
  for (std::size_t k = 0; k < p.u.num_cores(); ++k)
    EXPECT_LT(rel_distance(numeric_gradient(p.u.core_values(k), f), g.u_cores[k].data()), kFdTol);
  EXPECT_LT(rel_distance(numeric_gradient(p.b, f), g.b), kFdTol);
  EXPECT_LT(rel_distance(numeric_gradient(xs[2], f), g.x[2]), kFdTol);
  EXPECT_LT(rel_distance(numeric_gradient(s0.c, f), g.c0), kFdTol);
}

TEST(Backward, RejectsMismatchedUpstream) {
  std::mt19937_64 rng(11);
  const LstmParams p = LstmParams::glorot(3, 4, rng);
  const SequenceTrace t = sequence_forward(p, random_sequence(3, 3, rng), CellState::zeros(4));
  SequenceUpstream up;
  up.dh.assign(2, std::vector<double>(4, 0.0));
  EXPECT_THROW(backward_through_time(p, t, up), ExtentError);
}

TEST(Batch, ForwardAndBackwardMatchPerSequence) {
  std::mt19937_64 rng(12);
  const LstmParams p = LstmParams::glorot(3, 4, rng);
  const std::size_t B = 3, T = 4;
  std::vector<Matrix> xs;
  for (std::size_t t = 0; t < T; ++t) xs.push_back(random_matrix(B, 3, rng));
  std::vector<Matrix> dh;
  for (std::size_t t = 0; t < T; ++t) dh.push_back(random_matrix(B, 4, rng));
  dh[1] = Matrix();  // zero cotangent at step 1
  const BatchTrace tr = lstm_batch_forward(p, xs);
  const BatchGrads bg = lstm_batch_backward(p, tr, dh);

  Matrix gw_x(16, 3), gw_h(16, 4);
  std::vector<double> gb(16, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<std::vector<double>> seq;
    for (std::size_t t = 0; t < T; ++t) seq.emplace_back(xs[t].row(b).begin(), xs[t].row(b).end());
    const SequenceTrace st = sequence_forward(p, seq, CellState::zeros(4));
    for (std::size_t t = 0; t < T; ++t) EXPECT_LT(distance(st.states[t].h, tr.h[t].row(b)), 1e-14);
    SequenceUpstream up;
    for (std::size_t t = 0; t < T; ++t)
      up.dh.push_back(t == 1 ? std::vector<double>(4, 0.0) : std::vector<double>(dh[t].row(b).begin(), dh[t].row(b).end()));
    const DenseLstmGrads g = backward_through_time(p, st, up);
    for (std::size_t k = 0; k < gw_x.size(); ++k) gw_x.data()[k] += g.w_x.data()[k];
    for (std::size_t k = 0; k < gw_h.size(); ++k) gw_h.data()[k] += g.w_h.data()[k];
    for (std::size_t k = 0; k < 16; ++k) gb[k] += g.b[k];
  }
  EXPECT_LT(rel_distance(bg.w_x.data(), gw_x.data()), 1e-12);
  EXPECT_LT(rel_distance(bg.w_h.data(), gw_h.data()), 1e-12);
  EXPECT_LT(rel_distance(bg.b, gb), 1e-12);
}

TEST(Prune, ZeroSparsityKeepsAll) {
  std::mt19937_64 rng(13);
  const LstmParams p = LstmParams::glorot(3, 4, rng);
  const PruneMask m = magnitude_prune(p, 0.0);
  EXPECT_EQ(m.kept(), p.w_x.size() + p.w_h.size());
  EXPECT_EQ(apply_mask(p, m).w_x, p.w_x);
}

TEST(Prune, SmallExampleKeepsLargestMagnitudes) {
  // One-unit cell: w_x is 4 x 1 = [3, -1, 2, 0].
  LstmParams p = LstmParams::zeros(1, 1);
  p.w_x = Matrix(4, 1, {3.0, -1.0, 2.0, 0.0});
  const PruneMask m = magnitude_prune(p, 0.5);
  EXPECT_EQ(m.keep_w, (std::vector<std::uint8_t>{1, 0, 1, 0}));
}

TEST(Prune, TiesBreakByLinearIndex) {
  LstmParams p = LstmParams::zeros(1, 1);
  p.w_x = Matrix(4, 1, {1.0, -1.0, 1.0, 1.0});
  const PruneMask m = magnitude_prune(p, 0.5);
  EXPECT_EQ(m.keep_w, (std::vector<std::uint8_t>{0, 0, 1, 1}));
}

TEST(Prune, KeptFractionMatchesRate) {
  std::mt19937_64 rng(14);
  const LstmParams p = LstmParams::glorot(16, 64, rng);
  for (double rate : {2.0, 5.0, 25.0, 100.0}) {
    const PruneMask m = magnitude_prune(p, 1.0 - 1.0 / rate);
    const double n = static_cast<double>(p.w_x.size() + p.w_h.size());
    EXPECT_NEAR(static_cast<double>(m.kept()), n / rate, 2.0);
  }
  EXPECT_THROW(magnitude_prune(p, 1.0), ExtentError);
  EXPECT_THROW(magnitude_prune(p, -0.1), ExtentError);
}

TEST(Prune, ApplyIsIdempotentAndZeroesDropped) {
  std::mt19937_64 rng(15);
  const LstmParams p = LstmParams::glorot(3, 4, rng);
  const PruneMask m = magnitude_prune(p, 0.7);
  const LstmParams once = apply_mask(p, m);
  EXPECT_EQ(apply_mask(once, m).w_h, once.w_h);
  for (std::size_t k = 0; k < m.keep_w.size(); ++k) {
    if (!m.keep_w[k]) EXPECT_EQ(once.w_x.data()[k], 0.0);
    else EXPECT_EQ(once.w_x.data()[k], p.w_x.data()[k]);
  }
  EXPECT_EQ(once.b, p.b);
}

TEST(Prune, SingleSurvivor) {
  std::mt19937_64 rng(16);
  const LstmParams p = LstmParams::glorot(2, 2, rng);
  PruneMask m{std::vector<std::uint8_t>(p.w_x.size(), 0), std::vector<std::uint8_t>(p.w_h.size(), 0), 0.0};
  m.keep_h[3] = 1;
  const LstmParams q = apply_mask(p, m);
  EXPECT_EQ(norm(q.w_x.data()), 0.0);
  EXPECT_EQ(std::abs(q.w_h.data()[3]), norm(q.w_h.data()));
}
