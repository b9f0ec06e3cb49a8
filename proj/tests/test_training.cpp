// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "mpolstm/error.hpp"
#include "mpolstm/io.hpp"
#include "mpolstm/training.hpp"
#include "test_support.hpp"

using namespace mpolstm;

namespace {

SyntheticTask small_task(std::size_t train = 400, std::size_t test = 200) {
  SyntheticTask t;
  t.train_size = train;
  t.test_size = test;
  return t;
}

TrainConfig small_config(std::size_t epochs) {
  TrainConfig c{64, {2, 2, 2, 2}, {4, 2, 2, 4}};
  c.epochs = epochs;
  return c;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

}  // namespace

TEST(Adam, ZeroGradientsLeaveParameters) {
  std::vector<double> p{1.0, -2.0}, g{0.0, 0.0};
  const std::vector<std::size_t> sizes{2};
  AdamState s(AdamConfig{}, sizes);
  std::vector<std::span<double>> ps{p};
  std::vector<std::span<const double>> gs{g};
  adam_step(s, ps, gs);
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0}));
  EXPECT_EQ(s.step, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // m_hat = g, v_hat = g^2 after bias correction, so the step is lr * g / (|g| + eps).
  std::vector<double> p{0.5}, g{1.0};
  const std::vector<std::size_t> sizes{1};
  AdamState s(AdamConfig{}, sizes);
  std::vector<std::span<double>> ps{p};
  std::vector<std::span<const double>> gs{g};
  adam_step(s, ps, gs);
  EXPECT_NEAR(p[0], 0.5 - 1e-3 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, TwoStepsByHand) {
  std::vector<double> p{0.0}, g{2.0};
  const std::vector<std::size_t> sizes{1};
  AdamConfig cfg;
  cfg.lr = 0.1;
  AdamState s(cfg, sizes);
  std::vector<std::span<double>> ps{p};
  std::vector<std::span<const double>> gs{g};
  adam_step(s, ps, gs);
  g[0] = -1.0;
  adam_step(s, ps, gs);
  const double m1 = 0.1 * 2.0, v1 = 0.001 * 4.0;
  const double step1 = 0.1 * (m1 / 0.1) / (std::sqrt(v1 / 0.001) + 1e-8);
  const double m2 = 0.9 * m1 + 0.1 * -1.0, v2 = 0.999 * v1 + 0.001 * 1.0;
  const double step2 = 0.1 * (m2 / (1 - 0.81)) / (std::sqrt(v2 / (1 - 0.999 * 0.999)) + 1e-8);
  EXPECT_NEAR(p[0], -step1 - step2, 1e-14);
}

TEST(Adam, DeterministicAndRejectsBadGradients) {
  auto run = [] {
    std::vector<double> p{0.1, 0.2, 0.3};
    const std::vector<std::size_t> sizes{3};
    AdamState s(AdamConfig{}, sizes);
    std::vector<std::span<double>> ps{p};
    for (int k = 0; k < 10; ++k) {
      std::vector<double> g{std::sin(k * 1.0), std::cos(k * 2.0), 0.3};
      std::vector<std::span<const double>> gs{g};
      adam_step(s, ps, gs);
    }
    return p;
  };
  EXPECT_EQ(run(), run());

  std::vector<double> p{1.0}, g{std::nan("")};
  const std::vector<std::size_t> sizes{1};
  AdamState s(AdamConfig{}, sizes);
  std::vector<std::span<double>> ps{p};
  std::vector<std::span<const double>> gs{g};
  EXPECT_THROW(adam_step(s, ps, gs), NumericError);
  EXPECT_EQ(p[0], 1.0);
  std::vector<double> g2{1.0, 2.0};
  std::vector<std::span<const double>> gs2{g2};
  EXPECT_THROW(adam_step(s, ps, gs2), ExtentError);
}

TEST(ClipGlobalNorm, RescalesOnlyAboveThreshold) {
  std::vector<double> a{3.0}, b{4.0};
  std::vector<std::span<double>> gs{a, b};
  EXPECT_DOUBLE_EQ(clip_global_norm(gs, 10.0), 5.0);
  EXPECT_EQ(a[0], 3.0);
  clip_global_norm(gs, 1.0);
  EXPECT_NEAR(std::hypot(a[0], b[0]), 1.0, 1e-15);
}

TEST(Classification, LabelIsSignOfFirstCoordinateSum) {
  SyntheticTask t;
  t.seed = 42;
  const ClassificationSet s = gen_classification(t, 0, 200);
  for (std::size_t n = 0; n < 200; ++n) {
    double sum = 0.0;
    for (const auto& step : s.sequences[n]) {
      EXPECT_TRUE(step[0] == 1.0 || step[0] == -1.0);
      sum += step[0];
    }
    EXPECT_EQ(s.labels[n], sum > 0 ? 1 : 0);
  }
}

TEST(Classification, PureFunctionOfSeedAndIndex) {
  SyntheticTask t;
  t.seed = 7;
  const auto a = gen_classification(t, 10, 5);
  const auto b = gen_classification(t, 12, 1);
  EXPECT_EQ(a.sequences[2], b.sequences[0]);
  EXPECT_EQ(a.labels[2], b.labels[0]);
  t.seed = 8;
  EXPECT_NE(gen_classification(t, 10, 1).sequences[0], a.sequences[0]);
}

TEST(Regression, NoNoiseTargetEqualsInput) {
  SyntheticTask t;
  t.kind = TaskKind::kRegression;
  t.snr_db = std::numeric_limits<double>::infinity();
  const RegressionSet s = gen_regression(t, 0, 5);
  EXPECT_EQ(s.noisy, s.clean);
}

TEST(Regression, ExtremeNoiseLeavesSignalVarianceForConstantPredictor) {
  SyntheticTask t;
  t.kind = TaskKind::kRegression;
  t.snr_db = -40.0;
  const RegressionSet s = gen_regression(t, 0, 2000);
  // Amplitudes are U[0.5, 1], two sinusoids per coordinate: per-coordinate
  // variance is 2 * E[a^2] / 2 = 7/12.
  const double signal_variance = 7.0 / 12.0;
  double clean2 = 0.0, noise2 = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < s.clean.size(); ++k)
    for (std::size_t step = 0; step < t.seq_len; ++step)
      for (std::size_t d = 0; d < t.input_dim; ++d) {
        const double c = s.clean[k][step][d];
        clean2 += c * c;
        noise2 += (s.noisy[k][step][d] - c) * (s.noisy[k][step][d] - c);
        ++n;
      }
  // The zero predictor (best constant for zero-mean targets) has MSE = E[clean^2].
  EXPECT_NEAR(clean2 / static_cast<double>(n), signal_variance, 0.03);
  EXPECT_NEAR(noise2 / clean2, 1e4, 0.05e4);
}

TEST(Train, ZeroEpochsIsChanceLevel) {
  const TrainOutcome o = train(TrialSpec{Method::kDense, 1.0}, small_task(), small_config(0), 3);
  EXPECT_FALSE(o.result.failed);
  EXPECT_GT(o.result.metric, 0.3);
  EXPECT_LT(o.result.metric, 0.7);
  EXPECT_EQ(o.result.epoch_loss.size(), 1u);
}

TEST(Train, SameSeedIsBitwiseIdentical) {
  for (Method m : {Method::kDense, Method::kMpo, Method::kPruning}) {
    const TrainOutcome a = train(TrialSpec{m, 10.0}, small_task(200, 100), small_config(1), 5);
    const TrainOutcome b = train(TrialSpec{m, 10.0}, small_task(200, 100), small_config(1), 5);
    EXPECT_EQ(a.result.metric, b.result.metric);
    EXPECT_EQ(a.result.epoch_loss, b.result.epoch_loss);
    EXPECT_EQ(a.result.parameter_count, b.result.parameter_count);
  }
}

TEST(Train, LossDropsOverFirstEpochAcrossSeeds) {
  std::vector<double> before, after;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const TrainOutcome o = train(TrialSpec{Method::kDense, 1.0}, small_task(), small_config(1), seed);
    before.push_back(o.result.epoch_loss.front());
    after.push_back(o.result.epoch_loss.back());
  }
  EXPECT_LT(median(after), median(before));
}

TEST(Train, ParameterCountsFollowThePlanner) {
  const TrainConfig cfg = small_config(0);
  const TrainOutcome mpo = train(TrialSpec{Method::kMpo, 25.0}, small_task(50, 50), cfg, 1);
  const BondChoice c = bonds_for_target(25.0, cfg.x_factors, cfg.h_factors);
  EXPECT_EQ(mpo.result.parameter_count, c.report.params_w + c.report.params_u);
  EXPECT_EQ(mpo.result.d_w, c.d_w);
  const TrainOutcome pr = train(TrialSpec{Method::kPruning, 4.0}, small_task(50, 50), cfg, 1);
  // w_x is 256 x 16 and w_h is 256 x 64; a quarter of each survives.
  EXPECT_EQ(pr.result.parameter_count, 4096u / 4 + 16384u / 4);
  EXPECT_DOUBLE_EQ(pr.result.ratio_actual, 4.0);
}

TEST(Train, PrunedWeightsStayZero) {
  TrainConfig cfg = small_config(2);
  const TrainOutcome o = train(TrialSpec{Method::kPruning, 10.0}, small_task(200, 50), cfg, 2);
  ASSERT_TRUE(o.model.mask.has_value());
  for (std::size_t k = 0; k < o.model.mask->keep_w.size(); ++k)
    if (!o.model.mask->keep_w[k]) ASSERT_EQ(o.model.dense.w_x.data()[k], 0.0);
  for (std::size_t k = 0; k < o.model.mask->keep_h.size(); ++k)
    if (!o.model.mask->keep_h[k]) ASSERT_EQ(o.model.dense.w_h.data()[k], 0.0);
}

TEST(Train, RegressionReportsMse) {
  SyntheticTask t = small_task(100, 50);
  t.kind = TaskKind::kRegression;
  t.snr_db = 10.0;
  const TrainOutcome o = train(TrialSpec{Method::kMpo, 5.0}, t, small_config(1), 1);
  EXPECT_FALSE(o.result.failed);
  EXPECT_GT(o.result.metric, 0.0);
  EXPECT_TRUE(std::isfinite(o.result.metric));
}

TEST(Train, SplitsAreDisjointIndexRanges) {
  const SyntheticTask t = trial_task(small_task(30, 10), 4);
  const auto train_set = gen_classification(t, 0, t.train_size);
  const auto test_set = gen_classification(t, t.train_size, t.test_size);
  for (const auto& a : test_set.sequences)
    for (const auto& b : train_set.sequences) EXPECT_NE(a, b);
}

TEST(Sweep, RowCountAndCanonicalOrder) {
  const std::vector<double> rates{5.0, 1.0};
  const std::vector<Method> methods{Method::kPruning, Method::kMpo, Method::kDense};
  const std::vector<std::uint64_t> seeds{2, 1};
  const SweepReport r = sweep(rates, methods, small_task(64, 32), small_config(1), seeds);
  ASSERT_EQ(r.rows.size(), rates.size() * methods.size() * seeds.size());
  for (std::size_t k = 1; k < r.rows.size(); ++k) {
    const auto& a = r.rows[k - 1];
    const auto& b = r.rows[k];
    EXPECT_TRUE(std::tie(a.rate, a.method, a.seed) < std::tie(b.rate, b.method, b.seed));
  }
  for (const auto& row : r.rows) EXPECT_EQ(row.wall_time, 0.0);
}

TEST(Sweep, RateOneStaysNearDense) {
  const std::vector<double> rates{1.0};
  const std::vector<Method> methods{Method::kDense, Method::kPruning};
  const std::vector<std::uint64_t> seeds{1};
  const SweepReport r = sweep(rates, methods, small_task(), small_config(3), seeds);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[0].params, r.rows[1].params);
  EXPECT_EQ(r.rows[1].ratio_actual, 1.0);
  // At rate 1 nothing is masked, so pruning is the dense model trained further.
  EXPECT_EQ(r.rows[0].method, "dense");
  EXPECT_GE(r.rows[1].metric, r.rows[0].metric - 0.05);
}

TEST(Sweep, PaperDimensionsGiveExpectedMpoCounts) {
  SyntheticTask t;
  t.input_dim = 256;
  t.seq_len = 2;
  t.train_size = 2;
  t.test_size = 2;
  TrainConfig cfg{256, {8, 2, 2, 8}, {8, 2, 2, 8}};
  cfg.epochs = 0;
  const std::vector<double> rates{5.0, 100.0};
  const std::vector<Method> methods{Method::kMpo};
  const std::vector<std::uint64_t> seeds{1};
  const SweepReport r = sweep(rates, methods, t, cfg, seeds);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[0].params, 106496u);
  EXPECT_EQ(r.rows[1].params, 5264u);
}

TEST(Sweep, UnattainableRateBecomesFailedRow) {
  const std::vector<double> rates{1e6};
  const std::vector<Method> methods{Method::kMpo};
  const std::vector<std::uint64_t> seeds{1};
  const SweepReport r = sweep(rates, methods, small_task(10, 10), small_config(0), seeds);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_TRUE(std::isnan(r.rows[0].metric));
  EXPECT_THROW(sweep(std::vector<double>{0.5}, methods, small_task(10, 10), small_config(0), seeds), ConfigError);
}

TEST(Sweep, SerialRunsAndParallelRunsAgree) {
  const std::vector<double> rates{4.0};
  const std::vector<Method> methods{Method::kDense, Method::kMpo, Method::kPruning};
  const std::vector<std::uint64_t> seeds{1, 2};
  const auto a = sweep(rates, methods, small_task(64, 32), small_config(1), seeds);
  const auto b = sweep(rates, methods, small_task(64, 32), small_config(1), seeds);
  const auto c = sweep(rates, methods, small_task(64, 32), small_config(1), seeds, SweepOptions{3, false});
  EXPECT_EQ(format_report(a, ReportFormat::kCsv), format_report(b, ReportFormat::kCsv));
  EXPECT_EQ(format_report(a, ReportFormat::kCsv), format_report(c, ReportFormat::kCsv));
}
