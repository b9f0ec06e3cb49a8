// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mpolstm/cells.hpp"
#include "mpolstm/planner.hpp"

namespace mpolstm {

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> m;  // first moments, one per parameter tensor
  std::vector<std::vector<double>> v;  // second moments
  std::uint64_t step = 0;

  AdamState() = default;
  AdamState(AdamConfig cfg, std::span<const std::size_t> tensor_sizes);
};

/// One bias-corrected Adam update, in place. Throws ExtentError on shape
/// mismatch and NumericError on non-finite gradients (parameters untouched).
void adam_step(AdamState& state, std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads);

/// Rescales the gradients so their joint L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_global_norm(std::span<const std::span<double>> grads, double max_norm);

// ---------------------------------------------------------------------------
// Synthetic tasks

enum class TaskKind { kClassification, kRegression };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& s);

/// Every sample is a pure function of (seed, index).
struct SyntheticTask {
  TaskKind kind = TaskKind::kClassification;
  std::size_t seq_len = 20;
  std::size_t input_dim = 16;
  std::uint64_t seed = 0;
  std::size_t train_size = 2000;  // indices [0, train_size)
  std::size_t test_size = 500;    // indices [train_size, train_size + test_size)
  double noise_std = 0.5;         // classification: std of the distractor coordinates
  /// Regression: signal-to-noise ratio in dB; +inf means no noise.
  double snr_db = 0.0;
};

using Sequence = std::vector<std::vector<double>>;  // [step][feature]

/// Signed-majority task: coordinate 0 of each step is +-1, the rest are
/// Gaussian distractors; the label is 1 iff the coordinate-0 sum is positive.
struct ClassificationSet {
  std::vector<Sequence> sequences;
  std::vector<int> labels;
};
ClassificationSet gen_classification(const SyntheticTask& task, std::size_t first, std::size_t count);

/// Denoising task: clean per-coordinate sinusoid mixtures plus white noise at
/// the task's SNR. Targets are the clean steps.
struct RegressionSet {
  std::vector<Sequence> noisy;
  std::vector<Sequence> clean;
};
RegressionSet gen_regression(const SyntheticTask& task, std::size_t first, std::size_t count);

// ---------------------------------------------------------------------------
// Training

enum class Method { kDense, kMpo, kPruning };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct TrainConfig {
  std::size_t hidden_dim = 64;
  std::vector<std::size_t> x_factors;  // product = task.input_dim
  std::vector<std::size_t> h_factors;  // product = hidden_dim
  AdamConfig adam{};
  double clip_norm = 5.0;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  BondSearchOptions bond_search{};
};

struct TrialSpec {
  Method method = Method::kDense;
  double rate = 1.0;
};

struct TrialResult {
  double rate = 1.0;
  Method method = Method::kDense;
  double metric = 0.0;  // accuracy for classification, MSE for regression
  std::size_t parameter_count = 0;  // recurrent weights only
  double ratio_actual = 1.0;
  std::uint64_t seed = 0;
  double wall_time = 0.0;  // seconds
  bool failed = false;
  std::string error;
  std::size_t d_w = 0;  // MPO bonds, when applicable
  std::size_t d_u = 0;
  std::vector<double> epoch_loss;  // training loss before epoch 1, then after each epoch
};

/// Readout from the hidden state: a logistic unit on the last h for
/// classification, a per-step linear map for regression.
struct ReadoutParams {
  Matrix w;  // out x H
  std::vector<double> b;
};

/// Trained weights, kept so a pruning trial can start from a dense baseline.
struct TrainedModel {
  Method method = Method::kDense;
  LstmParams dense;     // dense and pruning
  MpoLstmParams mpo;    // mpo
  ReadoutParams readout;
  std::optional<PruneMask> mask;
};

struct TrainOutcome {
  TrialResult result;
  TrainedModel model;
};

/// Runs one trial and evaluates on the held-out split. Dense and MPO cells
/// start from scratch; pruning prunes `warm_start` (or, when absent, a dense
/// model trained first with the same seed) to sparsity 1 - 1/rate and
/// retrains with the mask re-applied after every step. Deterministic given
/// the seed. Data comes from trial_task(task, seed). A non-finite loss marks
/// the result failed instead of throwing.
TrainOutcome train(const TrialSpec& spec, const SyntheticTask& task, const TrainConfig& config, std::uint64_t seed,
                   const TrainedModel* warm_start = nullptr);

/// The data a trial with this seed trains and tests on: the task with its
/// generator seed mixed with the trial seed, so seeds differ in data as well
/// as in initialization.
SyntheticTask trial_task(const SyntheticTask& task, std::uint64_t seed);

/// Held-out metric of a trained model on `task` as given (pass
/// trial_task(task, seed) to reproduce a trial's own test split).
double evaluate(const TrainedModel& model, const SyntheticTask& task);

// ---------------------------------------------------------------------------
// Sweep

struct SweepRow {
  double rate = 1.0;
  std::string method;
  double metric = 0.0;  // NaN for a failed row
  std::size_t params = 0;
  double ratio_actual = 0.0;
  std::uint64_t seed = 0;
  double wall_time = 0.0;
};

struct SweepReport {
  std::vector<SweepRow> rows;
};

/// Sorts rows by (rate, method, seed).
void canonical_order(SweepReport& report);

struct SweepOptions {
  std::size_t jobs = 1;
  bool record_wall_time = false;  // otherwise wall_time is written as 0 so reports are byte-stable
};

/// One trial per (rate, method, seed). Pruning at rate r uses sparsity
/// 1 - 1/r on the dense baseline of the same seed; MPO uses
/// bonds_for_target(r). Failures become rows with NaN metric.
SweepReport sweep(std::span<const double> rates, std::span<const Method> methods, const SyntheticTask& task,
                  const TrainConfig& config, std::span<const std::uint64_t> seeds, const SweepOptions& options = {});

}  // namespace mpolstm
