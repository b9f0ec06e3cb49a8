// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "mpolstm/mpo.hpp"
#include "mpolstm/planner.hpp"
#include "mpolstm/tensor.hpp"

namespace mpolstm {

// Gate blocks are stacked in the order input, forget, output, candidate.
enum class Gate : std::size_t { kInput = 0, kForget = 1, kOutput = 2, kCandidate = 3 };

/// Dense LSTM weights. Rows of w_x (4H x X) and w_h (4H x H) and entries of
/// b (4H) are gate-stacked.
struct LstmParams {
  Matrix w_x;
  Matrix w_h;
  std::vector<double> b;

  std::size_t input_dim() const { return w_x.cols(); }
  std::size_t hidden_dim() const { return w_h.cols(); }
  void validate() const;

  static LstmParams zeros(std::size_t n_x, std::size_t n_h);
  /// Entries N(0, 2 / (fan_in + 4H)), biases zero apart from `forget_bias`
  /// on the forget block.
  static LstmParams glorot(std::size_t n_x, std::size_t n_h, std::mt19937_64& rng, double forget_bias = 1.0);
};

/// LSTM whose two weight matrices are gate-fused MPOs; biases stay dense.
struct MpoLstmParams {
  MpoOperator w;  // x -> gates
  MpoOperator u;  // h -> gates
  std::vector<double> b;

  std::size_t input_dim() const { return w.plan().input_dim(); }
  std::size_t hidden_dim() const { return u.plan().input_dim(); }
  std::size_t parameter_count() const { return w.parameter_count() + u.parameter_count(); }
  void validate() const;

  /// Cores drawn so reconstructed entries have the Glorot variance of the
  /// matching dense matrix.
  static MpoLstmParams random(const GateFusedPlan& w_plan, const GateFusedPlan& u_plan, std::mt19937_64& rng,
                              double forget_bias = 1.0);
  /// Exact or truncated TT-SVD of a dense cell's matrices.
  static MpoLstmParams from_dense(const LstmParams& dense, const GateFusedPlan& w_plan,
                                  const GateFusedPlan& u_plan);
  /// Dense cell with the reconstructed matrices.
  LstmParams to_dense() const;
};

struct CellState {
  std::vector<double> h;
  std::vector<double> c;

  static CellState zeros(std::size_t n_h) { return {std::vector<double>(n_h, 0.0), std::vector<double>(n_h, 0.0)}; }
};

/// Everything a backward step needs.
struct StepCache {
  std::vector<double> x;
  std::vector<double> h_prev;
  std::vector<double> c_prev;
  std::vector<double> i, f, o, g;  // post-activation gates
  std::vector<double> c;
  std::vector<double> tanh_c;
};

struct StepOutput {
  CellState state;
  StepCache cache;
};

StepOutput lstm_cell_forward(const LstmParams& p, std::span<const double> x, const CellState& s);
StepOutput mpo_lstm_cell_forward(const MpoLstmParams& p, std::span<const double> x, const CellState& s);

struct SequenceTrace {
  std::vector<CellState> states;  // one per step, after the step
  std::vector<StepCache> caches;
};

SequenceTrace sequence_forward(const LstmParams& p, std::span<const std::vector<double>> xs, const CellState& s0);
SequenceTrace sequence_forward(const MpoLstmParams& p, std::span<const std::vector<double>> xs,
                               const CellState& s0);

/// Cotangents for L = sum_t <dh[t], h_t> (+ <dc_final, c_T>).
struct SequenceUpstream {
  std::vector<std::vector<double>> dh;  // one per step
  std::vector<double> dc_final;         // optional; empty means zero
};

struct DenseLstmGrads {
  Matrix w_x;
  Matrix w_h;
  std::vector<double> b;
  std::vector<std::vector<double>> x;  // per step
  std::vector<double> h0;
  std::vector<double> c0;
};

struct MpoLstmGrads {
  std::vector<DenseTensor> w_cores;
  std::vector<DenseTensor> u_cores;
  std::vector<double> b;
  std::vector<std::vector<double>> x;
  std::vector<double> h0;
  std::vector<double> c0;
};

/// Backpropagation through time. Throws ExtentError if the trace and the
/// upstream cotangents disagree in length or extents.
DenseLstmGrads backward_through_time(const LstmParams& p, const SequenceTrace& trace,
                                     const SequenceUpstream& upstream);
/// Same recurrence; weight gradients flow into the cores through grad_cores.
MpoLstmGrads backward_through_time(const MpoLstmParams& p, const SequenceTrace& trace,
                                   const SequenceUpstream& upstream);

// ---------------------------------------------------------------------------
// Batched dense kernels used by training. Rows are sequences.

struct BatchTrace {
  std::vector<Matrix> x;  // per step, B x X
  std::vector<Matrix> h;  // per step, B x H (after the step)
  std::vector<Matrix> c;
  std::vector<Matrix> i, f, o, g, tanh_c;
  std::size_t batch = 0;
};

/// Zero initial state.
BatchTrace lstm_batch_forward(const LstmParams& p, std::vector<Matrix> xs);

/// Weight and bias gradients, summed over the batch, for upstream dh per step
/// (a step may be an empty matrix meaning zero).
struct BatchGrads {
  Matrix w_x;
  Matrix w_h;
  std::vector<double> b;
};
BatchGrads lstm_batch_backward(const LstmParams& p, const BatchTrace& trace, const std::vector<Matrix>& dh);

// ---------------------------------------------------------------------------
// Magnitude pruning.

struct PruneMask {
  std::vector<std::uint8_t> keep_w;  // 1 = kept, same layout as w_x
  std::vector<std::uint8_t> keep_h;  // same layout as w_h
  double sparsity = 0.0;

  std::size_t kept() const;
};

/// Drops the floor(sparsity * N) smallest-|w| entries of each matrix
/// independently; ties go to the lower linear index first. Throws
/// ExtentError unless 0 <= sparsity < 1.
PruneMask magnitude_prune(const LstmParams& p, double sparsity);

/// Zeroes the dropped weights. Biases are untouched.
LstmParams apply_mask(const LstmParams& p, const PruneMask& m);
void apply_mask_in_place(LstmParams& p, const PruneMask& m);

}  // namespace mpolstm
