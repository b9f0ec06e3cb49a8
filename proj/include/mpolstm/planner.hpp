// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "mpolstm/mpo.hpp"

namespace mpolstm {

inline constexpr std::size_t kLstmGates = 4;

/// One MPO feeding all four LSTM gates at once: the first core's output
/// extent is multiplied by `gate_multiplier`, so the operator maps N_x to
/// 4 * prod(output_factors) with rows ordered gate-major (i, f, o, c blocks).
struct GateFusedPlan {
  std::vector<std::size_t> input_factors;
  std::vector<std::size_t> output_factors;  // per-gate factors, product N_h
  std::vector<std::size_t> bond_dims;       // bonds of the fused operator
  std::size_t gate_multiplier = kLstmGates;

  /// The plan the fused operator actually uses (J_1 scaled). Validated.
  MpoPlan fused() const;
  std::size_t effective_output_dim() const;

  static GateFusedPlan uniform(std::vector<std::size_t> input_factors,
                               std::vector<std::size_t> output_factors, std::size_t d);
  /// Largest bond any cut of the fused plan can take.
  static std::size_t max_uniform_bond(const std::vector<std::size_t>& input_factors,
                                      const std::vector<std::size_t>& output_factors);
};

std::size_t gate_fused_count(const GateFusedPlan& plan);

struct CompressionReport {
  double rho_w = 0.0;      // dense W count / MPO W count
  double rho_u = 0.0;      // dense U count / MPO U count
  double rho_total = 0.0;  // params_dense / (params_w + params_u)
  std::size_t params_w = 0;
  std::size_t params_u = 0;
  std::size_t params_dense = 0;
};

/// Ratios for an LSTM whose input (n_x -> 4 n_h) and recurrent
/// (n_h -> 4 n_h) matrices are both gate-fused MPOs. Larger means smaller
/// model. Throws ExtentError if the plans do not match the dimensions.
CompressionReport compression_ratio(const GateFusedPlan& w_plan, const GateFusedPlan& u_plan,
                                    std::size_t n_x, std::size_t n_h);

/// Dense recurrent weight count, 4 n_h (n_x + n_h). Biases excluded.
std::size_t dense_lstm_count(std::size_t n_x, std::size_t n_h);

struct BondChoice {
  std::size_t d_w = 0;
  std::size_t d_u = 0;
  CompressionReport report;
};

struct BondSearchOptions {
  /// Achieved ratio may fall short of the target by this fraction.
  double slack = 0.02;
  /// Largest allowed |d_w - d_u|.
  std::size_t max_spread = 1;
};

/// Uniform bond pair for the input (x_factors -> h_factors) and recurrent
/// (h_factors -> h_factors) MPOs that keeps the most parameters while
/// rho_total >= target * (1 - slack). Ties prefer d_w >= d_u, then larger
/// d_w. Throws PlanningError when even d = 1 cannot reach the target, or for
/// targets below 1.
BondChoice bonds_for_target(double target_rho, const std::vector<std::size_t>& x_factors,
                            const std::vector<std::size_t>& h_factors,
                            const BondSearchOptions& options = {});

struct CurvePoint {
  std::size_t d = 0;
  std::size_t params_w = 0;
  std::size_t params_u = 0;
  std::size_t total() const { return params_w + params_u; }
};

/// Combined W + U parameter count with d_w = d_u = d for each d in
/// [d_min, d_max].
std::vector<CurvePoint> parameter_curve(const std::vector<std::size_t>& x_factors,
                                        const std::vector<std::size_t>& h_factors,
                                        std::size_t d_min, std::size_t d_max);

}  // namespace mpolstm
