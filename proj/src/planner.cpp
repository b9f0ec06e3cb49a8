// SPDX-License-Identifier: Apache-2.0
#include "mpolstm/planner.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <tuple>

#include "mpolstm/error.hpp"

namespace mpolstm {

namespace {

std::vector<std::size_t> scale_first(std::vector<std::size_t> factors, std::size_t m) {
  if (factors.empty()) throw ExtentError("empty factor list");
  factors.front() *= m;
  return factors;
}

std::size_t product_of(const std::vector<std::size_t>& v) {
  std::size_t p = 1;
  for (auto f : v) p *= f;
  return p;
}

}  // namespace

MpoPlan GateFusedPlan::fused() const {
  MpoPlan p{input_factors, scale_first(output_factors, gate_multiplier), bond_dims};
  p.validate();
  return p;
}

std::size_t GateFusedPlan::effective_output_dim() const { return gate_multiplier * product_of(output_factors); }

GateFusedPlan GateFusedPlan::uniform(std::vector<std::size_t> input_factors,
                                     std::vector<std::size_t> output_factors, std::size_t d) {
  const MpoPlan p = MpoPlan::uniform(input_factors, scale_first(output_factors, kLstmGates), d);
  return GateFusedPlan{std::move(input_factors), std::move(output_factors), p.bond_dims, kLstmGates};
}

std::size_t GateFusedPlan::max_uniform_bond(const std::vector<std::size_t>& input_factors,
                                            const std::vector<std::size_t>& output_factors) {
  const MpoPlan p = MpoPlan::full(input_factors, scale_first(output_factors, kLstmGates));
  return *std::max_element(p.bond_dims.begin(), p.bond_dims.end());
}

std::size_t gate_fused_count(const GateFusedPlan& plan) { return parameter_count(plan.fused()); }

std::size_t dense_lstm_count(std::size_t n_x, std::size_t n_h) { return kLstmGates * n_h * (n_x + n_h); }

CompressionReport compression_ratio(const GateFusedPlan& w_plan, const GateFusedPlan& u_plan,
                                    std::size_t n_x, std::size_t n_h) {
  const MpoPlan w = w_plan.fused();
  const MpoPlan u = u_plan.fused();
  if (w.input_dim() != n_x || w.output_dim() != kLstmGates * n_h) {
    throw ExtentError("input-to-hidden plan does not map n_x -> 4 n_h");
  }
  if (u.input_dim() != n_h || u.output_dim() != kLstmGates * n_h) {
    throw ExtentError("hidden-to-hidden plan does not map n_h -> 4 n_h");
  }
  CompressionReport r;
  r.params_w = parameter_count(w);
  r.params_u = parameter_count(u);
  r.params_dense = dense_lstm_count(n_x, n_h);
  r.rho_w = static_cast<double>(kLstmGates * n_x * n_h) / static_cast<double>(r.params_w);
  r.rho_u = static_cast<double>(kLstmGates * n_h * n_h) / static_cast<double>(r.params_u);
  r.rho_total = static_cast<double>(r.params_dense) / static_cast<double>(r.params_w + r.params_u);
  return r;
}

BondChoice bonds_for_target(double target_rho, const std::vector<std::size_t>& x_factors,
                            const std::vector<std::size_t>& h_factors, const BondSearchOptions& options) {
  if (!(target_rho >= 1.0) || !std::isfinite(target_rho)) {
    throw PlanningError("compression target must be a finite value >= 1");
  }
  const std::size_t n_x = product_of(x_factors), n_h = product_of(h_factors);
  const std::size_t max_w = GateFusedPlan::max_uniform_bond(x_factors, h_factors);
  const std::size_t max_u = GateFusedPlan::max_uniform_bond(h_factors, h_factors);

  std::vector<std::size_t> count_w(max_w + 1), count_u(max_u + 1);
  for (std::size_t d = 1; d <= max_w; ++d) count_w[d] = gate_fused_count(GateFusedPlan::uniform(x_factors, h_factors, d));
  for (std::size_t d = 1; d <= max_u; ++d) count_u[d] = gate_fused_count(GateFusedPlan::uniform(h_factors, h_factors, d));

  const double dense = static_cast<double>(dense_lstm_count(n_x, n_h));
  const double floor_rho = target_rho * (1.0 - options.slack);

  std::optional<std::tuple<std::size_t, bool, std::size_t, std::size_t>> best;  // total, d_w>=d_u, d_w, d_u
  for (std::size_t dw = 1; dw <= max_w; ++dw) {
    for (std::size_t du = 1; du <= max_u; ++du) {
      const std::size_t spread = dw > du ? dw - du : du - dw;
      if (spread > options.max_spread) continue;
      const std::size_t total = count_w[dw] + count_u[du];
      if (dense / static_cast<double>(total) < floor_rho) continue;
      const auto key = std::make_tuple(total, dw >= du, dw, du);
      if (!best || key > *best) best = key;
    }
  }
  if (!best) {
    std::ostringstream msg;
    msg << "compression target " << target_rho << " is unattainable: the smallest bond pair (1,1) reaches only "
        << dense / static_cast<double>(count_w[1] + count_u[1]);
    throw PlanningError(msg.str());
  }

  BondChoice c;
  c.d_w = std::get<2>(*best);
  c.d_u = std::get<3>(*best);
  c.report = compression_ratio(GateFusedPlan::uniform(x_factors, h_factors, c.d_w),
                               GateFusedPlan::uniform(h_factors, h_factors, c.d_u), n_x, n_h);
  return c;
}

std::vector<CurvePoint> parameter_curve(const std::vector<std::size_t>& x_factors,
                                        const std::vector<std::size_t>& h_factors, std::size_t d_min,
                                        std::size_t d_max) {
  if (d_min == 0 || d_min > d_max) throw ExtentError("invalid bond range");
  std::vector<CurvePoint> out;
  for (std::size_t d = d_min; d <= d_max; ++d) {
    out.push_back({d, gate_fused_count(GateFusedPlan::uniform(x_factors, h_factors, d)),
                   gate_fused_count(GateFusedPlan::uniform(h_factors, h_factors, d))});
  }
  return out;
}

}  // namespace mpolstm
