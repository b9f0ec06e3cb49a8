// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <string>

#include "mpolstm/cells.hpp"
#include "mpolstm/error.hpp"

namespace mpolstm {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void require_state(const CellState& s, std::size_t n_h) {
  if (s.h.size() != n_h || s.c.size() != n_h) throw ExtentError("cell state does not match hidden size");
  if (!all_finite(s.h) || !all_finite(s.c)) throw NumericError("cell state contains non-finite values");
}

void require_input(std::span<const double> x, std::size_t n_x) {
  if (x.size() != n_x) {
    throw ExtentError("input has length " + std::to_string(x.size()) + ", expected " + std::to_string(n_x));
  }
  if (!all_finite(x)) throw NumericError("input contains non-finite values");
}

// Gate nonlinearities and the cell update from pre-activations z (4H).
StepOutput finish_step(const std::vector<double>& z, std::span<const double> x, const CellState& s) {
  const std::size_t H = s.h.size();
  StepOutput out;
  StepCache& k = out.cache;
  k.x.assign(x.begin(), x.end());
  k.h_prev = s.h;
  k.c_prev = s.c;
  k.i.resize(H);
  k.f.resize(H);
  k.o.resize(H);
  k.g.resize(H);
  k.c.resize(H);
  k.tanh_c.resize(H);
  out.state.h.resize(H);
  for (std::size_t j = 0; j < H; ++j) {
    k.i[j] = sigmoid(z[j]);
    k.f[j] = sigmoid(z[H + j]);
    k.o[j] = sigmoid(z[2 * H + j]);
    k.g[j] = std::tanh(z[3 * H + j]);
    k.c[j] = k.f[j] * s.c[j] + k.i[j] * k.g[j];
    k.tanh_c[j] = std::tanh(k.c[j]);
    out.state.h[j] = k.o[j] * k.tanh_c[j];
  }
  out.state.c = k.c;
  return out;
}

// One step backward. dh is the total cotangent on h_t, dc carries the
// cotangent on c_t in and the cotangent on c_{t-1} out. Returns dz (4H).
std::vector<double> gate_backward(const StepCache& k, std::span<const double> dh, std::vector<double>& dc) {
  const std::size_t H = k.c.size();
  std::vector<double> dz(4 * H);
  for (std::size_t j = 0; j < H; ++j) {
    const double d_o = dh[j] * k.tanh_c[j];
    const double d_c = dc[j] + dh[j] * k.o[j] * (1.0 - k.tanh_c[j] * k.tanh_c[j]);
    const double d_i = d_c * k.g[j];
    const double d_g = d_c * k.i[j];
    const double d_f = d_c * k.c_prev[j];
    dc[j] = d_c * k.f[j];
    dz[j] = d_i * k.i[j] * (1.0 - k.i[j]);
    dz[H + j] = d_f * k.f[j] * (1.0 - k.f[j]);
    dz[2 * H + j] = d_o * k.o[j] * (1.0 - k.o[j]);
    dz[3 * H + j] = d_g * (1.0 - k.g[j] * k.g[j]);
  }
  return dz;
}

void check_upstream(const SequenceTrace& trace, const SequenceUpstream& up, std::size_t n_h) {
  if (up.dh.size() != trace.caches.size()) throw ExtentError("upstream length differs from trace length");
  for (const auto& d : up.dh)
    if (d.size() != n_h) throw ExtentError("upstream dh has wrong extent");
  if (!up.dc_final.empty() && up.dc_final.size() != n_h) throw ExtentError("upstream dc has wrong extent");
  for (const auto& k : trace.caches)
    if (k.c.size() != n_h) throw ExtentError("trace does not match cell hidden size");
}

template <typename Params>
SequenceTrace run_sequence(const Params& p, std::span<const std::vector<double>> xs, const CellState& s0,
                           StepOutput (*step)(const Params&, std::span<const double>, const CellState&)) {
  SequenceTrace trace;
  trace.states.reserve(xs.size());
  trace.caches.reserve(xs.size());
  const CellState* s = &s0;
  for (const auto& x : xs) {
    StepOutput out = step(p, x, *s);
    trace.states.push_back(std::move(out.state));
    trace.caches.push_back(std::move(out.cache));
    s = &trace.states.back();
  }
  return trace;
}

}  // namespace

void LstmParams::validate() const {
  const std::size_t H = w_h.cols();
  if (w_h.rows() != 4 * H) throw ExtentError("w_h must be 4H x H");
  if (w_x.rows() != 4 * H) throw ExtentError("w_x must be 4H x X");
  if (b.size() != 4 * H) throw ExtentError("bias must have 4H entries");
}

LstmParams LstmParams::zeros(std::size_t n_x, std::size_t n_h) {
  return {Matrix(4 * n_h, n_x), Matrix(4 * n_h, n_h), std::vector<double>(4 * n_h, 0.0)};
}

LstmParams LstmParams::glorot(std::size_t n_x, std::size_t n_h, std::mt19937_64& rng, double forget_bias) {
  LstmParams p = zeros(n_x, n_h);
  std::normal_distribution<double> nx(0.0, std::sqrt(2.0 / static_cast<double>(n_x + 4 * n_h)));
  for (double& v : p.w_x.storage()) v = nx(rng);
  std::normal_distribution<double> nh(0.0, std::sqrt(2.0 / static_cast<double>(n_h + 4 * n_h)));
  for (double& v : p.w_h.storage()) v = nh(rng);
  for (std::size_t j = 0; j < n_h; ++j) p.b[n_h + j] = forget_bias;
  return p;
}

void MpoLstmParams::validate() const {
  const std::size_t H = hidden_dim();
  if (w.plan().output_dim() != 4 * H || u.plan().output_dim() != 4 * H) {
    throw ExtentError("MPO operators must both produce 4H gate pre-activations");
  }
  if (b.size() != 4 * H) throw ExtentError("bias must have 4H entries");
}

MpoLstmParams MpoLstmParams::random(const GateFusedPlan& w_plan, const GateFusedPlan& u_plan,
                                    std::mt19937_64& rng, double forget_bias) {
  const MpoPlan wp = w_plan.fused();
  const MpoPlan up = u_plan.fused();
  const std::size_t H = up.input_dim();
  const double var_w = 2.0 / static_cast<double>(wp.input_dim() + wp.output_dim());
  const double var_u = 2.0 / static_cast<double>(up.input_dim() + up.output_dim());
  MpoLstmParams p;
  p.w = random_operator(wp, core_std_for_variance(wp, var_w), rng);
  p.u = random_operator(up, core_std_for_variance(up, var_u), rng);
  p.b.assign(4 * H, 0.0);
  for (std::size_t j = 0; j < H; ++j) p.b[H + j] = forget_bias;
  p.validate();
  return p;
}

MpoLstmParams MpoLstmParams::from_dense(const LstmParams& dense, const GateFusedPlan& w_plan,
                                        const GateFusedPlan& u_plan) {
  dense.validate();
  MpoLstmParams p{decompose(dense.w_x, w_plan.fused()).op, decompose(dense.w_h, u_plan.fused()).op, dense.b};
  p.validate();
  return p;
}

LstmParams MpoLstmParams::to_dense() const { return {reconstruct(w), reconstruct(u), b}; }

StepOutput lstm_cell_forward(const LstmParams& p, std::span<const double> x, const CellState& s) {
  p.validate();
  require_input(x, p.input_dim());
  require_state(s, p.hidden_dim());
  std::vector<double> z = matvec(p.w_x, x);
  const std::vector<double> zh = matvec(p.w_h, s.h);
  for (std::size_t r = 0; r < z.size(); ++r) z[r] += zh[r] + p.b[r];
  return finish_step(z, x, s);
}

StepOutput mpo_lstm_cell_forward(const MpoLstmParams& p, std::span<const double> x, const CellState& s) {
  p.validate();
  require_input(x, p.input_dim());
  require_state(s, p.hidden_dim());
  std::vector<double> z = apply(p.w, x);
  const std::vector<double> zh = apply(p.u, s.h);
  for (std::size_t r = 0; r < z.size(); ++r) z[r] += zh[r] + p.b[r];
  return finish_step(z, x, s);
}

SequenceTrace sequence_forward(const LstmParams& p, std::span<const std::vector<double>> xs, const CellState& s0) {
  return run_sequence<LstmParams>(p, xs, s0, &lstm_cell_forward);
}

SequenceTrace sequence_forward(const MpoLstmParams& p, std::span<const std::vector<double>> xs,
                               const CellState& s0) {
  return run_sequence<MpoLstmParams>(p, xs, s0, &mpo_lstm_cell_forward);
}

DenseLstmGrads backward_through_time(const LstmParams& p, const SequenceTrace& trace,
                                     const SequenceUpstream& upstream) {
  p.validate();
  const std::size_t H = p.hidden_dim(), X = p.input_dim(), T = trace.caches.size();
  check_upstream(trace, upstream, H);

  DenseLstmGrads g{Matrix(4 * H, X), Matrix(4 * H, H), std::vector<double>(4 * H, 0.0),
                   std::vector<std::vector<double>>(T), std::vector<double>(H, 0.0), {}};
  std::vector<double> dh_carry(H, 0.0);
  std::vector<double> dc = upstream.dc_final.empty() ? std::vector<double>(H, 0.0) : upstream.dc_final;
  for (std::size_t t = T; t-- > 0;) {
    const StepCache& k = trace.caches[t];
    std::vector<double> dh(H);
    for (std::size_t j = 0; j < H; ++j) dh[j] = upstream.dh[t][j] + dh_carry[j];
    const std::vector<double> dz = gate_backward(k, dh, dc);
    for (std::size_t r = 0; r < 4 * H; ++r) {
      g.b[r] += dz[r];
      auto wx = g.w_x.row(r);
      for (std::size_t c = 0; c < X; ++c) wx[c] += dz[r] * k.x[c];
      auto wh = g.w_h.row(r);
      for (std::size_t c = 0; c < H; ++c) wh[c] += dz[r] * k.h_prev[c];
    }
    g.x[t] = matvec_t(p.w_x, dz);
    dh_carry = matvec_t(p.w_h, dz);
  }
  g.h0 = std::move(dh_carry);
  g.c0 = std::move(dc);
  return g;
}

MpoLstmGrads backward_through_time(const MpoLstmParams& p, const SequenceTrace& trace,
                                   const SequenceUpstream& upstream) {
  p.validate();
  const std::size_t H = p.hidden_dim(), T = trace.caches.size();
  check_upstream(trace, upstream, H);

  MpoLstmGrads g;
  for (const auto& c : p.w.cores()) g.w_cores.emplace_back(c.shape());
  for (const auto& c : p.u.cores()) g.u_cores.emplace_back(c.shape());
  g.b.assign(4 * H, 0.0);
  g.x.resize(T);
  std::vector<double> dh_carry(H, 0.0);
  std::vector<double> dc = upstream.dc_final.empty() ? std::vector<double>(H, 0.0) : upstream.dc_final;
  for (std::size_t t = T; t-- > 0;) {
    const StepCache& k = trace.caches[t];
    std::vector<double> dh(H);
    for (std::size_t j = 0; j < H; ++j) dh[j] = upstream.dh[t][j] + dh_carry[j];
    const std::vector<double> dz = gate_backward(k, dh, dc);
    for (std::size_t r = 0; r < 4 * H; ++r) g.b[r] += dz[r];

    MpoGradient gw = grad_cores(p.w, k.x, dz);
    MpoGradient gu = grad_cores(p.u, k.h_prev, dz);
    for (std::size_t c = 0; c < gw.cores.size(); ++c)
      for (std::size_t e = 0; e < gw.cores[c].size(); ++e) g.w_cores[c][e] += gw.cores[c][e];
    for (std::size_t c = 0; c < gu.cores.size(); ++c)
      for (std::size_t e = 0; e < gu.cores[c].size(); ++e) g.u_cores[c][e] += gu.cores[c][e];
    g.x[t] = std::move(gw.input);
    dh_carry = std::move(gu.input);
  }
  g.h0 = std::move(dh_carry);
  g.c0 = std::move(dc);
  return g;
}

}  // namespace mpolstm
