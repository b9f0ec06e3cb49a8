// SPDX-License-Identifier: Apache-2.0
#include "mpolstm/check.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "mpolstm/cells.hpp"
#include "mpolstm/error.hpp"
#include "mpolstm/io.hpp"
#include "mpolstm/mpo.hpp"
#include "mpolstm/planner.hpp"
#include "mpolstm/svd.hpp"

namespace mpolstm {

namespace {

using Rng = std::mt19937_64;

struct Context {
  double tol_scale;
  std::uint64_t seed;
};

// Outcome of a check body: worst observed value against its tolerance.
struct Measure {
  double worst = 0.0;
  double tol = 0.0;
  std::string what;
};

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  std::normal_distribution<double> nd;
  Matrix m(r, c);
  for (double& v : m.data()) v = nd(rng);
  return m;
}

std::vector<double> random_vector(std::size_t n, Rng& rng) {
  std::normal_distribution<double> nd;
  std::vector<double> v(n);
  for (double& x : v) x = nd(rng);
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double rel_distance(std::span<const double> a, std::span<const double> b) {
  const double scale = std::max({frobenius_norm(a), frobenius_norm(b), 1e-300});
  return frobenius_distance(a, b) / scale;
}

// Central differences of f over every entry of `x`, compared with `analytic`.
double fd_rel_error(std::span<double> x, const std::function<double()>& f, std::span<const double> analytic) {
  constexpr double h = 1e-5;
  std::vector<double> numeric(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double saved = x[k];
    x[k] = saved + h;
    const double up = f();
    x[k] = saved - h;
    const double down = f();
    x[k] = saved;
    numeric[k] = (up - down) / (2.0 * h);
  }
  return rel_distance(numeric, analytic);
}

double sequence_objective(const SequenceTrace& t, const SequenceUpstream& up) {
  double s = 0.0;
  for (std::size_t k = 0; k < t.states.size(); ++k) s += dot(up.dh[k], t.states[k].h);
  if (!up.dc_final.empty()) s += dot(up.dc_final, t.states.back().c);
  return s;
}

std::vector<std::vector<double>> random_sequence(std::size_t steps, std::size_t dim, Rng& rng) {
  std::vector<std::vector<double>> xs;
  for (std::size_t t = 0; t < steps; ++t) xs.push_back(random_vector(dim, rng));
  return xs;
}

SequenceUpstream random_upstream(std::size_t steps, std::size_t n_h, Rng& rng) {
  SequenceUpstream up;
  for (std::size_t t = 0; t < steps; ++t) up.dh.push_back(random_vector(n_h, rng));
  up.dc_final = random_vector(n_h, rng);
  return up;
}

// ---------------------------------------------------------------------------
// svd

Measure svd_reconstruct_check(const Context& ctx) {
  Rng rng(ctx.seed);
  Measure m{0.0, 1e-12, "max relative reconstruction error"};
  const std::size_t shapes[][2] = {{1, 1}, {5, 3}, {3, 5}, {17, 17}, {40, 9}, {9, 40}, {64, 64}};
  for (auto [r, c] : shapes) {
    const Matrix a = random_matrix(r, c, rng);
    const SvdResult s = truncated_svd(a, std::min(r, c));
    m.worst = std::max(m.worst, rel_distance(svd_reconstruct(s).data(), a.data()));
  }
  return m;
}

Measure svd_orthonormal_check(const Context& ctx) {
  Rng rng(ctx.seed + 1);
  Measure m{0.0, 1e-12, "max deviation of u^T u and v^T v from identity"};
  for (std::size_t trial = 0; trial < 6; ++trial) {
    const Matrix a = random_matrix(10 + 7 * trial, 30 - 3 * trial, rng);
    const SvdResult s = truncated_svd(a, 100);
    const Matrix utu = matmul_tn(s.u, s.u);
    const Matrix vvt = matmul_nt(s.vt, s.vt);
    const Matrix eye = Matrix::identity(s.rank());
    m.worst = std::max({m.worst, frobenius_distance(utu.data(), eye.data()), frobenius_distance(vvt.data(), eye.data())});
  }
  return m;
}

Measure svd_truncation_check(const Context& ctx) {
  Rng rng(ctx.seed + 2);
  Measure m{0.0, 1e-9, "max |error - discarded norm| / discarded norm"};
  for (std::size_t trial = 0; trial < 10; ++trial) {
    const Matrix a = random_matrix(24, 18, rng);
    const SvdResult s = truncated_svd(a, 1 + trial);
    const double err = frobenius_distance(svd_reconstruct(s).data(), a.data());
    m.worst = std::max(m.worst, std::abs(err - s.discarded_norm) / s.discarded_norm);
  }
  return m;
}

// ---------------------------------------------------------------------------
// mpo

Measure mpo_exact_check(const Context& ctx) {
  Rng rng(ctx.seed + 3);
  Measure m{0.0, 1e-10, "max relative error of full-bond decompose/reconstruct"};
  const std::vector<std::size_t> f{8, 2, 2, 8};
  for (std::size_t trial = 0; trial < 3; ++trial) {
    const Matrix w = random_matrix(256, 256, rng);
    const Matrix r = reconstruct(decompose(w, MpoPlan::full(f, f)).op);
    m.worst = std::max(m.worst, rel_distance(r.data(), w.data()));
  }
  return m;
}

Measure mpo_single_cut_check(const Context& ctx) {
  Rng rng(ctx.seed + 4);
  Measure m{0.0, 1e-9, "max |error - discarded norm| / discarded norm, one truncated cut"};
  const std::vector<std::size_t> in{4, 2, 4}, out{2, 4, 4};
  for (std::size_t cut = 1; cut <= 2; ++cut) {
    for (std::size_t d = 1; d <= 4; ++d) {
      MpoPlan plan = MpoPlan::full(in, out);
      plan.bond_dims[cut] = std::min(d, plan.bond_dims[cut]);
      const Matrix w = random_matrix(32, 32, rng);
      const MpoDecomposition dec = decompose(w, plan);
      const double err = frobenius_distance(reconstruct(dec.op).data(), w.data());
      m.worst = std::max(m.worst, std::abs(err - dec.discarded_norm) / dec.discarded_norm);
    }
  }
  return m;
}

Measure mpo_apply_check(const Context& ctx) {
  Rng rng(ctx.seed + 5);
  Measure m{0.0, 1e-12, "max relative gap between apply and dense matvec"};
  const std::vector<std::vector<std::size_t>> ins{{4, 2, 4}, {2, 3}, {8, 2, 2, 8}}, outs{{2, 4, 4}, {5, 1}, {8, 2, 2, 8}};
  for (std::size_t k = 0; k < ins.size(); ++k) {
    const MpoPlan plan = MpoPlan::uniform(ins[k], outs[k], 3);
    const MpoOperator op = random_operator(plan, 0.7, rng);
    const auto x = random_vector(plan.input_dim(), rng);
    m.worst = std::max(m.worst, rel_distance(mpolstm::apply(op, x), matvec(reconstruct(op), x)));
  }
  return m;
}

// ---------------------------------------------------------------------------
// gradients

Measure grad_apply_check(const Context& ctx) {
  Rng rng(ctx.seed + 6);
  Measure m{0.0, 1e-5, "max relative finite-difference gap (cores and input)"};
  for (std::size_t trial = 0; trial < 10; ++trial) {
    const MpoPlan plan = MpoPlan::uniform({2, 3, 2}, {3, 2, 2}, 1 + trial % 4);
    MpoOperator op = random_operator(plan, 0.8, rng);
    auto x = random_vector(plan.input_dim(), rng);
    const auto up = random_vector(plan.output_dim(), rng);
    const MpoGradient g = grad_cores(op, x, up);
    auto f = [&] {
      const auto y = mpolstm::apply(op, x);
      return dot(up, y);
    };
    for (std::size_t k = 0; k < op.num_cores(); ++k) {
      m.worst = std::max(m.worst, fd_rel_error(op.core_values(k), f, g.cores[k].data()));
    }
    m.worst = std::max(m.worst, fd_rel_error(x, f, g.input));
  }
  return m;
}

Measure grad_reconstruct_check(const Context& ctx) {
  Rng rng(ctx.seed + 7);
  Measure m{0.0, 1e-5, "max relative finite-difference gap"};
  for (std::size_t trial = 0; trial < 5; ++trial) {
    const MpoPlan plan = MpoPlan::uniform({2, 2, 3}, {3, 2, 2}, 2 + trial % 3);
    MpoOperator op = random_operator(plan, 0.8, rng);
    const Matrix g = random_matrix(plan.output_dim(), plan.input_dim(), rng);
    const auto grads = reconstruct_grad(op, g);
    auto f = [&] {
      const Matrix r = reconstruct(op);
      return dot(g.data(), r.data());
    };
    for (std::size_t k = 0; k < op.num_cores(); ++k) {
      m.worst = std::max(m.worst, fd_rel_error(op.core_values(k), f, grads[k].data()));
    }
  }
  return m;
}

Measure grad_dense_lstm_check(const Context& ctx) {
  Rng rng(ctx.seed + 8);
  Measure m{0.0, 1e-5, "max relative finite-difference gap over w_x, w_h, b, x, h0, c0"};
  for (std::size_t trial = 0; trial < 10; ++trial) {
    const std::size_t n_x = 2 + trial % 4, n_h = 3 + trial % 6, steps = 1 + trial % 6;
    LstmParams p = LstmParams::glorot(n_x, n_h, rng, 0.5);
    for (double& v : p.b) v += 0.3 * std::normal_distribution<double>()(rng);
    auto xs = random_sequence(steps, n_x, rng);
    CellState s0{random_vector(n_h, rng), random_vector(n_h, rng)};
    const auto up = random_upstream(steps, n_h, rng);
    const DenseLstmGrads g = backward_through_time(p, sequence_forward(p, xs, s0), up);
    auto f = [&] { return sequence_objective(sequence_forward(p, xs, s0), up); };
    m.worst = std::max(m.worst, fd_rel_error(p.w_x.data(), f, g.w_x.data()));
    m.worst = std::max(m.worst, fd_rel_error(p.w_h.data(), f, g.w_h.data()));
    m.worst = std::max(m.worst, fd_rel_error(p.b, f, g.b));
    for (std::size_t t = 0; t < steps; ++t) m.worst = std::max(m.worst, fd_rel_error(xs[t], f, g.x[t]));
    m.worst = std::max(m.worst, fd_rel_error(s0.h, f, g.h0));
    m.worst = std::max(m.worst, fd_rel_error(s0.c, f, g.c0));
  }
  return m;
}

Measure grad_mpo_lstm_check(const Context& ctx) {
  Rng rng(ctx.seed + 9);
  Measure m{0.0, 1e-5, "max relative finite-difference gap over cores, b, x, h0, c0"};
  for (std::size_t trial = 0; trial < 10; ++trial) {
    const std::vector<std::size_t> xf{2, 2}, hf{2, 1 + trial % 4};
    const std::size_t n_h = hf[0] * hf[1], steps = 1 + trial % 6;
    const GateFusedPlan wp = GateFusedPlan::uniform(xf, hf, 1 + trial % 3);
    const GateFusedPlan up_plan = GateFusedPlan::uniform(hf, hf, 1 + (trial + 1) % 3);
    MpoLstmParams p = MpoLstmParams::random(wp, up_plan, rng, 0.5);
    auto xs = random_sequence(steps, 4, rng);
    CellState s0{random_vector(n_h, rng), random_vector(n_h, rng)};
    const auto up = random_upstream(steps, n_h, rng);
    const MpoLstmGrads g = backward_through_time(p, sequence_forward(p, xs, s0), up);
    auto f = [&] { return sequence_objective(sequence_forward(p, xs, s0), up); };
    for (std::size_t k = 0; k < p.w.num_cores(); ++k) {
      m.worst = std::max(m.worst, fd_rel_error(p.w.core_values(k), f, g.w_cores[k].data()));
    }
    for (std::size_t k = 0; k < p.u.num_cores(); ++k) {
      m.worst = std::max(m.worst, fd_rel_error(p.u.core_values(k), f, g.u_cores[k].data()));
    }
    m.worst = std::max(m.worst, fd_rel_error(p.b, f, g.b));
    for (std::size_t t = 0; t < steps; ++t) m.worst = std::max(m.worst, fd_rel_error(xs[t], f, g.x[t]));
    m.worst = std::max(m.worst, fd_rel_error(s0.h, f, g.h0));
    m.worst = std::max(m.worst, fd_rel_error(s0.c, f, g.c0));
  }
  return m;
}

// ---------------------------------------------------------------------------
// cells

double max_state_gap(const SequenceTrace& a, const SequenceTrace& b) {
  double worst = 0.0;
  for (std::size_t t = 0; t < a.states.size(); ++t) {
    for (std::size_t k = 0; k < a.states[t].h.size(); ++k) {
      worst = std::max({worst, std::abs(a.states[t].h[k] - b.states[t].h[k]),
                        std::abs(a.states[t].c[k] - b.states[t].c[k])});
    }
  }
  return worst;
}

Measure cell_equivalence_check(const Context& ctx) {
  Rng rng(ctx.seed + 10);
  Measure m{0.0, 1e-8, "max |h - h_dense|, |c - c_dense| over 50 steps"};
  const std::vector<std::size_t> xf{2, 2, 2, 2}, hf{2, 2, 2, 2};
  for (std::size_t trial = 0; trial < 3; ++trial) {
    const LstmParams dense = LstmParams::glorot(16, 16, rng);
    const std::size_t big = 1 << 20;
    const MpoLstmParams mpo = MpoLstmParams::from_dense(dense, GateFusedPlan::uniform(xf, hf, big),
                                                        GateFusedPlan::uniform(hf, hf, big));
    const auto xs = random_sequence(50, 16, rng);
    const CellState s0 = CellState::zeros(16);
    m.worst = std::max(m.worst, max_state_gap(sequence_forward(dense, xs, s0), sequence_forward(mpo, xs, s0)));
  }
  return m;
}

Measure cell_truncated_check(const Context& ctx) {
  Rng rng(ctx.seed + 11);
  Measure m{0.0, 1e-10, "max gap to the dense cell built from reconstructed matrices"};
  const std::vector<std::size_t> xf{2, 2, 2, 2}, hf{2, 2, 2, 2};
  for (std::size_t trial = 0; trial < 3; ++trial) {
    const LstmParams dense = LstmParams::glorot(16, 16, rng);
    const MpoLstmParams mpo =
        MpoLstmParams::from_dense(dense, GateFusedPlan::uniform(xf, hf, 3), GateFusedPlan::uniform(hf, hf, 2));
    const auto xs = random_sequence(30, 16, rng);
    const CellState s0 = CellState::zeros(16);
    m.worst = std::max(m.worst, max_state_gap(sequence_forward(mpo.to_dense(), xs, s0), sequence_forward(mpo, xs, s0)));
  }
  return m;
}

// ---------------------------------------------------------------------------
// ratios

const std::vector<std::size_t> kTableFactors{8, 2, 2, 8};

struct TableRow {
  double rho;
  std::size_t d_w, d_u;
};
constexpr TableRow kBondTable[] = {{5, 64, 64},  {10, 41, 40}, {15, 32, 29}, {20, 26, 24},
                                   {25, 22, 20}, {50, 13, 13}, {75, 9, 9},   {100, 7, 7}};

CheckResult table_row_check(const TableRow& row) {
  CheckResult r{"ratios", "bond-table-rho-" + std::to_string(static_cast<int>(row.rho)), false, ""};
  std::ostringstream os;
  try {
    const BondChoice c = bonds_for_target(row.rho, kTableFactors, kTableFactors);
    const CompressionReport at_table =
        compression_ratio(GateFusedPlan::uniform(kTableFactors, kTableFactors, row.d_w),
                          GateFusedPlan::uniform(kTableFactors, kTableFactors, row.d_u), 256, 256);
    const bool pair_ok = c.d_w == row.d_w && c.d_u == row.d_u;
    const bool band_ok = at_table.rho_total >= 0.97 * row.rho && at_table.rho_total <= 1.06 * row.rho;
    os << "planner (" << c.d_w << "," << c.d_u << ") expected (" << row.d_w << "," << row.d_u
       << "); ratio at expected pair " << at_table.rho_total << " vs band [" << 0.97 * row.rho << ", "
       << 1.06 * row.rho << "]";
    r.passed = pair_ok && band_ok;
  } catch (const Error& e) {
    os << "error: " << e.what();
  }
  r.detail = os.str();
  return r;
}

Measure dense_count_check(const Context&) {
  const double n = static_cast<double>(dense_lstm_count(256, 256));
  return {std::abs(n - 524288.0), 0.0, "|dense count - 524288|"};
}

Measure fused_count_check(const Context&) {
  // For (8,2,2,8) on both sides with a uniform bond d the fused cores hold
  // 32*8*d + 2*2*d*d + 2*2*d*d + 8*8*d = 320 d + 8 d^2.
  Measure m{0.0, 0.0, "max |count - (320 d + 8 d^2)| over d = 1..64"};
  for (std::size_t d = 1; d <= 64; ++d) {
    const double got = static_cast<double>(gate_fused_count(GateFusedPlan::uniform(kTableFactors, kTableFactors, d)));
    const double want = 320.0 * d + 8.0 * d * d;
    m.worst = std::max(m.worst, std::abs(got - want));
  }
  return m;
}

Measure curve_check(const Context&) {
  Measure m{0.0, 0.0, "violations of strict growth or of the dense bound"};
  const auto curve = parameter_curve(kTableFactors, kTableFactors, 1, 64);
  for (std::size_t k = 0; k < curve.size(); ++k) {
    if (curve[k].total() >= 524288) m.worst += 1.0;
    if (k > 0 && curve[k].total() <= curve[k - 1].total()) m.worst += 1.0;
  }
  return m;
}

// ---------------------------------------------------------------------------
// io

WeightBundle random_bundle(Rng& rng) {
  WeightBundle b;
  const Matrix w = random_matrix(6, 5, rng);
  b.push_back({"dense", as_tensor(w)});
  b.push_back({"op", random_operator(MpoPlan::uniform({2, 3}, {3, 2}, 2), 1.0, rng)});
  b.push_back({"bias", DenseTensor({7}, random_vector(7, rng))});
  return b;
}

Measure weights_roundtrip_check(const Context& ctx) {
  Rng rng(ctx.seed + 12);
  Measure m{0.0, 0.0, "round trips that were not bit-identical"};
  for (std::size_t trial = 0; trial < 20; ++trial) {
    const WeightBundle b = random_bundle(rng);
    const auto bytes = encode_weights(b);
    if (!(decode_weights(bytes) == b) || encode_weights(decode_weights(bytes)) != bytes) m.worst += 1.0;
  }
  return m;
}

Measure weights_corruption_check(const Context& ctx) {
  Rng rng(ctx.seed + 13);
  Measure m{0.0, 0.0, "corrupted or truncated buffers that were accepted"};
  const auto bytes = encode_weights(random_bundle(rng));
  auto rejected = [](std::span<const std::uint8_t> buf) {
    try {
      decode_weights(buf);
    } catch (const IntegrityError&) {
      return true;
    }
    return false;
  };
  for (std::size_t len = 0; len < bytes.size(); len += 7) {
    if (!rejected(std::span(bytes).first(len))) m.worst += 1.0;
  }
  for (std::size_t pos = bytes.size() - 4 - 8 * 30; pos < bytes.size(); pos += 5) {
    auto copy = bytes;
    copy[pos] ^= 0x10;
    if (!rejected(copy)) m.worst += 1.0;
  }
  return m;
}

Measure report_roundtrip_check(const Context& ctx) {
  Rng rng(ctx.seed + 14);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SweepReport rep;
  for (std::size_t k = 0; k < 6; ++k) {
    rep.rows.push_back({5.0 * (k + 1), k % 2 ? "mpo" : "pruning", k == 3 ? std::nan("") : u(rng), 100 * k, u(rng) * 10,
                        k, 0.0});
  }
  Measure m{0.0, 0.0, "fields that changed across a CSV or JSON round trip"};
  for (ReportFormat fmt : {ReportFormat::kCsv, ReportFormat::kJson}) {
    const SweepReport back = parse_report(format_report(rep, fmt), fmt);
    if (back.rows.size() != rep.rows.size()) {
      m.worst += 1.0;
      continue;
    }
    for (std::size_t k = 0; k < rep.rows.size(); ++k) {
      const SweepRow &a = rep.rows[k], &b = back.rows[k];
      const bool metric_same = (std::isnan(a.metric) && std::isnan(b.metric)) || a.metric == b.metric;
      if (a.rate != b.rate || a.method != b.method || !metric_same || a.params != b.params ||
          a.ratio_actual != b.ratio_actual || a.seed != b.seed || a.wall_time != b.wall_time) {
        m.worst += 1.0;
      }
    }
  }
  return m;
}

// ---------------------------------------------------------------------------

struct Entry {
  std::string group;
  std::string name;
  std::function<Measure(const Context&)> body;
};

std::vector<Entry> registry() {
  return {
      {"svd", "svd-reconstruct", svd_reconstruct_check},
      {"svd", "svd-orthonormal", svd_orthonormal_check},
      {"svd", "svd-truncation-error", svd_truncation_check},
      {"mpo", "mpo-full-bond-exact", mpo_exact_check},
      {"mpo", "mpo-single-cut-error", mpo_single_cut_check},
      {"mpo", "mpo-apply-matches-dense", mpo_apply_check},
      {"gradients", "grad-mpo-apply", grad_apply_check},
      {"gradients", "grad-mpo-reconstruct", grad_reconstruct_check},
      {"gradients", "grad-dense-lstm", grad_dense_lstm_check},
      {"gradients", "grad-mpo-lstm", grad_mpo_lstm_check},
      {"cells", "cell-exact-equivalence", cell_equivalence_check},
      {"cells", "cell-truncated-consistency", cell_truncated_check},
      {"ratios", "dense-count", dense_count_check},
      {"ratios", "fused-count-formula", fused_count_check},
      {"ratios", "parameter-curve", curve_check},
      {"io", "weights-roundtrip", weights_roundtrip_check},
      {"io", "weights-corruption", weights_corruption_check},
      {"io", "report-roundtrip", report_roundtrip_check},
  };
}

bool selected(const std::string& filter, const std::string& group, const std::string& name) {
  return filter.empty() || group.find(filter) != std::string::npos || name.find(filter) != std::string::npos;
}

}  // namespace

std::vector<std::string> check_groups() { return {"svd", "mpo", "gradients", "cells", "ratios", "io"}; }

std::vector<CheckResult> run_checks(const CheckOptions& options) {
  const Context ctx{options.tol_scale, options.seed};
  std::vector<CheckResult> out;
  for (const Entry& e : registry()) {
    if (!selected(options.filter, e.group, e.name)) continue;
    CheckResult r{e.group, e.name, false, ""};
    try {
      const Measure m = e.body(ctx);
      const double tol = m.tol * ctx.tol_scale;
      r.passed = m.worst <= tol;
      std::ostringstream os;
      os << m.what << " = " << m.worst << " (tolerance " << tol << ")";
      r.detail = os.str();
    } catch (const std::exception& e2) {
      r.detail = std::string("exception: ") + e2.what();
    }
    out.push_back(std::move(r));
  }
  for (const TableRow& row : kBondTable) {
    if (selected(options.filter, "ratios", "bond-table-rho-" + std::to_string(static_cast<int>(row.rho)))) {
      out.push_back(table_row_check(row));
    }
  }
  return out;
}

}  // namespace mpolstm
