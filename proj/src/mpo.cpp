// SPDX-License-Identifier: Apache-2.0
#include "mpolstm/mpo.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mpolstm/error.hpp"
#include "mpolstm/svd.hpp"

namespace mpolstm {

namespace {

std::size_t product(std::span<const std::size_t> v, std::size_t begin, std::size_t end) {
  std::size_t p = 1;
  for (std::size_t k = begin; k < end; ++k) p *= v[k];
  return p;
}

// Partial contraction of x with cores [0, k): layout [P = J_1..J_k][d_k][S = I_{k+1}..I_n].
struct Partial {
  std::size_t prefix = 1;
  std::size_t bond = 1;
  std::size_t suffix = 1;
  std::vector<double> v;
};

// Contract core k into the running state: [P][a][I_k][S'] -> [P*J_k][b][S'].
Partial advance(const Partial& f, const DenseTensor& core) {
  const std::size_t A = core.extent(0), J = core.extent(1), I = core.extent(2), B = core.extent(3);
  const std::size_t S = f.suffix / I;
  Partial out;
  out.prefix = f.prefix * J;
  out.bond = B;
  out.suffix = S;
  out.v.assign(out.prefix * B * S, 0.0);
  const double* w = core.data().data();
  for (std::size_t p = 0; p < f.prefix; ++p)
    for (std::size_t a = 0; a < A; ++a)
      for (std::size_t i = 0; i < I; ++i) {
        const double* src = f.v.data() + ((p * A + a) * I + i) * S;
        for (std::size_t j = 0; j < J; ++j)
          for (std::size_t b = 0; b < B; ++b) {
            const double coef = w[((a * J + j) * I + i) * B + b];
            if (coef == 0.0) continue;
            double* dst = out.v.data() + ((p * J + j) * B + b) * S;
            for (std::size_t s = 0; s < S; ++s) dst[s] += coef * src[s];
          }
      }
  return out;
}

// Backward step through core k: [P'*J_k][b][S] -> [P'][a][I_k*S].
Partial retreat(const Partial& g, const DenseTensor& core) {
  const std::size_t A = core.extent(0), J = core.extent(1), I = core.extent(2), B = core.extent(3);
  const std::size_t P = g.prefix / J;
  const std::size_t S = g.suffix;
  Partial out;
  out.prefix = P;
  out.bond = A;
  out.suffix = I * S;
  out.v.assign(P * A * I * S, 0.0);
  const double* w = core.data().data();
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t b = 0; b < B; ++b) {
        const double* src = g.v.data() + ((p * J + j) * B + b) * S;
        for (std::size_t a = 0; a < A; ++a)
          for (std::size_t i = 0; i < I; ++i) {
            const double coef = w[((a * J + j) * I + i) * B + b];
            if (coef == 0.0) continue;
            double* dst = out.v.data() + ((p * A + a) * I + i) * S;
            for (std::size_t s = 0; s < S; ++s) dst[s] += coef * src[s];
          }
      }
  return out;
}

void check_input(const MpoOperator& op, std::span<const double> x) {
  if (x.size() != op.plan().input_dim()) {
    throw ExtentError("MPO input has length " + std::to_string(x.size()) + ", expected " +
                      std::to_string(op.plan().input_dim()));
  }
}

}  // namespace

std::size_t MpoPlan::input_dim() const { return product(input_factors, 0, input_factors.size()); }

std::size_t MpoPlan::output_dim() const { return product(output_factors, 0, output_factors.size()); }

std::size_t MpoPlan::max_bond(std::size_t cut) const {
  const std::size_t n = num_cores();
  if (cut > n) throw ExtentError("cut index out of range");
  std::size_t left = 1, right = 1;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t local = input_factors[k] * output_factors[k];
    (k < cut ? left : right) *= local;
  }
  return std::min(left, right);
}

void MpoPlan::validate() const {
  const std::size_t n = num_cores();
  if (n == 0) throw ExtentError("MPO plan has no cores");
  if (output_factors.size() != n) throw ExtentError("input and output factor lists differ in length");
  if (bond_dims.size() != n + 1) throw ExtentError("bond list must have n+1 entries");
  for (std::size_t k = 0; k < n; ++k) {
    if (input_factors[k] == 0 || output_factors[k] == 0) throw ExtentError("zero factor in MPO plan");
  }
  if (bond_dims.front() != 1 || bond_dims.back() != 1) throw ExtentError("boundary bonds must be 1");
  for (std::size_t k = 1; k < n; ++k) {
    if (bond_dims[k] == 0) throw ExtentError("zero bond dimension");
    if (bond_dims[k] > max_bond(k)) {
      throw ExtentError("bond " + std::to_string(k) + " = " + std::to_string(bond_dims[k]) +
                        " exceeds maximum " + std::to_string(max_bond(k)));
    }
  }
}

MpoPlan MpoPlan::full(std::vector<std::size_t> input_factors, std::vector<std::size_t> output_factors) {
  MpoPlan p{std::move(input_factors), std::move(output_factors), {}};
  if (p.output_factors.size() != p.input_factors.size()) {
    throw ExtentError("input and output factor lists differ in length");
  }
  p.bond_dims.resize(p.num_cores() + 1);
  for (std::size_t k = 0; k <= p.num_cores(); ++k) p.bond_dims[k] = p.max_bond(k);
  p.validate();
  return p;
}

MpoPlan MpoPlan::uniform(std::vector<std::size_t> input_factors,
                         std::vector<std::size_t> output_factors, std::size_t d) {
  if (d == 0) throw ExtentError("bond dimension must be positive");
  MpoPlan p = full(std::move(input_factors), std::move(output_factors));
  for (std::size_t k = 1; k < p.num_cores(); ++k) p.bond_dims[k] = std::min(d, p.bond_dims[k]);
  return p;
}

std::size_t parameter_count(const MpoPlan& plan) {
  std::size_t total = 0;
  for (std::size_t k = 0; k < plan.num_cores(); ++k) {
    total += plan.input_factors[k] * plan.output_factors[k] * plan.bond_dims[k] * plan.bond_dims[k + 1];
  }
  return total;
}

MpoOperator::MpoOperator(MpoPlan plan, std::vector<DenseTensor> cores)
    : plan_(std::move(plan)), cores_(std::move(cores)) {
  plan_.validate();
  if (cores_.size() != plan_.num_cores()) throw ExtentError("core count does not match plan");
  for (std::size_t k = 0; k < cores_.size(); ++k) {
    const Shape expected{plan_.bond_dims[k], plan_.output_factors[k], plan_.input_factors[k],
                         plan_.bond_dims[k + 1]};
    if (cores_[k].shape() != expected) {
      throw ExtentError("core " + std::to_string(k) + " extents do not match plan");
    }
  }
}

MpoDecomposition decompose(const Matrix& w, const MpoPlan& plan) {
  plan.validate();
  if (w.rows() != plan.output_dim() || w.cols() != plan.input_dim()) {
    throw ExtentError("matrix is " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                      " but plan expects " + std::to_string(plan.output_dim()) + "x" +
                      std::to_string(plan.input_dim()));
  }
  if (!all_finite(w.data())) throw NumericError("weights contain non-finite values");

  const std::size_t n = plan.num_cores();
  Shape split;
  split.insert(split.end(), plan.output_factors.begin(), plan.output_factors.end());
  split.insert(split.end(), plan.input_factors.begin(), plan.input_factors.end());
  std::vector<std::size_t> interleave;
  for (std::size_t k = 0; k < n; ++k) {
    interleave.push_back(k);
    interleave.push_back(n + k);
  }
  DenseTensor t = permute(DenseTensor(split, w.storage()), interleave);

  MpoDecomposition out;
  std::vector<DenseTensor> cores;
  std::vector<double> rest = std::move(t.storage());
  std::size_t left_bond = 1;
  double discarded_sq = 0.0;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const std::size_t J = plan.output_factors[k], I = plan.input_factors[k];
    const std::size_t bond = plan.bond_dims[k + 1];
    const std::size_t rows = left_bond * J * I;
    const std::size_t cols = rest.size() / rows;
    const SvdResult svd = truncated_svd(Matrix(rows, cols, std::move(rest)), bond);
    out.cut_discarded.push_back(svd.discarded_norm);
    discarded_sq += svd.discarded_norm * svd.discarded_norm;

    const std::size_t r = svd.rank();
    DenseTensor core({left_bond, J, I, bond});
    for (std::size_t row = 0; row < rows; ++row)
      for (std::size_t c = 0; c < r; ++c) core[row * bond + c] = svd.u(row, c);
    cores.push_back(std::move(core));

    rest.assign(bond * cols, 0.0);
    for (std::size_t c = 0; c < r; ++c)
      for (std::size_t j = 0; j < cols; ++j) rest[c * cols + j] = svd.s[c] * svd.vt(c, j);
    left_bond = bond;
  }
  cores.emplace_back(Shape{left_bond, plan.output_factors[n - 1], plan.input_factors[n - 1], 1},
                     std::move(rest));

  out.op = MpoOperator(plan, std::move(cores));
  out.discarded_norm = std::sqrt(discarded_sq);
  return out;
}

Matrix reconstruct(const MpoOperator& op) {
  // State [P = J_1..J_k][Q = I_1..I_k][d_k].
  std::size_t P = 1, Q = 1, A = 1;
  std::vector<double> state{1.0};
  for (const DenseTensor& core : op.cores()) {
    const std::size_t J = core.extent(1), I = core.extent(2), B = core.extent(3);
    const std::size_t P2 = P * J, Q2 = Q * I;
    std::vector<double> next(P2 * Q2 * B, 0.0);
    const double* w = core.data().data();
    for (std::size_t p = 0; p < P; ++p)
      for (std::size_t q = 0; q < Q; ++q)
        for (std::size_t a = 0; a < A; ++a) {
          const double r = state[(p * Q + q) * A + a];
          if (r == 0.0) continue;
          for (std::size_t j = 0; j < J; ++j)
            for (std::size_t i = 0; i < I; ++i) {
              const double* src = w + ((a * J + j) * I + i) * B;
              double* dst = next.data() + ((p * J + j) * Q2 + q * I + i) * B;
              for (std::size_t b = 0; b < B; ++b) dst[b] += r * src[b];
            }
        }
    state = std::move(next);
    P = P2;
    Q = Q2;
    A = B;
  }
  return Matrix(P, Q, std::move(state));
}

std::vector<double> apply(const MpoOperator& op, std::span<const double> x) {
  check_input(op, x);
  Partial f{1, 1, x.size(), std::vector<double>(x.begin(), x.end())};
  for (const DenseTensor& core : op.cores()) f = advance(f, core);
  return std::move(f.v);
}

Matrix apply_batch(const MpoOperator& op, const Matrix& xs) {
  if (xs.cols() != op.plan().input_dim()) throw ExtentError("batch width does not match MPO input");
  Matrix ys(xs.rows(), op.plan().output_dim());
  for (std::size_t r = 0; r < xs.rows(); ++r) {
    const auto y = apply(op, xs.row(r));
    std::copy(y.begin(), y.end(), ys.row(r).begin());
  }
  return ys;
}

MpoGradient grad_cores(const MpoOperator& op, std::span<const double> x,
                       std::span<const double> upstream) {
  check_input(op, x);
  if (upstream.size() != op.plan().output_dim()) throw ExtentError("upstream length does not match MPO output");
  const std::size_t n = op.num_cores();

  std::vector<Partial> fwd;  // fwd[k]: x contracted with cores [0, k)
  fwd.reserve(n);
  fwd.push_back(Partial{1, 1, x.size(), std::vector<double>(x.begin(), x.end())});
  for (std::size_t k = 0; k + 1 < n; ++k) fwd.push_back(advance(fwd[k], op.core(k)));

  MpoGradient grad;
  grad.cores.resize(n);
  // bwd: upstream contracted with cores (k, n), layout [J_1..J_k][d_k][I_{k+1}..I_n].
  Partial bwd{upstream.size(), 1, 1, std::vector<double>(upstream.begin(), upstream.end())};
  for (std::size_t k = n; k-- > 0;) {
    const DenseTensor& core = op.core(k);
    const std::size_t A = core.extent(0), J = core.extent(1), I = core.extent(2), B = core.extent(3);
    const Partial& f = fwd[k];  // [P][A][I*S]
    const std::size_t P = f.prefix;
    const std::size_t S = f.suffix / I;
    DenseTensor g(core.shape());
    double* gw = g.data().data();
    for (std::size_t p = 0; p < P; ++p)
      for (std::size_t a = 0; a < A; ++a)
        for (std::size_t i = 0; i < I; ++i) {
          const double* fv = f.v.data() + ((p * A + a) * I + i) * S;
          for (std::size_t j = 0; j < J; ++j)
            for (std::size_t b = 0; b < B; ++b) {
              const double* bv = bwd.v.data() + ((p * J + j) * B + b) * S;
              double s = 0.0;
              for (std::size_t t = 0; t < S; ++t) s += fv[t] * bv[t];
              gw[((a * J + j) * I + i) * B + b] += s;
            }
        }
    grad.cores[k] = std::move(g);
    bwd = retreat(bwd, core);
  }
  grad.input = std::move(bwd.v);
  return grad;
}

std::vector<DenseTensor> reconstruct_grad(const MpoOperator& op, const Matrix& g) {
  const MpoPlan& plan = op.plan();
  if (g.rows() != plan.output_dim() || g.cols() != plan.input_dim()) {
    throw ExtentError("cotangent extents do not match MPO");
  }
  const std::size_t n = op.num_cores();

  // right[k]: cores [k, n) contracted, layout [d_k][J_{k+1}..J_n][I_{k+1}..I_n].
  std::vector<std::vector<double>> right(n + 1);
  right[n] = {1.0};
  for (std::size_t k = n; k-- > 0;) {
    const DenseTensor& core = op.core(k);
    const std::size_t A = core.extent(0), J = core.extent(1), I = core.extent(2), B = core.extent(3);
    const std::size_t P2 = product(plan.output_factors, k + 1, n);
    const std::size_t Q2 = product(plan.input_factors, k + 1, n);
    std::vector<double> next(A * J * P2 * I * Q2, 0.0);
    const double* w = core.data().data();
    for (std::size_t a = 0; a < A; ++a)
      for (std::size_t j = 0; j < J; ++j)
        for (std::size_t i = 0; i < I; ++i)
          for (std::size_t b = 0; b < B; ++b) {
            const double coef = w[((a * J + j) * I + i) * B + b];
            if (coef == 0.0) continue;
            const double* src = right[k + 1].data() + b * P2 * Q2;
            for (std::size_t p2 = 0; p2 < P2; ++p2) {
              double* dst = next.data() + ((a * J + j) * P2 + p2) * I * Q2 + i * Q2;
              const double* s = src + p2 * Q2;
              for (std::size_t q2 = 0; q2 < Q2; ++q2) dst[q2] += coef * s[q2];
            }
          }
    right[k] = std::move(next);
  }

  std::vector<DenseTensor> grads(n);
  // left: cores [0, k) contracted, layout [J_1..J_k][I_1..I_k][d_k].
  std::vector<double> left{1.0};
  for (std::size_t k = 0; k < n; ++k) {
    const DenseTensor& core = op.core(k);
    const std::size_t A = core.extent(0), J = core.extent(1), I = core.extent(2), B = core.extent(3);
    const std::size_t P = product(plan.output_factors, 0, k), Q = product(plan.input_factors, 0, k);
    const std::size_t P2 = product(plan.output_factors, k + 1, n);
    const std::size_t Q2 = product(plan.input_factors, k + 1, n);
    const std::size_t rowspan = J * P2, colspan = I * Q2;

    // h[a][j p2][i q2] = sum_{p,q} left[p][q][a] g[(p, j p2), (q, i q2)]
    std::vector<double> h(A * rowspan * colspan, 0.0);
    for (std::size_t p = 0; p < P; ++p)
      for (std::size_t q = 0; q < Q; ++q)
        for (std::size_t a = 0; a < A; ++a) {
          const double l = left[(p * Q + q) * A + a];
          if (l == 0.0) continue;
          for (std::size_t r = 0; r < rowspan; ++r) {
            const double* src = g.row(p * rowspan + r).data() + q * colspan;
            double* dst = h.data() + (a * rowspan + r) * colspan;
            for (std::size_t c = 0; c < colspan; ++c) dst[c] += l * src[c];
          }
        }

    DenseTensor gk(core.shape());
    const std::vector<double>& rt = right[k + 1];  // [B][P2][Q2]
    for (std::size_t a = 0; a < A; ++a)
      for (std::size_t j = 0; j < J; ++j)
        for (std::size_t i = 0; i < I; ++i)
          for (std::size_t b = 0; b < B; ++b) {
            double s = 0.0;
            for (std::size_t p2 = 0; p2 < P2; ++p2) {
              const double* hv = h.data() + (a * rowspan + j * P2 + p2) * colspan + i * Q2;
              const double* rv = rt.data() + (b * P2 + p2) * Q2;
              for (std::size_t q2 = 0; q2 < Q2; ++q2) s += hv[q2] * rv[q2];
            }
            gk[((a * J + j) * I + i) * B + b] = s;
          }
    grads[k] = std::move(gk);

    // Extend left with core k.
    const std::size_t PJ = P * J, QI = Q * I;
    std::vector<double> next(PJ * QI * B, 0.0);
    const double* w = core.data().data();
    for (std::size_t p = 0; p < P; ++p)
      for (std::size_t q = 0; q < Q; ++q)
        for (std::size_t a = 0; a < A; ++a) {
          const double l = left[(p * Q + q) * A + a];
          if (l == 0.0) continue;
          for (std::size_t j = 0; j < J; ++j)
            for (std::size_t i = 0; i < I; ++i) {
              const double* src = w + ((a * J + j) * I + i) * B;
              double* dst = next.data() + ((p * J + j) * QI + q * I + i) * B;
              for (std::size_t b = 0; b < B; ++b) dst[b] += l * src[b];
            }
        }
    left = std::move(next);
  }
  return grads;
}

double core_std_for_variance(const MpoPlan& plan, double target_variance) {
  double bonds = 1.0;
  for (std::size_t d : plan.bond_dims) bonds *= static_cast<double>(d);
  const double n = static_cast<double>(plan.num_cores());
  return std::pow(target_variance / bonds, 1.0 / (2.0 * n));
}

MpoOperator random_operator(const MpoPlan& plan, double core_std, std::mt19937_64& rng) {
  plan.validate();
  std::normal_distribution<double> normal(0.0, core_std);
  std::vector<DenseTensor> cores;
  for (std::size_t k = 0; k < plan.num_cores(); ++k) {
    DenseTensor c({plan.bond_dims[k], plan.output_factors[k], plan.input_factors[k], plan.bond_dims[k + 1]});
    for (double& v : c.storage()) v = normal(rng);
    cores.push_back(std::move(c));
  }
  return MpoOperator(plan, std::move(cores));
}

}  // namespace mpolstm
