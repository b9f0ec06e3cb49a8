// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "mpolstm/cells.hpp"
#include "mpolstm/error.hpp"

namespace mpolstm {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

BatchTrace lstm_batch_forward(const LstmParams& p, std::vector<Matrix> xs) {
  p.validate();
  const std::size_t H = p.hidden_dim(), T = xs.size();
  BatchTrace tr;
  tr.batch = T ? xs.front().rows() : 0;
  const std::size_t B = tr.batch;
  for (const Matrix& x : xs) {
    if (x.rows() != B || x.cols() != p.input_dim()) throw ExtentError("batch step has wrong extents");
  }
  tr.x = std::move(xs);
  Matrix h_prev(B, H), c_prev(B, H);
  for (std::size_t t = 0; t < T; ++t) {
    Matrix z = matmul_nt(tr.x[t], p.w_x);
    const Matrix zh = matmul_nt(h_prev, p.w_h);
    Matrix i(B, H), f(B, H), o(B, H), g(B, H), c(B, H), tc(B, H), h(B, H);
    for (std::size_t r = 0; r < B; ++r) {
      auto zr = z.row(r);
      auto zhr = zh.row(r);
      for (std::size_t j = 0; j < 4 * H; ++j) zr[j] += zhr[j] + p.b[j];
      for (std::size_t j = 0; j < H; ++j) {
        i(r, j) = sigmoid(zr[j]);
        f(r, j) = sigmoid(zr[H + j]);
        o(r, j) = sigmoid(zr[2 * H + j]);
        g(r, j) = std::tanh(zr[3 * H + j]);
        c(r, j) = f(r, j) * c_prev(r, j) + i(r, j) * g(r, j);
        tc(r, j) = std::tanh(c(r, j));
        h(r, j) = o(r, j) * tc(r, j);
      }
    }
    h_prev = h;
    c_prev = c;
    tr.i.push_back(std::move(i));
    tr.f.push_back(std::move(f));
    tr.o.push_back(std::move(o));
    tr.g.push_back(std::move(g));
    tr.c.push_back(std::move(c));
    tr.tanh_c.push_back(std::move(tc));
    tr.h.push_back(std::move(h));
  }
  return tr;
}

BatchGrads lstm_batch_backward(const LstmParams& p, const BatchTrace& tr, const std::vector<Matrix>& dh_up) {
  const std::size_t H = p.hidden_dim(), T = tr.h.size(), B = tr.batch;
  if (dh_up.size() != T) throw ExtentError("upstream length differs from trace length");
  BatchGrads g{Matrix(4 * H, p.input_dim()), Matrix(4 * H, H), std::vector<double>(4 * H, 0.0)};
  Matrix dh_carry(B, H), dc(B, H);
  const Matrix zeros(B, H);
  for (std::size_t t = T; t-- > 0;) {
    const Matrix& up = dh_up[t];
    const bool has_up = up.size() != 0;
    if (has_up && (up.rows() != B || up.cols() != H)) throw ExtentError("upstream step has wrong extents");
    const Matrix& c_prev = t ? tr.c[t - 1] : zeros;
    const Matrix& h_prev = t ? tr.h[t - 1] : zeros;
    Matrix dz(B, 4 * H);
    for (std::size_t r = 0; r < B; ++r) {
      for (std::size_t j = 0; j < H; ++j) {
        const double dh = dh_carry(r, j) + (has_up ? up(r, j) : 0.0);
        const double i = tr.i[t](r, j), f = tr.f[t](r, j), o = tr.o[t](r, j), gg = tr.g[t](r, j);
        const double tc = tr.tanh_c[t](r, j);
        const double d_o = dh * tc;
        const double d_c = dc(r, j) + dh * o * (1.0 - tc * tc);
        dc(r, j) = d_c * f;
        dz(r, j) = d_c * gg * i * (1.0 - i);
        dz(r, H + j) = d_c * c_prev(r, j) * f * (1.0 - f);
        dz(r, 2 * H + j) = d_o * o * (1.0 - o);
        dz(r, 3 * H + j) = d_c * i * (1.0 - gg * gg);
      }
    }
    const Matrix gwx = matmul_tn(dz, tr.x[t]);
    const Matrix gwh = matmul_tn(dz, h_prev);
    for (std::size_t e = 0; e < gwx.size(); ++e) g.w_x.storage()[e] += gwx.storage()[e];
    for (std::size_t e = 0; e < gwh.size(); ++e) g.w_h.storage()[e] += gwh.storage()[e];
    for (std::size_t r = 0; r < B; ++r)
      for (std::size_t j = 0; j < 4 * H; ++j) g.b[j] += dz(r, j);
    dh_carry = matmul(dz, p.w_h);
  }
  return g;
}

}  // namespace mpolstm
