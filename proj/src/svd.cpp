// SPDX-License-Identifier: Apache-2.0
#include "mpolstm/svd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mpolstm/error.hpp"

namespace mpolstm {

namespace {

constexpr int kMaxSweeps = 80;

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void rotate(double* a, double* b, std::size_t n, double c, double s) {
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a[i];
    const double y = b[i];
    a[i] = c * x - s * y;
    b[i] = s * x + c * y;
  }
}

// Thin SVD of a tall (m >= n) matrix given as n contiguous columns of length m.
// On return `cols` holds U*S column-wise and `v` holds V column-wise.
void hestenes(std::vector<double>& cols, std::vector<double>& v, std::size_t m, std::size_t n) {
  v.assign(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) v[j * n + j] = 1.0;
  const double tol = std::numeric_limits<double>::epsilon();

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      double* gp = cols.data() + p * m;
      for (std::size_t q = p + 1; q < n; ++q) {
        double* gq = cols.data() + q * m;
        const double alpha = dot(gp, gp, m);
        const double beta = dot(gq, gq, m);
        const double gamma = dot(gp, gq, m);
        if (gamma == 0.0 || std::fabs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        rotate(gp, gq, m, c, s);
        rotate(v.data() + p * n, v.data() + q * n, n, c, s);
      }
    }
    if (!rotated) return;
  }
  throw NumericError("one-sided Jacobi SVD did not converge");
}

struct FullSvd {
  Matrix u;  // m x k
  std::vector<double> s;
  Matrix vt;  // k x n
};

FullSvd thin_svd(const Matrix& a) {
  if (!all_finite(a.data())) throw NumericError("SVD input contains non-finite values");
  const bool wide = a.rows() < a.cols();
  // Work on the tall orientation; columns of the tall matrix stored contiguously.
  const std::size_t m = wide ? a.cols() : a.rows();
  const std::size_t n = wide ? a.rows() : a.cols();
  std::vector<double> cols(m * n);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (wide) cols[i * m + j] = a(i, j);
      else cols[j * m + i] = a(i, j);
    }

  std::vector<double> v;
  hestenes(cols, v, m, n);

  std::vector<double> norms(n);
  for (std::size_t j = 0; j < n; ++j) norms[j] = std::sqrt(dot(&cols[j * m], &cols[j * m], m));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

  // Tall factors: left (m x n) = normalized columns, right (n x n) = v.
  Matrix left(m, n), right_t(n, n);
  std::vector<double> s(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t j = order[r];
    s[r] = norms[j];
    const double inv = norms[j] > 0.0 ? 1.0 / norms[j] : 0.0;
    for (std::size_t i = 0; i < m; ++i) left(i, r) = cols[j * m + i] * inv;
    for (std::size_t i = 0; i < n; ++i) right_t(r, i) = v[j * n + i];
  }

  FullSvd out;
  out.s = std::move(s);
  if (wide) {
    // a^T = left * S * right_t  =>  a = right_t^T * S * left^T
    out.u = transpose(right_t);
    out.vt = transpose(left);
  } else {
    out.u = std::move(left);
    out.vt = std::move(right_t);
  }
  return out;
}

}  // namespace

std::vector<double> singular_values(const Matrix& a) { return thin_svd(a).s; }

SvdResult truncated_svd(const Matrix& a, std::size_t max_rank) {
  if (max_rank == 0) throw ExtentError("truncated_svd requires max_rank >= 1");
  FullSvd full = thin_svd(a);
  const std::size_t k = full.s.size();
  const double cutoff = k ? static_cast<double>(std::max(a.rows(), a.cols())) *
                                std::numeric_limits<double>::epsilon() * full.s[0]
                          : 0.0;
  std::size_t numerical_rank = 0;
  while (numerical_rank < k && full.s[numerical_rank] > cutoff) ++numerical_rank;
  const std::size_t r = std::min(max_rank, numerical_rank);

  SvdResult res;
  res.s.assign(full.s.begin(), full.s.begin() + static_cast<std::ptrdiff_t>(r));
  std::vector<double> tail(full.s.begin() + static_cast<std::ptrdiff_t>(r), full.s.end());
  res.discarded_norm = frobenius_norm(tail);

  const std::size_t m = a.rows(), n = a.cols();
  res.u = Matrix(m, r);
  res.vt = Matrix(r, n);
  for (std::size_t c = 0; c < r; ++c) {
    std::size_t pivot = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double mag = std::fabs(full.u(i, c));
      if (mag > best) {
        best = mag;
        pivot = i;
      }
    }
    const double sign = full.u(pivot, c) < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < m; ++i) res.u(i, c) = sign * full.u(i, c);
    for (std::size_t j = 0; j < n; ++j) res.vt(c, j) = sign * full.vt(c, j);
  }
  return res;
}

Matrix svd_reconstruct(const SvdResult& r) {
  Matrix us = r.u;
  for (std::size_t i = 0; i < us.rows(); ++i)
    for (std::size_t c = 0; c < us.cols(); ++c) us(i, c) *= r.s[c];
  if (r.rank() == 0) return Matrix(r.u.rows(), r.vt.cols());
  return matmul(us, r.vt);
}

}  // namespace mpolstm
