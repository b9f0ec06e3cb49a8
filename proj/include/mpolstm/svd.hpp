// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "mpolstm/tensor.hpp"

namespace mpolstm {

/// Rank-r factorization a ~= u * diag(s) * vt.
struct SvdResult {
  Matrix u;                  // m x r, orthonormal columns
  std::vector<double> s;     // r values, non-increasing, >= 0
  Matrix vt;                 // r x n, orthonormal rows
  double discarded_norm = 0.0;  // sqrt of the sum of squares of dropped singular values

  std::size_t rank() const { return s.size(); }
};

/// All min(m, n) singular values of `a`, non-increasing.
std::vector<double> singular_values(const Matrix& a);

/// Best rank-min(max_rank, numerical rank) approximation of `a` in the
/// Frobenius norm.
///
/// Computed with one-sided (Hestenes) Jacobi rotations, which are serial and
/// fully deterministic: identical input bytes give identical output bytes.
/// Singular values at or below max(m, n) * eps * s_max are treated as zero
/// and never returned. Each column of `u` is sign-normalized so its entry of
/// largest magnitude (lowest row on ties) is non-negative; the matching row of
/// `vt` is flipped with it.
///
/// Throws NumericError on non-finite input, or if the rotations fail to
/// converge, and ExtentError if max_rank is zero.
SvdResult truncated_svd(const Matrix& a, std::size_t max_rank);

/// u * diag(s) * vt.
Matrix svd_reconstruct(const SvdResult& r);

}  // namespace mpolstm
