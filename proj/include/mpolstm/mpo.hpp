// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "mpolstm/tensor.hpp"

namespace mpolstm {

/// Factorization blueprint for an N_y x N_x matrix.
///
/// Row y is split into digits (j_1..j_n) with extents output_factors and
/// column x into (i_1..i_n) with extents input_factors, both row-major
/// (j_1 and i_1 most significant). bond_dims holds d_0..d_n with
/// d_0 = d_n = 1.
struct MpoPlan {
  std::vector<std::size_t> input_factors;
  std::vector<std::size_t> output_factors;
  std::vector<std::size_t> bond_dims;

  std::size_t num_cores() const { return input_factors.size(); }
  std::size_t input_dim() const;
  std::size_t output_dim() const;

  /// Largest useful bond at cut k (0..n): the smaller of the two sides'
  /// combined (I*J) extents.
  std::size_t max_bond(std::size_t cut) const;

  /// Throws ExtentError unless factors and bonds are consistent.
  void validate() const;

  /// Every interior bond at its maximum; decomposition with it is exact.
  static MpoPlan full(std::vector<std::size_t> input_factors,
                      std::vector<std::size_t> output_factors);
  /// Every interior bond set to min(d, max_bond(cut)).
  static MpoPlan uniform(std::vector<std::size_t> input_factors,
                         std::vector<std::size_t> output_factors, std::size_t d);

  friend bool operator==(const MpoPlan&, const MpoPlan&) = default;
};

/// Number of scalars held by the cores: sum_k I_k J_k d_{k-1} d_k.
std::size_t parameter_count(const MpoPlan& plan);

/// Chain of rank-4 cores w^(k) with extents [d_{k-1}, J_k, I_k, d_k].
class MpoOperator {
 public:
  MpoOperator() = default;
  /// Throws ExtentError if the cores do not match the plan.
  MpoOperator(MpoPlan plan, std::vector<DenseTensor> cores);

  const MpoPlan& plan() const { return plan_; }
  std::size_t num_cores() const { return cores_.size(); }
  const std::vector<DenseTensor>& cores() const { return cores_; }
  const DenseTensor& core(std::size_t k) const { return cores_.at(k); }
  /// Mutable core values; extents are fixed.
  std::span<double> core_values(std::size_t k) { return cores_.at(k).data(); }
  std::size_t parameter_count() const { return mpolstm::parameter_count(plan_); }

  friend bool operator==(const MpoOperator&, const MpoOperator&) = default;

 private:
  MpoPlan plan_;
  std::vector<DenseTensor> cores_;
};

struct MpoDecomposition {
  MpoOperator op;
  /// Frobenius norm of everything truncated, combined over all cuts.
  double discarded_norm = 0.0;
  std::vector<double> cut_discarded;  // one per interior cut
};

/// Left-to-right TT-SVD of an N_y x N_x matrix.
///
/// The matrix is viewed as a tensor [J_1..J_n, I_1..I_n], permuted to the
/// interleaved order (J_1 I_1)(J_2 I_2)..., and split one core at a time with
/// a truncated SVD at each cut capped by plan.bond_dims. Left cores come out
/// orthonormal, so the reconstruction error equals discarded_norm. If a cut's
/// numerical rank is below its bond dimension the core is padded with zeros so
/// the operator always has the planned extents.
MpoDecomposition decompose(const Matrix& w, const MpoPlan& plan);

/// Contracts all cores back into the dense N_y x N_x matrix.
Matrix reconstruct(const MpoOperator& op);

/// op * x computed core by core; never forms the dense matrix. Peak working
/// memory is max_k(J_1..J_k * d_k * I_{k+1}..I_n) doubles.
std::vector<double> apply(const MpoOperator& op, std::span<const double> x);

/// Row-wise apply of a B x N_x batch. Serial; bitwise identical to calling
/// apply on each row.
Matrix apply_batch(const MpoOperator& op, const Matrix& xs);

struct MpoGradient {
  std::vector<DenseTensor> cores;  // same extents as the operator's cores
  std::vector<double> input;       // d/dx
};

/// Gradients of upstream . apply(op, x) with respect to every core and x,
/// from forward partial contractions of x and backward partial contractions
/// of upstream.
MpoGradient grad_cores(const MpoOperator& op, std::span<const double> x,
                       std::span<const double> upstream);

/// Gradients of <g, reconstruct(op)> with respect to every core, for a dense
/// N_y x N_x cotangent g.
std::vector<DenseTensor> reconstruct_grad(const MpoOperator& op, const Matrix& g);

/// Per-core standard deviation giving reconstructed entries a variance of
/// `target_variance` when cores are i.i.d. zero-mean normal.
double core_std_for_variance(const MpoPlan& plan, double target_variance);

/// Operator with i.i.d. N(0, core_std^2) core entries.
MpoOperator random_operator(const MpoPlan& plan, double core_std, std::mt19937_64& rng);

}  // namespace mpolstm
