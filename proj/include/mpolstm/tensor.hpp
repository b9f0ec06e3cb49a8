// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace mpolstm {

using Shape = std::vector<std::size_t>;

std::size_t shape_product(std::span<const std::size_t> shape);

/// Row-major dense array of doubles with an arbitrary number of modes.
///
/// The last index varies fastest. Every multi-index map in the library
/// (matrix unfoldings, MPO index splits) follows this convention.
class DenseTensor {
 public:
  DenseTensor() = default;
  /// Zero-filled tensor. Every extent must be positive.
  explicit DenseTensor(Shape shape);
  DenseTensor(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t mode) const { return shape_.at(mode); }
  std::size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t linear) { return data_[linear]; }
  double operator[](std::size_t linear) const { return data_[linear]; }

  /// Linear offset of a multi-index.
  std::size_t offset(std::span<const std::size_t> index) const;
  double& at(std::initializer_list<std::size_t> index);
  double at(std::initializer_list<std::size_t> index) const;

  friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Same buffer, new extents. Throws ExtentError if the products differ.
DenseTensor reshape(const DenseTensor& t, Shape new_shape);
DenseTensor reshape(DenseTensor&& t, Shape new_shape);

/// Output mode k is input mode perm[k]; throws ExtentError if perm is not a
/// permutation of 0..rank-1.
DenseTensor permute(const DenseTensor& t, std::span<const std::size_t> perm);
std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> perm);

/// Row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix as_matrix(const DenseTensor& t);  // rank-2 only
DenseTensor as_tensor(const Matrix& m);

Matrix matmul(const Matrix& a, const Matrix& b);
/// a * b^T without forming the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// a^T * b without forming the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
std::vector<double> matvec(const Matrix& a, std::span<const double> x);
std::vector<double> matvec_t(const Matrix& a, std::span<const double> x);

double frobenius_norm(std::span<const double> values);
inline double frobenius_norm(const Matrix& m) { return frobenius_norm(m.data()); }
/// ||a - b||_F; throws ExtentError on size mismatch.
double frobenius_distance(std::span<const double> a, std::span<const double> b);
bool all_finite(std::span<const double> values);

}  // namespace mpolstm
