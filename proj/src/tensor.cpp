// SPDX-License-Identifier: Apache-2.0
#include "mpolstm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mpolstm/error.hpp"

namespace mpolstm {

namespace {

std::string shape_string(std::span<const std::size_t> shape) {
  std::string s = "[";
  for (std::size_t k = 0; k < shape.size(); ++k) {
    if (k) s += ",";
    s += std::to_string(shape[k]);
  }
  return s + "]";
}

void require_positive(std::span<const std::size_t> shape) {
  for (auto e : shape) {
    if (e == 0) throw ExtentError("zero extent in shape " + shape_string(shape));
  }
}

}  // namespace

std::size_t shape_product(std::span<const std::size_t> shape) {
  std::size_t p = 1;
  for (auto e : shape) p *= e;
  return p;
}

DenseTensor::DenseTensor(Shape shape) : shape_(std::move(shape)) {
  require_positive(shape_);
  data_.assign(shape_product(shape_), 0.0);
}

DenseTensor::DenseTensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  require_positive(shape_);
  if (shape_product(shape_) != data_.size()) {
    throw ExtentError("shape " + shape_string(shape_) + " holds " +
                      std::to_string(shape_product(shape_)) + " elements, got " +
                      std::to_string(data_.size()));
  }
}

std::size_t DenseTensor::offset(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size()) throw ExtentError("index rank mismatch");
  std::size_t off = 0;
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= shape_[k]) throw ExtentError("index out of range");
    off = off * shape_[k] + index[k];
  }
  return off;
}

double& DenseTensor::at(std::initializer_list<std::size_t> index) {
  return data_[offset({index.begin(), index.size()})];
}

double DenseTensor::at(std::initializer_list<std::size_t> index) const {
  return data_[offset({index.begin(), index.size()})];
}

DenseTensor reshape(const DenseTensor& t, Shape new_shape) {
  return reshape(DenseTensor(t), std::move(new_shape));
}

DenseTensor reshape(DenseTensor&& t, Shape new_shape) {
  if (shape_product(new_shape) != t.size()) {
    throw ExtentError("cannot reshape " + shape_string(t.shape()) + " to " +
                      shape_string(new_shape));
  }
  return DenseTensor(std::move(new_shape), std::move(t.storage()));
}

std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> perm) {
  std::vector<std::size_t> inv(perm.size(), perm.size());
  for (std::size_t k = 0; k < perm.size(); ++k) {
    if (perm[k] >= perm.size() || inv[perm[k]] != perm.size()) {
      throw ExtentError("not a permutation: " + shape_string(perm));
    }
    inv[perm[k]] = k;
  }
  return inv;
}

DenseTensor permute(const DenseTensor& t, std::span<const std::size_t> perm) {
  const std::size_t r = t.rank();
  if (perm.size() != r) throw ExtentError("permutation length differs from tensor rank");
  inverse_permutation(perm);  // validates

  Shape out_shape(r);
  for (std::size_t k = 0; k < r; ++k) out_shape[k] = t.extent(perm[k]);

  // Input strides, reordered so that out_stride[k] is the input stride of the
  // mode that lands in output position k.
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t k = r; k-- > 1;) in_stride[k - 1] = in_stride[k] * t.extent(k);
  std::vector<std::size_t> src_stride(r);
  for (std::size_t k = 0; k < r; ++k) src_stride[k] = in_stride[perm[k]];

  std::vector<double> out(t.size());
  std::vector<std::size_t> idx(r, 0);
  std::size_t src = 0;
  const auto in = t.data();
  for (std::size_t dst = 0; dst < out.size(); ++dst) {
    out[dst] = in[src];
    for (std::size_t k = r; k-- > 0;) {
      ++idx[k];
      src += src_stride[k];
      if (idx[k] < out_shape[k]) break;
      src -= src_stride[k] * out_shape[k];
      idx[k] = 0;
    }
  }
  return DenseTensor(std::move(out_shape), std::move(out));
}

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ExtentError("matrix " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                      " given " + std::to_string(data_.size()) + " values");
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix as_matrix(const DenseTensor& t) {
  if (t.rank() != 2) throw ExtentError("tensor is not rank 2");
  return Matrix(t.extent(0), t.extent(1), t.storage());
}

DenseTensor as_tensor(const Matrix& m) { return DenseTensor({m.rows(), m.cols()}, m.storage()); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ExtentError("matmul inner extents differ: " + std::to_string(a.cols()) + " vs " +
                      std::to_string(b.rows()));
  }
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto crow = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ExtentError("matmul_nt inner extents differ");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto arow = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto brow = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += arow[k] * brow[k];
      c(i, j) = s;
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ExtentError("matmul_tn inner extents differ");
  Matrix c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto arow = a.row(k);
    auto brow = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      auto crow = c.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aki * brow[j];
    }
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

std::vector<double> matvec(const Matrix& a, std::span<const double> x) {
  if (x.size() != a.cols()) throw ExtentError("matvec extent mismatch");
  std::vector<double> y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto arow = a.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += arow[j] * x[j];
    y[i] = s;
  }
  return y;
}

std::vector<double> matvec_t(const Matrix& a, std::span<const double> x) {
  if (x.size() != a.rows()) throw ExtentError("matvec_t extent mismatch");
  std::vector<double> y(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto arow = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) y[j] += arow[j] * x[i];
  }
  return y;
}

double frobenius_norm(std::span<const double> values) {
  // Scaled accumulation keeps tiny and huge entries from under/overflowing.
  double scale = 0.0;
  double ssq = 1.0;
  for (double v : values) {
    if (v == 0.0) continue;
    const double a = std::fabs(v);
    if (scale < a) {
      ssq = 1.0 + ssq * (scale / a) * (scale / a);
      scale = a;
    } else {
      ssq += (a / scale) * (a / scale);
    }
  }
  return scale * std::sqrt(ssq);
}

double frobenius_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ExtentError("frobenius_distance size mismatch");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return frobenius_norm(d);
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace mpolstm
