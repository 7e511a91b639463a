#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "topologic/core.hpp"

namespace topologic::nn {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows_ * cols_) {
      throw InvalidInput("matrix storage has " + std::to_string(data_.size()) + " values, expected " +
                         std::to_string(rows_ * cols_));
    }
  }
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw InvalidInput("ragged matrix initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix scalar(double v) { return Matrix(1, 1, v); }
  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t k) { return data_[k]; }
  double operator[](std::size_t k) const { return data_[k]; }

  std::span<double> values() & { return data_; }
  std::span<const double> values() const& { return data_; }
  // Temporaries hand over their storage so range-for over them stays valid.
  std::vector<double> values() && { return std::move(data_); }
  std::vector<double> values() const&& { return data_; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  double item() const {
    if (data_.size() != 1) throw InvalidInput("item() needs a 1x1 matrix, got " + shape());
    return data_[0];
  }

  std::string shape() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  Matrix& operator+=(const Matrix& o) {
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw InvalidInput("matmul shape mismatch: " + a.shape() + " * " + b.shape());
  Matrix out(a.rows(), b.cols());
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      if (av == 0.0) continue;
      const double* br = b.row(p).data();
      for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
    }
  }
  return out;
}

/// a^T * b without materializing the transpose.
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw InvalidInput("matmul_tn shape mismatch: " + a.shape() + "^T * " + b.shape());
  Matrix out(a.cols(), b.cols());
  for (std::size_t p = 0; p < a.rows(); ++p) {
    const double* br = b.row(p).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double av = a(p, i);
      if (av == 0.0) continue;
      double* o = out.row(i).data();
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += av * br[j];
    }
  }
  return out;
}

/// a * b^T without materializing the transpose.
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw InvalidInput("matmul_nt shape mismatch: " + a.shape() + " * " + b.shape() + "^T");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ar = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* br = b.row(j).data();
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += ar[p] * br[p];
      out(i, j) = s;
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

}  // namespace topologic::nn
