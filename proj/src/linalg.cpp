#include "featprior/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "featprior/error.hpp"

namespace featprior {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCode::DimensionMismatch,
                std::string(what) + ": " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                    " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), data_(std::move(entries)) {
  if (data_.size() != rows * cols) {
    throw Error(ErrorCode::DimensionMismatch, "entry count does not match rows x cols");
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw Error(ErrorCode::DimensionMismatch, "ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
  Matrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

Matrix Matrix::column(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same_shape(*this, other, "matrix add");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_same_shape(*this, other, "matrix subtract");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) noexcept {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw Error(ErrorCode::DimensionMismatch, "matmul inner dimensions");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto orow = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw Error(ErrorCode::DimensionMismatch, "matmul_nt inner dimensions");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto arow = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto brow = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += arow[k] * brow[k];
      out(i, j) = s;
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw Error(ErrorCode::DimensionMismatch, "matmul_tn inner dimensions");
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto arow = a.row(k);
    auto brow = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      auto orow = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aki * brow[j];
    }
  }
  return out;
}

double trace(const Matrix& a) {
  if (!a.is_square()) throw Error(ErrorCode::DimensionMismatch, "trace of non-square matrix");
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, i);
  return s;
}

double frobenius_norm(const Matrix& a) { return std::sqrt(frobenius_inner(a, a)); }

double frobenius_inner(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "frobenius inner product");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
  return s;
}

CholeskyFactor cholesky(const Matrix& a) {
  if (!a.is_square()) throw Error(ErrorCode::DimensionMismatch, "cholesky of non-square matrix");
  const std::size_t n = a.rows();

  double scale = 0.0;
  double asym = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      scale = std::max(scale, std::abs(a(i, j)));
      asym = std::max(asym, std::abs(a(i, j) - a(j, i)));
    }
  }
  if (!a.all_finite()) throw Error(ErrorCode::NotPositiveDefinite, "non-finite entry");
  if (asym > kSymmetryTolerance * scale) {
    throw Error(ErrorCode::NotSymmetric, "max |a - a^T| = " + std::to_string(asym));
  }

  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) {
      throw Error(ErrorCode::NotPositiveDefinite, "pivot " + std::to_string(j) + " = " + std::to_string(d));
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = 0.5 * (a(i, j) + a(j, i));
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return CholeskyFactor(std::move(l));
}

double log_det(const CholeskyFactor& f) {
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += std::log(f.lower()(i, i));
  return 2.0 * s;
}

Matrix solve_spd(const CholeskyFactor& f, const Matrix& b) {
  const Matrix& l = f.lower();
  const std::size_t n = f.size();
  if (b.rows() != n) throw Error(ErrorCode::DimensionMismatch, "solve_spd right-hand side rows");
  Matrix x = b;
  const std::size_t m = b.cols();
  // L·y = b
  for (std::size_t i = 0; i < n; ++i) {
    auto xi = x.row(i);
    for (std::size_t k = 0; k < i; ++k) {
      const double lik = l(i, k);
      auto xk = x.row(k);
      for (std::size_t c = 0; c < m; ++c) xi[c] -= lik * xk[c];
    }
    for (std::size_t c = 0; c < m; ++c) xi[c] /= l(i, i);
  }
  // Lᵀ·x = y
  for (std::size_t ii = n; ii-- > 0;) {
    auto xi = x.row(ii);
    for (std::size_t k = ii + 1; k < n; ++k) {
      const double lki = l(k, ii);
      auto xk = x.row(k);
      for (std::size_t c = 0; c < m; ++c) xi[c] -= lki * xk[c];
    }
    for (std::size_t c = 0; c < m; ++c) xi[c] /= l(ii, ii);
  }
  return x;
}

double trace_solve(const CholeskyFactor& f, const Matrix& b) {
  if (!b.is_square() || b.rows() != f.size()) {
    throw Error(ErrorCode::DimensionMismatch, "trace_solve operand must be square and conform");
  }
  return trace(solve_spd(f, b));
}

Matrix inverse_spd(const CholeskyFactor& f) { return solve_spd(f, Matrix::identity(f.size())); }

Matrix reconstruct(const CholeskyFactor& f) { return matmul_nt(f.lower(), f.lower()); }

}  // namespace featprior
