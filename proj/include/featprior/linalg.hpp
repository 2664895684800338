#pragma once

// Dense row-major matrices and SPD routines backing the GP divergence.
// Everything here is 64-bit; callers that hold lower precision data convert
// on the way in.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace featprior {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> diag);
  static Matrix column(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool is_square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  Matrix transposed() const;
  bool all_finite() const noexcept;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s) noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

Matrix matmul(const Matrix& a, const Matrix& b);
// a * bᵀ without materialising the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// aᵀ * b without materialising the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);

double trace(const Matrix& a);
double frobenius_norm(const Matrix& a);
// Σ a_ij b_ij
double frobenius_inner(const Matrix& a, const Matrix& b);

// Lower-triangular Cholesky factor L with L·Lᵀ = A. Only constructible
// through cholesky(), so a held factor is always valid.
class CholeskyFactor {
 public:
  const Matrix& lower() const noexcept { return lower_; }
  std::size_t size() const noexcept { return lower_.rows(); }

 private:
  explicit CholeskyFactor(Matrix lower) : lower_(std::move(lower)) {}
  friend CholeskyFactor cholesky(const Matrix& a);

  Matrix lower_;
};

inline constexpr double kSymmetryTolerance = 1e-10;

// Unpivoted Cholesky. Inputs within kSymmetryTolerance (relative to the
// largest entry) of symmetric are symmetrised first; anything further off is
// NotSymmetric. A non-positive pivot is NotPositiveDefinite.
CholeskyFactor cholesky(const Matrix& a);

double log_det(const CholeskyFactor& f);

// Solves A·X = B by forward then back substitution.
Matrix solve_spd(const CholeskyFactor& f, const Matrix& b);

// trace(A⁻¹·B), never forming A⁻¹.
double trace_solve(const CholeskyFactor& f, const Matrix& b);

// A⁻¹ via solve against the identity; used where the full inverse is
// genuinely needed (feature gradients).
Matrix inverse_spd(const CholeskyFactor& f);

Matrix reconstruct(const CholeskyFactor& f);

}  // namespace featprior
