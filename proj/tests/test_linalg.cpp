#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "featprior/error.hpp"
#include "featprior/linalg.hpp"
#include "oracles.hpp"

using namespace featprior;

namespace {

double rel_frobenius(const Matrix& a, const Matrix& b) { return frobenius_norm(a - b) / frobenius_norm(b); }

void expect_code(ErrorCode code, auto&& fn) {
  try {
    fn();
    ADD_FAILURE() << "expected " << error_code_name(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

}  // namespace

TEST(Matrix, ConstructionAndShape) {
  Matrix m{{1, 2, 3}, {4, 5, 6}};
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_EQ(m(1, 2), 6.0);
  EXPECT_EQ(m.transposed()(2, 1), 6.0);
  expect_code(ErrorCode::DimensionMismatch, [] { Matrix(2, 2, std::vector<double>{1, 2, 3}); });
  expect_code(ErrorCode::DimensionMismatch, [] { Matrix{{1, 2}, {3}}; });
}

TEST(Matrix, ProductsAgreeWithNaiveOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = oracle::random_matrix(1 + trial % 5, 2 + trial % 3, rng);
    const Matrix b = oracle::random_matrix(a.cols(), 1 + trial % 4, rng);
    const Matrix c = oracle::random_matrix(b.cols(), a.cols(), rng);
    EXPECT_LT(frobenius_norm(matmul(a, b) - oracle::naive_matmul(a, b)), 1e-12);
    EXPECT_LT(frobenius_norm(matmul_nt(a, c) - oracle::naive_matmul(a, oracle::naive_transpose(c))), 1e-12);
    EXPECT_LT(frobenius_norm(matmul_tn(a, a) - oracle::naive_matmul(oracle::naive_transpose(a), a)), 1e-12);
  }
  expect_code(ErrorCode::DimensionMismatch, [] { matmul(Matrix(2, 3), Matrix(2, 3)); });
  expect_code(ErrorCode::DimensionMismatch, [] { Matrix(2, 2) + Matrix(2, 3); });
}

TEST(Matrix, TraceAndInner) {
  const Matrix a{{1, 2}, {3, 4}};
  EXPECT_EQ(trace(a), 5.0);
  EXPECT_EQ(frobenius_inner(a, a), 30.0);
  EXPECT_DOUBLE_EQ(frobenius_norm(a), std::sqrt(30.0));
  expect_code(ErrorCode::DimensionMismatch, [] { trace(Matrix(2, 3)); });
}

TEST(Cholesky, IdentityIsItsOwnFactor) {
  EXPECT_EQ(cholesky(Matrix::identity(3)).lower(), Matrix::identity(3));
}

TEST(Cholesky, HandExpandedTwoByTwo) {
  const auto f = cholesky(Matrix{{4, 2}, {2, 3}});
  EXPECT_DOUBLE_EQ(f.lower()(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(f.lower()(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(f.lower()(1, 1), std::sqrt(2.0));
  EXPECT_EQ(f.lower()(0, 1), 0.0);
}

TEST(Cholesky, IndefiniteRejected) {
  expect_code(ErrorCode::NotPositiveDefinite, [] { cholesky(Matrix{{1, 2}, {2, 1}}); });
  expect_code(ErrorCode::NotPositiveDefinite, [] { cholesky(Matrix{{0, 0}, {0, 1}}); });
  expect_code(ErrorCode::NotPositiveDefinite,
              [] { cholesky(Matrix{{std::numeric_limits<double>::quiet_NaN(), 0}, {0, 1}}); });
}

TEST(Cholesky, AsymmetryBeyondToleranceRejected) {
  expect_code(ErrorCode::NotSymmetric, [] { cholesky(Matrix{{4, 2}, {2.001, 3}}); });
  expect_code(ErrorCode::DimensionMismatch, [] { cholesky(Matrix(2, 3)); });
}

TEST(Cholesky, TinyAsymmetryIsSymmetrised) {
  const auto f = cholesky(Matrix{{4, 2}, {2 + 1e-12, 3}});
  EXPECT_LT(rel_frobenius(reconstruct(f), Matrix{{4, 2 + 5e-13}, {2 + 5e-13, 3}}), 1e-14);
}

TEST(Cholesky, RandomSpdRoundTrip) {
  std::mt19937_64 rng(11);
  for (std::size_t n = 1; n <= 16; ++n) {
    const Matrix a = oracle::random_spd(n, rng);
    const auto f = cholesky(a);
    EXPECT_LT(rel_frobenius(reconstruct(f), a), 1e-8) << n;
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_GT(f.lower()(i, i), 0.0);
      for (std::size_t j = i + 1; j < n; ++j) EXPECT_EQ(f.lower()(i, j), 0.0);
    }
  }
}

TEST(LogDet, Examples) {
  EXPECT_EQ(log_det(cholesky(Matrix::identity(4))), 0.0);
  EXPECT_NEAR(log_det(cholesky(Matrix{{2, 0}, {0, 2}})), 1.386294, 1e-6);
  EXPECT_NEAR(log_det(cholesky(Matrix{{4, 2}, {2, 3}})), std::log(8.0), 1e-12);
}

TEST(LogDet, MatchesJacobiEigenOracle) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 1 + trial % 16;
    const Matrix a = oracle::random_spd(n, rng, 0.5);
    EXPECT_NEAR(log_det(cholesky(a)), oracle::log_det_eigen(a), 1e-6) << n;
  }
}

TEST(SolveSpd, Examples) {
  const Matrix b{{3}, {-1}};
  EXPECT_EQ(solve_spd(cholesky(Matrix::identity(2)), b), b);
  const Matrix inv = solve_spd(cholesky(Matrix{{2, 0}, {0, 2}}), Matrix::identity(2));
  EXPECT_LT(frobenius_norm(inv - Matrix{{0.5, 0}, {0, 0.5}}), 1e-15);
  const Matrix x = solve_spd(cholesky(Matrix{{4, 2}, {2, 3}}), Matrix{{1}, {1}});
  EXPECT_NEAR(x(0, 0), 0.125, 1e-15);
  EXPECT_NEAR(x(1, 0), 0.25, 1e-15);
  expect_code(ErrorCode::DimensionMismatch, [] { solve_spd(cholesky(Matrix::identity(2)), Matrix(3, 1)); });
}

TEST(SolveSpd, RecoversRandomSolutions) {
  std::mt19937_64 rng(17);
  for (std::size_t n = 1; n <= 16; ++n) {
    const Matrix a = oracle::random_spd(n, rng);
    const Matrix x = oracle::random_matrix(n, 3, rng);
    const Matrix got = solve_spd(cholesky(a), oracle::naive_matmul(a, x));
    EXPECT_LT(rel_frobenius(got, x), 1e-7) << n;
  }
}

TEST(TraceSolve, Examples) {
  const Matrix b{{1, 7}, {2, 5}};
  EXPECT_DOUBLE_EQ(trace_solve(cholesky(Matrix::identity(2)), b), 6.0);
  EXPECT_DOUBLE_EQ(trace_solve(cholesky(Matrix{{2, 0}, {0, 2}}), Matrix{{4, 0}, {0, 4}}), 4.0);
  // Adjugate inverse of [[4,2],[2,3]] is [[3,-2],[-2,4]]/8.
  const Matrix inv{{3.0 / 8, -2.0 / 8}, {-2.0 / 8, 4.0 / 8}};
  const Matrix rhs{{2, 1}, {1, 2}};
  EXPECT_NEAR(trace_solve(cholesky(Matrix{{4, 2}, {2, 3}}), rhs), trace(oracle::naive_matmul(inv, rhs)), 1e-14);
  expect_code(ErrorCode::DimensionMismatch, [] { trace_solve(cholesky(Matrix::identity(2)), Matrix(2, 3)); });
}

TEST(TraceSolve, SelfSolveIsDimension) {
  std::mt19937_64 rng(23);
  for (std::size_t n = 1; n <= 16; ++n) {
    const Matrix a = oracle::random_spd(n, rng);
    EXPECT_NEAR(trace_solve(cholesky(a), a), static_cast<double>(n), 1e-8);
  }
}

TEST(InverseSpd, MatchesEigenOracle) {
  std::mt19937_64 rng(29);
  for (std::size_t n = 1; n <= 10; ++n) {
    const Matrix a = oracle::random_spd(n, rng);
    EXPECT_LT(rel_frobenius(inverse_spd(cholesky(a)), oracle::inverse_eigen(a)), 1e-9);
  }
}
