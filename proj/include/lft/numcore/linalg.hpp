#pragma once

#include <Eigen/Dense>

namespace lft {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kDefaultJitter = 1e-5;
inline constexpr int kJitterRetries = 3;

struct CholeskyFactor {
  Matrix lower;
  double jitter = 0.0;  // jitter actually added to the diagonal
};

/// Lower Cholesky factor of `a + jitter * I`.
///
/// On failure the jitter is multiplied by ten and the factorisation retried,
/// at most `kJitterRetries` times. Throws NotPositiveDefinite when every
/// attempt fails and std::invalid_argument when `a` is not square or not
/// symmetric to 1e-10 relative tolerance.
CholeskyFactor cholesky_with_jitter(const Matrix& a, double jitter = kDefaultJitter);

inline Matrix cholesky(const Matrix& a, double jitter = kDefaultJitter) {
  return cholesky_with_jitter(a, jitter).lower;
}

/// Solves the tridiagonal system with sub-diagonal `lower`, diagonal `diag`
/// and super-diagonal `upper` for every column of `rhs` (Thomas algorithm,
/// no pivoting). Throws SingularSystem when a pivot falls below 1e-14.
Matrix solve_tridiagonal(const Vector& lower, const Vector& diag, const Vector& upper,
                         const Matrix& rhs);

inline Vector solve_tridiagonal(const Vector& lower, const Vector& diag, const Vector& upper,
                                const Vector& rhs) {
  return solve_tridiagonal(lower, diag, upper, Matrix(rhs)).col(0);
}

/// y = A x for the tridiagonal A given by its bands.
Matrix tridiagonal_multiply(const Vector& lower, const Vector& diag, const Vector& upper,
                            const Matrix& x);

/// Dense matrix with the given bands, mostly for tests and diagnostics.
Matrix tridiagonal_dense(const Vector& lower, const Vector& diag, const Vector& upper);

/// L^{-1} b and L^{-T} b for lower-triangular L.
Matrix solve_lower(const Matrix& l, const Matrix& b);
Matrix solve_lower_transpose(const Matrix& l, const Matrix& b);

/// log det(L L^T) = 2 sum log diag(L).
double log_det_from_cholesky(const Matrix& l);

bool all_finite(const Matrix& m);

double softplus(double x);
double inverse_softplus(double y);
double sigmoid(double x);

}  // namespace lft
