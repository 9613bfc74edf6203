#include "lft/numcore/linalg.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "lft/errors.hpp"

namespace lft {

namespace {

void require_symmetric(const Matrix& a) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw std::invalid_argument("cholesky: matrix must be square and non-empty");
  }
  const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * scale) {
    std::ostringstream msg;
    msg << "cholesky: matrix not symmetric (max asymmetry " << asym << ")";
    throw std::invalid_argument(msg.str());
  }
}

}  // namespace

CholeskyFactor cholesky_with_jitter(const Matrix& a, double jitter) {
  require_symmetric(a);
  if (jitter < 0.0) throw std::invalid_argument("cholesky: jitter must be nonnegative");
  const Index n = a.rows();
  double current = jitter;
  for (int attempt = 0; attempt <= kJitterRetries; ++attempt) {
    Matrix shifted = a;
    shifted.diagonal().array() += current;
    Eigen::LLT<Matrix> llt(shifted);
    if (llt.info() == Eigen::Success) {
      Matrix l = llt.matrixL();
      bool ok = true;
      for (Index i = 0; i < n; ++i) {
        if (!(l(i, i) > 0.0) || !std::isfinite(l(i, i))) ok = false;
      }
      if (ok) return {std::move(l), current};
    }
    if (current == 0.0) break;
    current *= 10.0;
  }
  std::ostringstream msg;
  msg << "cholesky: matrix of size " << n << " not positive definite (jitter up to " << current
      << ")";
  throw NotPositiveDefinite(msg.str());
}

Matrix solve_tridiagonal(const Vector& lower, const Vector& diag, const Vector& upper,
                         const Matrix& rhs) {
  const Index n = diag.size();
  if (n == 0 || lower.size() != n - 1 || upper.size() != n - 1 || rhs.rows() != n) {
    throw DimensionMismatch("solve_tridiagonal: band or rhs sizes inconsistent");
  }
  constexpr double kMinPivot = 1e-14;
  Vector c_prime(n);
  Matrix d_prime(n, rhs.cols());
  double pivot = diag(0);
  if (std::abs(pivot) < kMinPivot) throw SingularSystem("solve_tridiagonal: zero pivot at row 0");
  c_prime(0) = n > 1 ? upper(0) / pivot : 0.0;
  d_prime.row(0) = rhs.row(0) / pivot;
  for (Index i = 1; i < n; ++i) {
    pivot = diag(i) - lower(i - 1) * c_prime(i - 1);
    if (std::abs(pivot) < kMinPivot) {
      throw SingularSystem("solve_tridiagonal: zero pivot at row " + std::to_string(i));
    }
    c_prime(i) = i + 1 < n ? upper(i) / pivot : 0.0;
    d_prime.row(i) = (rhs.row(i) - lower(i - 1) * d_prime.row(i - 1)) / pivot;
  }
  Matrix x(n, rhs.cols());
  x.row(n - 1) = d_prime.row(n - 1);
  for (Index i = n - 2; i >= 0; --i) {
    x.row(i) = d_prime.row(i) - c_prime(i) * x.row(i + 1);
  }
  return x;
}

Matrix tridiagonal_multiply(const Vector& lower, const Vector& diag, const Vector& upper,
                            const Matrix& x) {
  const Index n = diag.size();
  if (x.rows() != n) throw DimensionMismatch("tridiagonal_multiply: size mismatch");
  Matrix y(n, x.cols());
  for (Index i = 0; i < n; ++i) {
    y.row(i) = diag(i) * x.row(i);
    if (i > 0) y.row(i) += lower(i - 1) * x.row(i - 1);
    if (i + 1 < n) y.row(i) += upper(i) * x.row(i + 1);
  }
  return y;
}

Matrix tridiagonal_dense(const Vector& lower, const Vector& diag, const Vector& upper) {
  const Index n = diag.size();
  Matrix a = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    a(i, i) = diag(i);
    if (i > 0) a(i, i - 1) = lower(i - 1);
    if (i + 1 < n) a(i, i + 1) = upper(i);
  }
  return a;
}

Matrix solve_lower(const Matrix& l, const Matrix& b) {
  return l.triangularView<Eigen::Lower>().solve(b);
}

Matrix solve_lower_transpose(const Matrix& l, const Matrix& b) {
  return l.transpose().triangularView<Eigen::Upper>().solve(b);
}

double log_det_from_cholesky(const Matrix& l) {
  return 2.0 * l.diagonal().array().log().sum();
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

double softplus(double x) {
  // log(1 + e^x) without overflow
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double inverse_softplus(double y) {
  if (!(y > 0.0)) throw DomainError("inverse_softplus: argument must be positive");
  return y > 30.0 ? y + std::log(-std::expm1(-y)) : std::log(std::expm1(y));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace lft
