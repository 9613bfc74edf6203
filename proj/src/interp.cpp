#include "lft/interp.hpp"

#include <algorithm>
#include <cmath>

#include "lft/errors.hpp"

namespace lft::interp {

namespace {

void check_knots(std::span<const double> t) {
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (t[i] == t[i - 1]) throw DuplicateKnot("spline: duplicate knot at " + std::to_string(t[i]));
    if (!(t[i] > t[i - 1])) throw NonMonotonicKnots("spline: knots must be strictly increasing");
  }
}

// Second derivatives at the knots for every column of y (natural ends).
Matrix second_derivatives(std::span<const double> t, const Matrix& y) {
  const std::size_t n = t.size();
  Matrix m = Matrix::Zero(static_cast<Index>(n), y.cols());
  if (n < 3) return m;
  const Index inner = static_cast<Index>(n - 2);
  Vector lower(inner - 1), diag(inner), upper(inner - 1);
  Matrix rhs(inner, y.cols());
  for (Index i = 0; i < inner; ++i) {
    const std::size_t k = static_cast<std::size_t>(i) + 1;
    const double h0 = t[k] - t[k - 1];
    const double h1 = t[k + 1] - t[k];
    diag(i) = 2.0 * (h0 + h1);
    if (i > 0) lower(i - 1) = h0;
    if (i + 1 < inner) upper(i) = h1;
    const Index r = static_cast<Index>(k);
    rhs.row(i) = 6.0 * ((y.row(r + 1) - y.row(r)) / h1 - (y.row(r) - y.row(r - 1)) / h0);
  }
  m.middleRows(1, inner) = solve_tridiagonal(lower, diag, upper, rhs);
  return m;
}

}  // namespace

CubicSpline fit_natural_cubic(std::span<const double> t, std::span<const double> y) {
  if (t.size() != y.size()) throw LengthMismatch("spline: knot and value counts differ");
  if (t.size() < 2) throw std::invalid_argument("spline: need at least two knots");
  check_knots(t);
  const std::size_t n = t.size();
  CubicSpline s;
  s.knots_.assign(t.begin(), t.end());
  // Scalar Thomas sweep for the interior second derivatives; c_ holds the
  // eliminated super-diagonal and d_ the eliminated right-hand side until
  // the back substitution below overwrites them.
  std::vector<double> m(n, 0.0);
  s.c_.assign(n, 0.0);
  s.d_.assign(n, 0.0);
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const double h0 = t[k] - t[k - 1];
    const double h1 = t[k + 1] - t[k];
    const double rhs = 6.0 * ((y[k + 1] - y[k]) / h1 - (y[k] - y[k - 1]) / h0);
    const double lower = k > 1 ? h0 : 0.0;
    const double pivot = 2.0 * (h0 + h1) - lower * s.c_[k - 1];
    s.c_[k] = h1 / pivot;
    s.d_[k] = (rhs - lower * s.d_[k - 1]) / pivot;
  }
  for (std::size_t k = n - 1; k-- > 1;) m[k] = s.d_[k] - (k + 2 < n ? s.c_[k] * m[k + 1] : 0.0);
  s.a_.resize(n - 1);
  s.b_.resize(n - 1);
  s.c_.resize(n - 1);
  s.d_.resize(n - 1);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double h = t[k + 1] - t[k];
    s.a_[k] = y[k];
    s.b_[k] = (y[k + 1] - y[k]) / h - h * (2.0 * m[k] + m[k + 1]) / 6.0;
    s.c_[k] = 0.5 * m[k];
    s.d_[k] = (m[k + 1] - m[k]) / (6.0 * h);
  }
  return s;
}

std::size_t CubicSpline::locate(double t) const {
  if (t <= knots_.front()) return 0;
  if (t >= knots_.back()) return a_.size() - 1;
  const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
  return static_cast<std::size_t>(it - knots_.begin()) - 1;
}

double CubicSpline::eval(double t) const {
  const std::size_t k = locate(t);
  const double tau = t - knots_[k];
  return a_[k] + tau * (b_[k] + tau * (c_[k] + tau * d_[k]));
}

double CubicSpline::eval_derivative(double t) const {
  const std::size_t k = locate(t);
  const double tau = t - knots_[k];
  return b_[k] + tau * (2.0 * c_[k] + 3.0 * tau * d_[k]);
}

double CubicSpline::eval_second_derivative(double t) const {
  const std::size_t k = locate(t);
  const double tau = t - knots_[k];
  return 2.0 * c_[k] + 6.0 * tau * d_[k];
}

Vector CubicSpline::eval(std::span<const double> t) const {
  Vector out(static_cast<Index>(t.size()));
  for (std::size_t i = 0; i < t.size(); ++i) out(static_cast<Index>(i)) = eval(t[i]);
  return out;
}

Vector CubicSpline::eval_derivative(std::span<const double> t) const {
  Vector out(static_cast<Index>(t.size()));
  for (std::size_t i = 0; i < t.size(); ++i) out(static_cast<Index>(i)) = eval_derivative(t[i]);
  return out;
}

Matrix interpolation_weights(std::span<const double> knots, std::span<const double> queries) {
  if (knots.size() < 2) throw std::invalid_argument("spline: need at least two knots");
  check_knots(knots);
  const Index n = static_cast<Index>(knots.size());
  const Matrix eye = Matrix::Identity(n, n);
  const Matrix m = second_derivatives(knots, eye);
  Matrix w(static_cast<Index>(queries.size()), n);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const double t = queries[q];
    std::size_t k = 0;
    if (t >= knots.back()) {
      k = knots.size() - 2;
    } else if (t > knots.front()) {
      k = static_cast<std::size_t>(std::upper_bound(knots.begin(), knots.end(), t) - knots.begin()) - 1;
    }
    const Index ki = static_cast<Index>(k);
    const double h = knots[k + 1] - knots[k];
    const double tau = t - knots[k];
    // value = y_k + tau*b + tau^2*M_k/2 + tau^3*(M_{k+1}-M_k)/(6h), all linear in y
    const double wb = tau;
    const double wc = 0.5 * tau * tau;
    const double wd = tau * tau * tau / (6.0 * h);
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n);
    row(ki) += 1.0 - wb / h;
    row(ki + 1) += wb / h;
    row += (-wb * h / 6.0) * (2.0 * m.row(ki) + m.row(ki + 1));
    row += wc * m.row(ki);
    row += wd * (m.row(ki + 1) - m.row(ki));
    w.row(static_cast<Index>(q)) = row;
  }
  return w;
}

}  // namespace lft::interp
