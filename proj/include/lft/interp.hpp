#pragma once

// Natural cubic spline interpolation.

#include <array>
#include <span>
#include <vector>

#include "lft/numcore/linalg.hpp"

namespace lft::interp {

/// Piecewise cubic a + b*tau + c*tau^2 + d*tau^3 on each [t_k, t_{k+1}],
/// tau = t - t_k, with zero second derivative at both ends.
class CubicSpline {
 public:
  CubicSpline() = default;

  /// Spline value. Queries outside the knot range use the boundary cubic.
  double eval(double t) const;
  double eval_derivative(double t) const;
  double eval_second_derivative(double t) const;

  Vector eval(std::span<const double> t) const;
  Vector eval_derivative(std::span<const double> t) const;

  const std::vector<double>& knots() const { return knots_; }
  /// Coefficients of segment k as (a, b, c, d).
  std::array<double, 4> segment(std::size_t k) const { return {a_[k], b_[k], c_[k], d_[k]}; }
  std::size_t segments() const { return a_.size(); }

 private:
  friend CubicSpline fit_natural_cubic(std::span<const double>, std::span<const double>);
  std::size_t locate(double t) const;

  std::vector<double> knots_;
  std::vector<double> a_, b_, c_, d_;
};

/// Fits the natural cubic spline through (t_i, y_i) with one tridiagonal
/// solve. Throws NonMonotonicKnots / DuplicateKnot on bad knots.
CubicSpline fit_natural_cubic(std::span<const double> t, std::span<const double> y);

/// Q x N matrix W such that the natural spline through (knots, y) evaluated
/// at `queries` equals W y for every y.
Matrix interpolation_weights(std::span<const double> knots, std::span<const double> queries);

}  // namespace lft::interp
