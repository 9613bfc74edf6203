#include <malloc.h>

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "lft/errors.hpp"
#include "lft/interp.hpp"

using namespace lft;
using namespace lft::interp;

namespace {

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

}  // namespace

TEST_CASE("two knots give a straight line") {
  const std::vector<double> t{1.0, 3.0}, y{2.0, 6.0};
  const CubicSpline s = fit_natural_cubic(t, y);
  CHECK(s.segments() == 1);
  const auto seg = s.segment(0);
  CHECK(seg[2] == 0.0);
  CHECK(seg[3] == 0.0);
  CHECK(s.eval(2.0) == doctest::Approx(4.0));
  CHECK(s.eval_derivative(1.7) == doctest::Approx(2.0));
}

TEST_CASE("linear data is reproduced exactly") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> gap(0.1, 1.0);
  std::vector<double> t{0.0};
  for (int i = 0; i < 12; ++i) t.push_back(t.back() + gap(rng));
  std::vector<double> y;
  for (double ti : t) y.push_back(-1.5 + 0.75 * ti);
  const CubicSpline s = fit_natural_cubic(t, y);
  for (double q : linspace(t.front(), t.back(), 97)) {
    CHECK(std::abs(s.eval(q) - (-1.5 + 0.75 * q)) < 1e-12);
    CHECK(std::abs(s.eval_derivative(q) - 0.75) < 1e-12);
  }
}

TEST_CASE("sine data: natural ends, derivative accuracy, smoothness") {
  const auto t = linspace(0.0, 2.0 * std::numbers::pi, 20);
  std::vector<double> y;
  for (double ti : t) y.push_back(std::sin(ti));
  const CubicSpline s = fit_natural_cubic(t, y);
  CHECK(std::abs(s.eval_second_derivative(t.front())) < 1e-10);
  CHECK(std::abs(s.eval_second_derivative(t.back())) < 1e-10);
  double worst = 0.0;
  for (double q : linspace(t[1], t[18], 400)) worst = std::max(worst, std::abs(s.eval_derivative(q) - std::cos(q)));
  CHECK(worst < 0.05);
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(std::abs(s.eval(t[i]) - y[i]) < 1e-12);
  // left and right limits at interior knots
  for (std::size_t k = 1; k + 1 < t.size(); ++k) {
    const auto left = s.segment(k - 1);
    const double h = t[k] - t[k - 1];
    const double v = left[0] + h * (left[1] + h * (left[2] + h * left[3]));
    const double d1 = left[1] + h * (2.0 * left[2] + 3.0 * h * left[3]);
    const double d2 = 2.0 * left[2] + 6.0 * h * left[3];
    const auto right = s.segment(k);
    CHECK(std::abs(v - right[0]) < 1e-12);
    CHECK(std::abs(d1 - right[1]) < 1e-10);
    CHECK(std::abs(d2 - 2.0 * right[2]) < 1e-10);
  }
}

TEST_CASE("bad knots are rejected") {
  const std::vector<double> y{1.0, 2.0, 3.0};
  CHECK_THROWS_AS(fit_natural_cubic(std::vector<double>{0.0, 1.0, 1.0}, y), DuplicateKnot);
  CHECK_THROWS_AS(fit_natural_cubic(std::vector<double>{0.0, 2.0, 1.0}, y), NonMonotonicKnots);
}

TEST_CASE("out of range queries use the boundary cubic") {
  const std::vector<double> t{0.0, 1.0, 2.0, 3.0}, y{0.0, 1.0, 0.0, 2.0};
  const CubicSpline s = fit_natural_cubic(t, y);
  const auto first = s.segment(0);
  const double tau = -0.5;
  CHECK(s.eval(-0.5) == doctest::Approx(first[0] + tau * (first[1] + tau * (first[2] + tau * first[3]))));
  CHECK(std::isfinite(s.eval(10.0)));
}

TEST_CASE("interpolation weights reproduce spline evaluation") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto t = linspace(0.0, 5.0, 9);
  std::vector<double> y;
  for (std::size_t i = 0; i < t.size(); ++i) y.push_back(u(rng));
  const CubicSpline s = fit_natural_cubic(t, y);
  const auto q = linspace(-0.3, 5.3, 31);
  const Matrix w = interpolation_weights(t, q);
  const Vector yv = Eigen::Map<const Vector>(y.data(), static_cast<Index>(y.size()));
  const Vector viaw = w * yv;
  for (std::size_t i = 0; i < q.size(); ++i) CHECK(std::abs(viaw(static_cast<Index>(i)) - s.eval(q[i])) < 1e-12);
  // rows sum to one: constants are reproduced
  CHECK((w.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("fit cost grows linearly") {
  // Keep freed heap pages mapped so the larger fit is not charged for fresh
  // page faults on every repeat.
  mallopt(M_TRIM_THRESHOLD, 64 << 20);
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  auto time_fit = [](std::size_t n) {
    const auto t = linspace(0.0, 100.0, n);
    std::vector<double> y;
    for (double ti : t) y.push_back(std::sin(ti));
    double best = 1e9;
    for (int r = 0; r < 20; ++r) {
      const auto start = std::chrono::steady_clock::now();
      volatile double sink = fit_natural_cubic(t, y).eval(1.0);
      (void)sink;
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
    return best;
  };
  const double small = time_fit(1000);
  const double large = time_fit(10000);
  CHECK(large / small < 15.0);
}
