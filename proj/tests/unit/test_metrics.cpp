#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "lft/errors.hpp"
#include "lft/metrics.hpp"

using namespace lft;
using namespace lft::metrics;

TEST_CASE("q2 of a perfect prediction is 100") {
  const std::vector<double> t{0.3, -1.0, 2.5, 4.0};
  CHECK(q2(t, t) == 100.0);
}

TEST_CASE("q2 of the constant mean predictor is 0") {
  const std::vector<double> t{1.0, 2.0, 6.0};
  const std::vector<double> p(3, 3.0);
  CHECK(std::abs(q2(p, t)) < 1e-12);
}

TEST_CASE("q2 hand example uses the population variance") {
  const std::vector<double> t{0.0, 1.0, 2.0};
  const std::vector<double> p{0.0, 1.0, 3.0};
  // mse 1/3, population variance 2/3
  CHECK(q2(p, t) == doctest::Approx(50.0).epsilon(1e-12));
}

TEST_CASE("q2 errors") {
  const std::vector<double> flat{1.0, 1.0, 1.0};
  const std::vector<double> one{1.0};
  const std::vector<double> two{1.0, 2.0};
  CHECK_THROWS_AS(q2(flat, flat), ZeroVariance);
  CHECK_THROWS_AS(q2(one, one), ZeroVariance);
  CHECK_THROWS_AS(q2(two, flat), LengthMismatch);
}

TEST_CASE("q2 is invariant under a shared affine map") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> t(30), p(30), ta(30), pa(30);
    const double a = 0.1 + std::abs(n(rng)) * 3.0;
    const double b = n(rng) * 10.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      t[i] = n(rng);
      p[i] = t[i] + 0.3 * n(rng);
      ta[i] = a * t[i] + b;
      pa[i] = a * p[i] + b;
    }
    CHECK(q2(pa, ta) == doctest::Approx(q2(p, t)).epsilon(1e-9));
  }
}

TEST_CASE("coverage extremes") {
  const std::vector<double> t{0.5, -2.0, 3.0};
  const std::vector<double> sigma{0.1, 2.0, 7.0};
  CHECK(coverage_deviation(t, sigma, t) == 32.0);
  const std::vector<double> far{10.5, 8.0, 13.0};
  const std::vector<double> tight{0.1, 0.1, 0.1};
  CHECK(coverage_deviation(far, tight, t) == -68.0);
}

TEST_CASE("coverage of standard normal draws under a unit band") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n(0.0, 1.0);
  const std::size_t count = 100000;
  std::vector<double> t(count), mean(count, 0.0), sigma(count, 1.0);
  for (double& v : t) v = n(rng);
  // Phi(1) - Phi(-1) = 0.682689
  CHECK(std::abs(coverage_deviation(mean, sigma, t) - 0.2689) < 0.5);
}

TEST_CASE("coverage is nondecreasing in sigma") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> t(500), mean(500);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = n(rng);
    mean[i] = 0.5 * n(rng);
  }
  double previous = -68.0;
  for (double s = 0.05; s < 4.0; s += 0.05) {
    const std::vector<double> sigma(t.size(), s);
    const double c = coverage_deviation(mean, sigma, t);
    CHECK(c >= previous);
    CHECK(c <= 32.0);
    previous = c;
  }
}

TEST_CASE("coverage errors") {
  const std::vector<double> a{1.0, 2.0};
  const std::vector<double> b{1.0};
  const std::vector<double> zero{0.0, 1.0};
  CHECK_THROWS_AS(coverage_deviation(a, b, a), LengthMismatch);
  CHECK_THROWS_AS(coverage_deviation(a, zero, a), DomainError);
}

TEST_CASE("parameter MAE") {
  const std::vector<double> truth{0.2, 0.7, 1.5};
  CHECK(param_mae(truth, truth) == 0.0);
  const std::vector<double> shifted{0.7, 1.2, 2.0};
  CHECK(param_mae(shifted, truth) == doctest::Approx(0.5).epsilon(1e-12));
  const std::vector<double> short_one{0.2};
  CHECK_THROWS_AS(param_mae(short_one, truth), LengthMismatch);
}
