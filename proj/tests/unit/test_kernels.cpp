#include <cmath>
#include <random>

#include "doctest.h"
#include "lft/errors.hpp"
#include "lft/kernels.hpp"
#include "test_support.hpp"

using namespace lft;
using namespace lft::kernels;
using lft::testing::random_matrix;
using lft::testing::tape_objective;

namespace {

KernelParams params1(double ls, double var, double period = 1.0) {
  KernelParams p;
  p.lengthscales = Vector::Constant(1, ls);
  p.variance = var;
  p.period = period;
  return p;
}

}  // namespace

TEST_CASE("rbf at zero distance is the variance") {
  const std::vector<double> x{0.3, -1.2};
  KernelParams p;
  p.lengthscales = Vector::Constant(2, 0.7);
  p.variance = 2.5;
  CHECK(rbf(x, x, p) == 2.5);
}

TEST_CASE("rbf at unit distance") {
  const std::vector<double> a{0.0}, b{1.0};
  CHECK(rbf(a, b, params1(1.0, 1.0)) == doctest::Approx(0.606531).epsilon(1e-6));
  CHECK(rbf(a, b, params1(1.0, 1.0)) == doctest::Approx(std::exp(-0.5)));
}

TEST_CASE("rbf with a huge second lengthscale ignores dimension 2") {
  KernelParams p;
  p.lengthscales = Vector(2);
  p.lengthscales << 1.0, 1e6;
  const std::vector<double> a{0.0, 0.0}, b{0.8, 3.0}, c{0.8, -2.0};
  const double one_d = std::exp(-0.5 * 0.64);
  CHECK(std::abs(rbf(a, b, p) - one_d) < 1e-6);
  CHECK(std::abs(rbf(a, c, p) - one_d) < 1e-6);
}

TEST_CASE("rbf dimension mismatch") {
  const std::vector<double> a{0.0, 1.0}, b{1.0, 1.0};
  CHECK_THROWS_AS(rbf(a, b, params1(1.0, 1.0)), DimensionMismatch);
}

TEST_CASE("periodic kernel values") {
  const KernelParams p = params1(1.0, 1.0, 2.0);
  CHECK(periodic(0.4, 0.4, p) == 1.0);
  CHECK(periodic(0.0, 2.0, p) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(periodic(1.0, 7.0, p) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(periodic(0.0, 1.0, p) == doctest::Approx(0.135335).epsilon(1e-6));
  CHECK(periodic(0.0, 1.0, p) == doctest::Approx(std::exp(-2.0)));
}

TEST_CASE("kernel matrix of a single point") {
  Matrix x(1, 1);
  x << 0.5;
  const Matrix k = kernel_matrix(x, x, KernelKind::rbf, params1(0.3, 1.7));
  CHECK(k.rows() == 1);
  CHECK(k(0, 0) == 1.7);
}

TEST_CASE("kernel matrix is symmetric and matches pointwise evaluation") {
  std::mt19937_64 rng(3);
  const Matrix x = random_matrix(rng, 10, 1, 0.0, 5.0);
  const Matrix y = random_matrix(rng, 4, 1, 0.0, 5.0);
  for (KernelKind kind : {KernelKind::rbf, KernelKind::periodic}) {
    const KernelParams p = params1(0.9, 1.3, 2.2);
    const Matrix k = kernel_matrix(x, x, kind, p);
    CHECK((k - k.transpose()).norm() == 0.0);
    const Matrix kxy = kernel_matrix(x, y, kind, p);
    for (Index i = 0; i < x.rows(); ++i) {
      for (Index j = 0; j < y.rows(); ++j) {
        const double expected = kind == KernelKind::rbf
                                    ? rbf(std::vector<double>{x(i, 0)}, std::vector<double>{y(j, 0)}, p)
                                    : periodic(x(i, 0), y(j, 0), p);
        CHECK(kxy(i, j) == doctest::Approx(expected).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("anisotropic kernel matrix matches pointwise evaluation") {
  std::mt19937_64 rng(9);
  const Matrix x = random_matrix(rng, 6, 2);
  KernelParams p;
  p.lengthscales = Vector(2);
  p.lengthscales << 0.4, 1.5;
  const Matrix k = kernel_matrix(x, x, KernelKind::rbf, p);
  for (Index i = 0; i < 6; ++i) {
    for (Index j = 0; j < 6; ++j) {
      CHECK(k(i, j) == doctest::Approx(rbf(std::vector<double>{x(i, 0), x(i, 1)},
                                           std::vector<double>{x(j, 0), x(j, 1)}, p)));
    }
  }
}

TEST_CASE("gram matrices plus jitter factorise") {
  for (int seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(static_cast<unsigned>(seed));
    const Index n = 2 + static_cast<Index>(rng() % 63);
    const Matrix x = random_matrix(rng, n, 1, 0.0, 10.0);
    for (KernelKind kind : {KernelKind::rbf, KernelKind::periodic}) {
      const KernelParams p = initial_params(kind, x);
      const Matrix k = kernel_matrix(x, x, kind, p);
      CHECK_NOTHROW(cholesky(k, kDefaultJitter));
    }
  }
}

TEST_CASE("kernels are stationary") {
  std::mt19937_64 rng(21);
  const Matrix x = random_matrix(rng, 7, 1, 0.0, 3.0);
  const Matrix shifted = (x.array() + 12.345).matrix();
  for (KernelKind kind : {KernelKind::rbf, KernelKind::periodic}) {
    const KernelParams p = params1(0.8, 1.1, 1.7);
    const Matrix a = kernel_matrix(x, x, kind, p);
    const Matrix b = kernel_matrix(shifted, shifted, kind, p);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("initial hyperparameters follow the smallest-gap rule") {
  Matrix x(4, 2);
  x << 0.0, 1.0,  //
      2.0, 1.0,   //
      3.5, 4.0,   //
      6.0, 1.5;
  const KernelParams p = initial_params(KernelKind::rbf, x);
  CHECK(p.lengthscales(0) == doctest::Approx(1.5));
  CHECK(p.lengthscales(1) == doctest::Approx(0.5));
  CHECK(p.variance == 1.0);
  CHECK(p.period == doctest::Approx(3.0));
}

TEST_CASE("kernel matrix gradients pass gradient checks") {
  for (int seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(static_cast<unsigned>(seed + 40));
    const Matrix x = random_matrix(rng, 5, 1, 0.0, 4.0);
    const Matrix y = random_matrix(rng, 3, 1, 0.0, 4.0);
    const Matrix w = random_matrix(rng, 5, 3);
    const Matrix x2 = random_matrix(rng, 4, 2, 0.0, 2.0);
    const Matrix w2 = random_matrix(rng, 4, 4);
    for (KernelKind kind : {KernelKind::rbf, KernelKind::periodic}) {
      const auto f = tape_objective({{1, 1}, {1, 1}, {1, 1}},
                                    [&](ad::Tape&, const std::vector<ad::Var>& v) {
                                      KernelVars kv{ad::exp(v[0]), ad::exp(v[1]), ad::exp(v[2])};
                                      ad::Var k = kernel_matrix(x, y, kind, kv);
                                      return ad::sum(ad::mul_const(k, w));
                                    });
      const std::vector<double> p{std::log(0.5 + 0.1 * seed), std::log(1.3), std::log(1.9)};
      CHECK(check_gradients(f, p, 1e-6) < 1e-3);
    }
    const auto f2 = tape_objective({{2, 1}, {1, 1}}, [&](ad::Tape&, const std::vector<ad::Var>& v) {
      KernelVars kv{ad::exp(v[0]), ad::exp(v[1]), {}};
      return ad::sum(ad::mul_const(kernel_matrix(x2, x2, KernelKind::rbf, kv), w2));
    });
    const std::vector<double> p2{std::log(0.7), std::log(1.4), std::log(0.8)};
    CHECK(check_gradients(f2, p2, 1e-6) < 1e-3);
  }
}
