#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "lft/errors.hpp"
#include "lft/svgp.hpp"
#include "test_support.hpp"

using namespace lft;
using namespace lft::svgp;
using kernels::KernelKind;
using kernels::KernelParams;
using lft::testing::random_matrix;
using lft::testing::tape_objective;

namespace {

KernelParams rbf_params(double ls, double var) {
  KernelParams p;
  p.lengthscales = Vector::Constant(1, ls);
  p.variance = var;
  return p;
}

InducingSet points(std::initializer_list<double> xs) {
  Matrix z(static_cast<Index>(xs.size()), 1);
  Index i = 0;
  for (double x : xs) z(i++, 0) = x;
  return InducingSet{z};
}

Matrix normal_matrix(std::mt19937_64& rng, Index rows, Index cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Matrix random_lower(std::mt19937_64& rng, Index n) {
  Matrix l = random_matrix(rng, n, n, -0.5, 0.5).triangularView<Eigen::Lower>();
  std::uniform_real_distribution<double> d(0.2, 1.5);
  for (Index i = 0; i < n; ++i) l(i, i) = d(rng);
  return l;
}

}  // namespace

TEST_CASE("uniform inducing grid") {
  const InducingSet z1 = uniform_grid({0.0}, {3.0}, {4});
  CHECK(z1.size() == 4);
  CHECK(z1.locations(3, 0) == 3.0);
  CHECK(z1.locations(1, 0) == doctest::Approx(1.0));
  const InducingSet z2 = uniform_grid({0.0, 0.0}, {1.0, 2.0}, {2, 3});
  CHECK(z2.size() == 6);
  CHECK(z2.locations(0, 0) == 0.0);
  CHECK(z2.locations(2, 1) == 2.0);
  CHECK(z2.locations(3, 0) == 1.0);
  CHECK(z2.locations(3, 1) == 0.0);
}

TEST_CASE("predictive at the inducing inputs recovers the prior") {
  const InducingSet z = points({0.0, 0.7, 1.5, 2.6});
  const KernelParams kp = rbf_params(0.8, 1.3);
  const Matrix kmm = kernels::kernel_matrix(z.locations, z.locations, KernelKind::rbf, kp);
  VariationalDist q{Matrix::Zero(4, 1), {cholesky(kmm, 0.0)}};
  const auto pred = predictive(q, z, z.locations, KernelKind::rbf, kp, 0.0);
  CHECK(pred[0].mean.norm() == 0.0);
  CHECK((pred[0].cov - kmm).norm() < 1e-10);

  q.mean << 0.3, -1.0, 2.0, 0.5;
  const auto pred2 = predictive(q, z, z.locations, KernelKind::rbf, kp, 0.0);
  CHECK((pred2[0].mean - q.mean).norm() < 1e-10);
}

TEST_CASE("predictive matches the dense-inverse formulas") {
  for (int seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(static_cast<unsigned>(seed));
    // jittered grid keeps K_MM well conditioned for the explicit inverse
    const InducingSet z{uniform_grid({0.0}, {3.0}, {3}).locations + random_matrix(rng, 3, 1, -0.3, 0.3)};
    const Matrix xs = random_matrix(rng, 2, 1, 0.0, 3.0);
    for (KernelKind kind : {KernelKind::rbf, KernelKind::periodic}) {
      KernelParams kp = rbf_params(0.9, 1.4);
      kp.period = 2.1;
      VariationalDist q{random_matrix(rng, 3, 2), {random_lower(rng, 3), random_lower(rng, 3)}};
      const auto pred = predictive(q, z, xs, kind, kp, 0.0);
      const Matrix kmm = kernels::kernel_matrix(z.locations, z.locations, kind, kp);
      const Matrix ksm = kernels::kernel_matrix(xs, z.locations, kind, kp);
      const Matrix kss = kernels::kernel_matrix(xs, xs, kind, kp);
      const Matrix kinv = kmm.inverse();
      for (int i = 0; i < 2; ++i) {
        const Matrix s = q.chol[static_cast<std::size_t>(i)] * q.chol[static_cast<std::size_t>(i)].transpose();
        const Matrix mean = ksm * kinv * q.mean.col(i);
        const Matrix cov = kss + ksm * kinv * (s - kmm) * kinv * ksm.transpose();
        CHECK((pred[static_cast<std::size_t>(i)].mean - mean).cwiseAbs().maxCoeff() < 1e-8);
        CHECK((pred[static_cast<std::size_t>(i)].cov - cov).cwiseAbs().maxCoeff() < 1e-8);
      }
    }
  }
}

TEST_CASE("predictive with a non positive definite prior") {
  // Two identical inducing points give a singular Gram matrix.
  const InducingSet z = points({1.0, 1.0});
  VariationalDist q{Matrix::Zero(2, 1), {Matrix::Identity(2, 2)}};
  CHECK_THROWS_AS(predictive(q, z, z.locations, KernelKind::rbf, rbf_params(1.0, 1.0), 0.0),
                  NotPositiveDefinite);
}

TEST_CASE("scalar KL closed forms") {
  const InducingSet z = points({0.0});
  const KernelParams kp = rbf_params(1.0, 1.0);
  VariationalDist q{Matrix::Zero(1, 1), {Matrix::Ones(1, 1)}};
  CHECK(std::abs(kl_to_prior(q, z, KernelKind::rbf, kp, 0.0)) < 1e-15);
  q.mean(0, 0) = 1.0;
  CHECK(kl_to_prior(q, z, KernelKind::rbf, kp, 0.0) == doctest::Approx(0.5).epsilon(1e-14));
  q.mean(0, 0) = 0.0;
  q.chol[0](0, 0) = std::sqrt(0.5);
  const double expected = 0.5 * (0.5 - 1.0 - std::log(0.5));
  CHECK(kl_to_prior(q, z, KernelKind::rbf, kp, 0.0) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(kl_to_prior(q, z, KernelKind::rbf, kp, 0.0) == doctest::Approx(0.096574).epsilon(1e-5));
}

TEST_CASE("KL is zero when q equals the prior and sums over forces") {
  const InducingSet z = points({0.0, 0.5, 1.3});
  const KernelParams kp = rbf_params(0.6, 2.0);
  const Matrix kmm = kernels::kernel_matrix(z.locations, z.locations, KernelKind::rbf, kp);
  VariationalDist q{Matrix::Zero(3, 2), {cholesky(kmm, 0.0), cholesky(kmm, 0.0)}};
  CHECK(std::abs(kl_to_prior(q, z, KernelKind::rbf, kp, 0.0)) < 1e-12);
  q.mean(1, 1) = 0.4;
  VariationalDist single{q.mean.col(1), {q.chol[1]}};
  CHECK(kl_to_prior(q, z, KernelKind::rbf, kp, 0.0) ==
        doctest::Approx(kl_to_prior(single, z, KernelKind::rbf, kp, 0.0)).epsilon(1e-12));
}

TEST_CASE("KL is nonnegative on random distributions") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const Index m = 2 + static_cast<Index>(rng() % 6);
    const InducingSet z = uniform_grid({0.0}, {4.0}, {m});
    const KernelParams kp = rbf_params(0.5 + 0.02 * trial, 0.5 + 0.03 * trial);
    VariationalDist q{random_matrix(rng, m, 1, -2.0, 2.0), {random_lower(rng, m)}};
    CHECK(kl_to_prior(q, z, KernelKind::rbf, kp, kDefaultJitter) >= -1e-10);
  }
}

TEST_CASE("zero noise samples equal the predictive mean") {
  std::mt19937_64 rng(5);
  const InducingSet z = uniform_grid({0.0}, {2.0}, {5});
  const Matrix xs = random_matrix(rng, 7, 1, 0.0, 2.0);
  VariationalDist q{random_matrix(rng, 5, 1), {random_lower(rng, 5)}};
  const KernelParams kp = rbf_params(0.7, 1.1);
  const auto pred = predictive(q, z, xs, KernelKind::rbf, kp, kDefaultJitter);
  const auto f = sample_forces(q, z, xs, KernelKind::rbf, kp, {Matrix::Zero(7, 3)}, kDefaultJitter);
  for (Index s = 0; s < 3; ++s) CHECK((f[0].col(s) - pred[0].mean).norm() == 0.0);
}

TEST_CASE("samples are deterministic for fixed noise") {
  std::mt19937_64 rng(6);
  const InducingSet z = uniform_grid({0.0}, {2.0}, {4});
  const Matrix xs = random_matrix(rng, 5, 1, 0.0, 2.0);
  VariationalDist q{random_matrix(rng, 4, 1), {random_lower(rng, 4)}};
  const Matrix eps = normal_matrix(rng, 5, 2);
  const auto a = sample_forces(q, z, xs, KernelKind::rbf, rbf_params(0.5, 1.0), {eps}, kDefaultJitter);
  const auto b = sample_forces(q, z, xs, KernelKind::rbf, rbf_params(0.5, 1.0), {eps}, kDefaultJitter);
  CHECK((a[0] - b[0]).norm() == 0.0);
}

TEST_CASE("empirical sample covariance matches the predictive covariance") {
  std::mt19937_64 rng(8);
  const InducingSet z = uniform_grid({0.0}, {3.0}, {4});
  Matrix xs(3, 1);
  xs << 0.4, 1.1, 2.5;
  VariationalDist q{random_matrix(rng, 4, 1), {random_lower(rng, 4)}};
  const KernelParams kp = rbf_params(0.9, 1.0);
  const Index n = 100000;
  const Matrix eps = normal_matrix(rng, 3, n);
  const auto f = sample_forces(q, z, xs, KernelKind::rbf, kp, {eps}, kDefaultJitter);
  const auto pred = predictive(q, z, xs, KernelKind::rbf, kp, kDefaultJitter);
  const Vector mu = f[0].rowwise().mean();
  const Matrix centered = f[0].colwise() - mu;
  const Matrix emp = centered * centered.transpose() / static_cast<double>(n - 1);
  CHECK((emp - pred[0].cov).norm() / pred[0].cov.norm() < 0.02);
}

TEST_CASE("gaussian log likelihood values") {
  Matrix y(1, 1), yhat(1, 1);
  y << 2.0;
  yhat << 2.0;
  const Vector one = Vector::Ones(1);
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  CHECK(gaussian_loglik(y, yhat, one) == doctest::Approx(-half_log_2pi));
  CHECK(gaussian_loglik(y, yhat, one) == doctest::Approx(-0.918939).epsilon(1e-6));
  yhat << 1.0;
  CHECK(gaussian_loglik(y, yhat, one) == doctest::Approx(-half_log_2pi - 0.5));
  CHECK(gaussian_loglik(y, yhat, one) == doctest::Approx(-1.418939).epsilon(1e-6));
  Matrix y2(1, 2), yhat2(1, 2);
  y2 << 2.0, 2.0;
  yhat2 << 1.0, 1.0;
  CHECK(gaussian_loglik(y2, yhat2, one) == doctest::Approx(2.0 * gaussian_loglik(y, yhat, one)));
}

TEST_CASE("gaussian log likelihood per-row variances") {
  Matrix y(2, 3), yhat(2, 3);
  y << 1.0, 2.0, 3.0, -1.0, 0.5, 0.0;
  yhat << 0.8, 2.5, 2.0, -1.5, 0.0, 0.3;
  Vector var(2);
  var << 0.3, 2.0;
  double expected = 0.0;
  for (Index p = 0; p < 2; ++p) {
    for (Index k = 0; k < 3; ++k) {
      const double r = y(p, k) - yhat(p, k);
      expected += -0.5 * std::log(2.0 * std::numbers::pi * var(p)) - r * r / (2.0 * var(p));
    }
  }
  CHECK(gaussian_loglik(y, yhat, var) == doctest::Approx(expected).epsilon(1e-14));
  CHECK_THROWS_AS(gaussian_loglik(y, yhat, Vector::Ones(3)), DimensionMismatch);
}

TEST_CASE("exact GP regression posterior is reproduced") {
  Matrix x(6, 1);
  x << 0.0, 0.8, 1.7, 2.4, 3.3, 4.0;
  Vector y(6);
  y << 0.2, 0.9, 0.1, -0.7, -0.3, 0.5;
  const double noise = 0.05;
  const KernelParams kp = rbf_params(0.7, 1.2);
  const Matrix k = kernels::kernel_matrix(x, x, KernelKind::rbf, kp);
  const Matrix ky_inv = (k + noise * Matrix::Identity(6, 6)).inverse();
  const Matrix m = k * ky_inv * y;
  const Matrix c = k - k * ky_inv * k;
  VariationalDist q{m, {cholesky(c, 0.0)}};
  Matrix xs(4, 1);
  xs << 0.3, 1.1, 2.9, 3.8;
  const Matrix ks = kernels::kernel_matrix(xs, x, KernelKind::rbf, kp);
  const Matrix gp_mean = ks * ky_inv * y;
  const Matrix gp_cov = kernels::kernel_matrix(xs, xs, KernelKind::rbf, kp) - ks * ky_inv * ks.transpose();
  const auto pred = predictive(q, InducingSet{x}, xs, KernelKind::rbf, kp, 0.0);
  CHECK((pred[0].mean - gp_mean).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((pred[0].cov - gp_cov).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("sampling composed with the likelihood passes gradient checks") {
  for (int seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(static_cast<unsigned>(100 + seed));
    const InducingSet z = uniform_grid({0.0}, {2.0}, {3});
    const Matrix xs = random_matrix(rng, 4, 1, 0.0, 2.0);
    const Matrix eps = normal_matrix(rng, 4, 2);
    const Matrix y = random_matrix(rng, 4, 2);
    for (KernelKind kind : {KernelKind::rbf, KernelKind::periodic}) {
      // leaves: mean (3x1), raw chol (3x3), log lengthscale, log variance, log period, log noise
      const auto f = tape_objective({{3, 1}, {3, 3}, {1, 1}, {1, 1}, {1, 1}, {1, 1}},
                                    [&](ad::Tape& tape, const std::vector<ad::Var>& v) {
                                      VariationalVars q{v[0], {ad::tril_softplus_diag(v[1])}};
                                      kernels::KernelVars kv{ad::exp(v[2]), ad::exp(v[3]), ad::exp(v[4])};
                                      const auto s = sample_forces(q, z, xs, kind, kv, {eps}, 1e-6);
                                      ad::Var noise = ad::matmul(tape.constant(Matrix::Ones(4, 1)), ad::exp(v[5]));
                                      return gaussian_loglik(y, s[0], noise) - kl_to_prior(q, z, kind, kv, 1e-6);
                                    });
      std::vector<double> p = lft::testing::random_vector(rng, 3);
      for (double& r : lft::testing::random_vector(rng, 9, -0.5, 0.5)) p.push_back(r);
      p.push_back(std::log(0.8));
      p.push_back(std::log(1.2));
      p.push_back(std::log(2.5));
      p.push_back(std::log(0.3));
      CHECK(check_gradients(f, p, 1e-5) < 1e-3);
    }
  }
}

TEST_CASE("VariationalGp registers and binds parameters") {
  ParamSet params;
  VariationalGp gp(KernelKind::periodic, uniform_grid({0.0}, {1.0}, {4}), 2, rbf_params(0.3, 1.5), 1e-5);
  gp.register_params(params);
  CHECK(params.contains("q_mean"));
  CHECK(params.contains("q_chol_1"));
  CHECK(params.contains("kernel_period"));
  const VariationalDist q = gp.variational(params);
  CHECK(q.mean.norm() == 0.0);
  CHECK((q.chol[0] - 0.1 * Matrix::Identity(4, 4)).norm() < 1e-12);
  const KernelParams kp = gp.kernel_params(params);
  CHECK(kp.lengthscales(0) == doctest::Approx(0.3));
  CHECK(kp.variance == doctest::Approx(1.5));
  ad::Tape tape;
  const auto bound = gp.bind(params.bind(tape));
  CHECK((bound.q.chol[1].value() - q.chol[1]).norm() < 1e-12);
  CHECK(bound.kernel.variance.scalar() == doctest::Approx(1.5));
}
