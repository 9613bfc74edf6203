#include <cmath>
#include <random>

#include "doctest.h"
#include "lft/errors.hpp"
#include "lft/numcore/gradcheck.hpp"
#include "lft/numcore/linalg.hpp"
#include "lft/numcore/ops.hpp"
#include "lft/numcore/params.hpp"
#include "test_support.hpp"

using namespace lft;
using lft::testing::random_matrix;
using lft::testing::random_spd;
using lft::testing::random_vector;
using lft::testing::tape_objective;

namespace {

// Gaussian elimination with partial pivoting, used as an independent oracle.
Vector dense_solve_oracle(Matrix a, Vector b) {
  const Index n = a.rows();
  for (Index k = 0; k < n; ++k) {
    Index piv = k;
    for (Index i = k + 1; i < n; ++i) {
      if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
    }
    a.row(k).swap(a.row(piv));
    std::swap(b(k), b(piv));
    for (Index i = k + 1; i < n; ++i) {
      const double f = a(i, k) / a(k, k);
      a.row(i) -= f * a.row(k);
      b(i) -= f * b(k);
    }
  }
  Vector x(n);
  for (Index i = n - 1; i >= 0; --i) {
    double s = b(i);
    for (Index j = i + 1; j < n; ++j) s -= a(i, j) * x(j);
    x(i) = s / a(i, i);
  }
  return x;
}

struct Tridiag {
  Vector lower, diag, upper;
};

Tridiag random_dominant(std::mt19937_64& rng, Index n) {
  Tridiag t{random_matrix(rng, n - 1, 1).col(0), Vector(n), random_matrix(rng, n - 1, 1).col(0)};
  std::uniform_real_distribution<double> extra(0.5, 2.0);
  for (Index i = 0; i < n; ++i) {
    double off = 0.0;
    if (i > 0) off += std::abs(t.lower(i - 1));
    if (i + 1 < n) off += std::abs(t.upper(i));
    t.diag(i) = (rng() % 2 ? 1.0 : -1.0) * (off + extra(rng));
  }
  return t;
}

}  // namespace

TEST_CASE("cholesky of the identity is the identity") {
  const Matrix l = cholesky(Matrix::Identity(2, 2), 0.0);
  CHECK((l - Matrix::Identity(2, 2)).norm() == doctest::Approx(0.0));
}

TEST_CASE("cholesky reconstructs a small SPD matrix") {
  Matrix a(2, 2);
  a << 4, 2, 2, 3;
  const Matrix l = cholesky(a, 0.0);
  CHECK((l * l.transpose() - a).norm() < 1e-12);
  CHECK(l(0, 0) > 0.0);
  CHECK(l(1, 1) > 0.0);
  CHECK(l(0, 1) == 0.0);
}

TEST_CASE("cholesky rejects an indefinite matrix") {
  Matrix a(2, 2);
  a << 1, 2, 2, 1;
  CHECK_THROWS_AS(cholesky(a, 0.0), NotPositiveDefinite);
  // Escalating the default jitter three times (up to 1e-2) cannot fix eigenvalue -1.
  CHECK_THROWS_AS(cholesky(a), NotPositiveDefinite);
}

TEST_CASE("cholesky escalates jitter for a singular PSD matrix") {
  Matrix a = Matrix::Ones(3, 3);
  const CholeskyFactor f = cholesky_with_jitter(a, 1e-9);
  CHECK(f.jitter >= 1e-9);
  Matrix shifted = a;
  shifted.diagonal().array() += f.jitter;
  CHECK((f.lower * f.lower.transpose() - shifted).norm() / shifted.norm() < 1e-8);
}

TEST_CASE("cholesky rejects asymmetric input") {
  Matrix a(2, 2);
  a << 2, 1, 0, 2;
  CHECK_THROWS_AS(cholesky(a, 0.0), std::invalid_argument);
}

TEST_CASE("cholesky plus triangular solves reproduce the inverse action") {
  std::mt19937_64 rng(11);
  for (Index n : {1, 2, 5, 17, 33, 64}) {
    const Matrix a = random_spd(rng, n);
    const Matrix b = random_matrix(rng, n, 3);
    const Matrix l = cholesky(a, 0.0);
    CHECK((l * l.transpose() - a).norm() / a.norm() < 1e-8);
    const Matrix x = solve_lower_transpose(l, solve_lower(l, b));
    const Matrix oracle = a.inverse() * b;
    CHECK((x - oracle).norm() / oracle.norm() < 1e-8);
    CHECK(log_det_from_cholesky(l) == doctest::Approx(std::log(a.determinant())).epsilon(1e-8));
  }
}

TEST_CASE("tridiagonal identity system returns the rhs") {
  Vector rhs(4);
  rhs << 1, -2, 3, 0.5;
  const Vector x = solve_tridiagonal(Vector::Zero(3), Vector::Ones(4), Vector::Zero(3), rhs);
  CHECK((x - rhs).norm() == 0.0);
}

TEST_CASE("tridiagonal solve matches dense elimination on random dominant systems") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = trial == 0 ? 5 : 2 + static_cast<Index>(rng() % 30);
    const Tridiag t = random_dominant(rng, n);
    const Vector rhs = random_matrix(rng, n, 1).col(0);
    const Vector x = solve_tridiagonal(t.lower, t.diag, t.upper, rhs);
    const Matrix a = tridiagonal_dense(t.lower, t.diag, t.upper);
    const Vector oracle = dense_solve_oracle(a, rhs);
    CHECK((x - oracle).norm() / oracle.norm() < 1e-10);
    CHECK((a * x - rhs).norm() / rhs.norm() < 1e-10);
  }
}

TEST_CASE("tridiagonal solve reports a zero pivot") {
  Vector diag(2);
  diag << 0, 1;
  Vector rhs(2);
  rhs << 1, 1;
  CHECK_THROWS_AS(solve_tridiagonal(Vector::Zero(1), diag, Vector::Zero(1), rhs), SingularSystem);
}

TEST_CASE("check_gradients on x^2 at 3") {
  const GradientFn f = [](std::span<const double> p, std::span<double> g) {
    g[0] = 2.0 * p[0];
    return p[0] * p[0];
  };
  const std::vector<double> x{3.0};
  CHECK(check_gradients(f, x, 1e-4) < 1e-8);
}

TEST_CASE("check_gradients uses subgradient 0 for |x| at the kink") {
  const GradientFn f = tape_objective({{1, 1}}, [](ad::Tape&, const std::vector<ad::Var>& v) {
    return ad::sum(ad::abs(v[0]));
  });
  const std::vector<double> x{0.0};
  CHECK(check_gradients(f, x, 1e-4) < 1e-12);
}

TEST_CASE("check_gradients reports non-finite analytic gradients") {
  const GradientFn f = [](std::span<const double> p, std::span<double> g) {
    g[0] = std::numeric_limits<double>::infinity();
    return p[0];
  };
  const std::vector<double> x{1.0};
  CHECK_THROWS_AS(check_gradients(f, x, 1e-4), NonFiniteGradient);
  CHECK_THROWS_AS(check_gradients(f, x, 1e-2), std::invalid_argument);
}

TEST_CASE("elementwise and broadcasting ops pass gradient checks") {
  const auto f = tape_objective(
      {{3, 4}, {3, 4}, {3, 1}, {1, 4}, {1, 1}}, [](ad::Tape&, const std::vector<ad::Var>& v) {
        using namespace lft::ad;
        Var a = hadamard(softplus(v[0]), exp(0.3 * v[1]));
        Var b = add_row(add_col(a, v[2]), v[3]);
        Var c = mul_col(sigmoid(b), square(v[2]));
        Var d = scale(gelu(c - v[1]), v[4]) + 0.5;
        Var e = log(softplus(v[1]) + 1.0);
        return sum(d) + sum_squares(e) - sum(abs(v[0] + 5.0));
      });
  for (int seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(static_cast<unsigned>(seed));
    const auto x = random_vector(rng, 12 + 12 + 3 + 4 + 1);
    CHECK(check_gradients(f, x, 1e-5) < 1e-3);
  }
}

TEST_CASE("shape ops pass gradient checks") {
  const auto f = tape_objective({{3, 4}, {4, 2}, {3, 2}}, [](ad::Tape&, const std::vector<ad::Var>& v) {
    using namespace lft::ad;
    Var p = matmul(v[0], v[1]);
    Var q = hstack({p, v[2], block(v[0], 0, 1, 3, 2)});
    Var r = vstack({transpose(q), block(v[0], 2, 0, 1, 3)});
    Matrix c = Matrix::Constant(4, 3, 0.7);
    Var s = matmul(c, transpose(r));
    Var t = matmul(transpose(v[2]), Matrix::Constant(3, 5, -0.2));
    Var sq = block(s, 0, 0, 3, 3);
    return sum(square(s)) + sum(t) + sum(diagonal(sq)) + sum(mul_const(v[2], Matrix::Constant(3, 2, 2.0)));
  });
  for (int seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(static_cast<unsigned>(seed + 100));
    const auto x = random_vector(rng, 12 + 8 + 6);
    CHECK(check_gradients(f, x, 1e-5) < 1e-3);
  }
}

TEST_CASE("cholesky and triangular solves pass gradient checks") {
  const Index n = 4;
  const auto f = tape_objective({{n, n}, {n, 2}, {n, n}}, [n](ad::Tape& tape, const std::vector<ad::Var>& v) {
    using namespace lft::ad;
    Var spd = matmul(v[0], transpose(v[0])) + tape.constant(Matrix::Identity(n, n));
    Var l = cholesky(spd, 0.0);
    Var x = solve_lower(l, v[1]);
    Var y = solve_lower_transpose(l, v[1]);
    Var lq = tril_softplus_diag(v[2]);
    Var z = solve_lower(l, lq);
    return sum_squares(x) + sum(y) + 2.0 * sum(log(diagonal(l))) + sum_squares(z) +
           sum(log(diagonal(lq)));
  });
  for (int seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(static_cast<unsigned>(seed + 200));
    const auto x = random_vector(rng, n * n + n * 2 + n * n);
    CHECK(check_gradients(f, x, 1e-5) < 1e-3);
  }
}

TEST_CASE("tridiagonal ops pass gradient checks") {
  const Index n = 6;
  Vector ml = Vector::Constant(n - 1, 0.2), md = Vector::Constant(n, 0.9), mu = Vector::Constant(n - 1, 0.3);
  const auto f = tape_objective(
      {{n - 1, 1}, {n, 1}, {n - 1, 1}, {n, 3}, {1, 1}, {1, 1}},
      [&](ad::Tape&, const std::vector<ad::Var>& v) {
        using namespace lft::ad;
        Var diag = v[1] + 4.0;  // keep diagonally dominant
        Var rhs = tridiagonal_multiply(ml, md, mu, v[3]);
        Var y = tridiagonal_solve(v[0], diag, v[2], rhs);
        Var band = linear_combination(Vector::Constant(n, 3.0), {v[4], v[5]},
                                      {Vector::LinSpaced(n, 0.0, 1.0), Vector::Constant(n, 0.5)});
        Var y2 = tridiagonal_solve(v[0], band, v[2], y);
        return sum_squares(y) + sum(y2);
      });
  for (int seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(static_cast<unsigned>(seed + 300));
    auto x = random_vector(rng, (n - 1) + n + (n - 1) + 3 * n + 2, -0.5, 0.5);
    CHECK(check_gradients(f, x, 1e-5) < 1e-3);
  }
}

TEST_CASE("tape rewind discards later nodes") {
  ad::Tape tape;
  ad::Var a = tape.variable(2.0);
  const std::size_t mark = tape.size();
  ad::Var b = ad::square(a);
  CHECK(b.scalar() == 4.0);
  tape.rewind(mark);
  CHECK(tape.size() == mark);
  ad::Var c = 3.0 * a;
  tape.backward(c);
  CHECK(tape.grad(a)(0, 0) == 3.0);
}

TEST_CASE("gradient of a sum is the sum of gradients") {
  ad::Tape tape;
  ad::Var a = tape.variable(Matrix::Constant(2, 2, 1.5));
  ad::Var f = ad::sum(ad::square(a));
  ad::Var g = ad::sum(ad::exp(a));
  tape.backward(f + g);
  const Matrix both = tape.grad(a);
  tape.backward(f);
  const Matrix gf = tape.grad(a);
  tape.backward(g);
  const Matrix gg = tape.grad(a);
  CHECK((both - gf - gg).norm() < 1e-14);
}

TEST_CASE("adam respects frozen entries and ascends") {
  ParamSet params;
  params.add("x", Matrix::Constant(2, 1, 1.0));
  params.freeze("x", 1, 0);
  Adam adam(0.1);
  for (int i = 0; i < 50; ++i) {
    // maximise -(x-3)^2
    Matrix g = -2.0 * (params["x"].value.array() - 3.0).matrix();
    adam.step(params, {g}, true);
  }
  CHECK(params["x"].value(0, 0) > 2.5);
  CHECK(params["x"].value(1, 0) == 1.0);
  const auto flat = params.flatten();
  CHECK(flat.size() == 2);
  params.assign(std::vector<double>{4.0, 5.0});
  CHECK(params["x"].value(1, 0) == 5.0);
}
