#include "lft/numcore/ops.hpp"

#include <cmath>
#include <string>

#include "lft/errors.hpp"

namespace lft::ad {

namespace {

void accumulate(Tape& tape, const Var& v, const Matrix& g) {
  if (v.requires_grad()) tape.grad_buffer(v.id()) += g;
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionMismatch(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) +
                            "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                            "x" + std::to_string(b.cols()) + ")");
  }
}

void require_scalar(const Var& s, const char* op) {
  if (s.rows() != 1 || s.cols() != 1) {
    throw DimensionMismatch(std::string(op) + ": expected a 1x1 node");
  }
}

template <class Value, class Grad>
Var unary(const Var& x, Value value_fn, Grad grad_fn) {
  Tape& tape = x.tape();
  Matrix out = value_fn(x.value().array()).matrix();
  return tape.record(std::move(out), {x}, [x, grad_fn](Tape& t, int self) {
    const Matrix& g = t.grad_buffer(self);
    const Matrix d = grad_fn(t.value(x.id()).array(), t.value(self).array()).matrix();
    t.grad_buffer(x.id()).array() += g.array() * d.array();
  });
}

Matrix phi_lower_half_diag(const Matrix& m) {
  Matrix out = m.triangularView<Eigen::Lower>();
  out.diagonal() *= 0.5;
  return out;
}

}  // namespace

Var operator+(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return a.tape().record(a.value() + b.value(), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& g = t.grad_buffer(self);
    accumulate(t, a, g);
    accumulate(t, b, g);
  });
}

Var operator-(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return a.tape().record(a.value() - b.value(), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& g = t.grad_buffer(self);
    accumulate(t, a, g);
    if (b.requires_grad()) t.grad_buffer(b.id()) -= g;
  });
}

Var operator-(const Var& a) { return -1.0 * a; }

Var operator*(double s, const Var& a) {
  return a.tape().record(s * a.value(), {a}, [a, s](Tape& t, int self) {
    t.grad_buffer(a.id()) += s * t.grad_buffer(self);
  });
}

Var operator+(const Var& a, double c) {
  return a.tape().record((a.value().array() + c).matrix(), {a}, [a](Tape& t, int self) {
    t.grad_buffer(a.id()) += t.grad_buffer(self);
  });
}

Var hadamard(const Var& a, const Var& b) {
  require_same_shape(a, b, "hadamard");
  return a.tape().record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& g = t.grad_buffer(self);
    if (a.requires_grad()) t.grad_buffer(a.id()) += g.cwiseProduct(t.value(b.id()));
    if (b.requires_grad()) t.grad_buffer(b.id()) += g.cwiseProduct(t.value(a.id()));
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw DimensionMismatch("matmul: inner dimensions differ");
  return a.tape().record(a.value() * b.value(), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& g = t.grad_buffer(self);
    if (a.requires_grad()) t.grad_buffer(a.id()).noalias() += g * t.value(b.id()).transpose();
    if (b.requires_grad()) t.grad_buffer(b.id()).noalias() += t.value(a.id()).transpose() * g;
  });
}

Var matmul(const Matrix& a, const Var& b) {
  if (a.cols() != b.rows()) throw DimensionMismatch("matmul: inner dimensions differ");
  return b.tape().record(a * b.value(), {b}, [a, b](Tape& t, int self) {
    t.grad_buffer(b.id()).noalias() += a.transpose() * t.grad_buffer(self);
  });
}

Var matmul(const Var& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw DimensionMismatch("matmul: inner dimensions differ");
  return a.tape().record(a.value() * b, {a}, [a, b](Tape& t, int self) {
    t.grad_buffer(a.id()).noalias() += t.grad_buffer(self) * b.transpose();
  });
}

Var mul_const(const Var& a, const Matrix& c) {
  if (a.rows() != c.rows() || a.cols() != c.cols()) {
    throw DimensionMismatch("mul_const: shape mismatch");
  }
  return a.tape().record(a.value().cwiseProduct(c), {a}, [a, c](Tape& t, int self) {
    t.grad_buffer(a.id()) += t.grad_buffer(self).cwiseProduct(c);
  });
}

Var scale(const Var& x, const Var& s) {
  require_scalar(s, "scale");
  return x.tape().record(x.value() * s.scalar(), {x, s}, [x, s](Tape& t, int self) {
    const Matrix& g = t.grad_buffer(self);
    if (x.requires_grad()) t.grad_buffer(x.id()) += g * t.value(s.id())(0, 0);
    if (s.requires_grad()) t.grad_buffer(s.id())(0, 0) += g.cwiseProduct(t.value(x.id())).sum();
  });
}

Var add_col(const Var& x, const Var& v) {
  if (v.cols() != 1 || v.rows() != x.rows()) throw DimensionMismatch("add_col: shape mismatch");
  Matrix out = x.value().colwise() + v.value().col(0);
  return x.tape().record(std::move(out), {x, v}, [x, v](Tape& t, int self) {
    const Matrix& g = t.grad_buffer(self);
    accumulate(t, x, g);
    if (v.requires_grad()) t.grad_buffer(v.id()) += g.rowwise().sum();
  });
}

Var mul_col(const Var& x, const Var& v) {
  if (v.cols() != 1 || v.rows() != x.rows()) throw DimensionMismatch("mul_col: shape mismatch");
  Matrix out = v.value().col(0).asDiagonal() * x.value();
  return x.tape().record(std::move(out), {x, v}, [x, v](Tape& t, int self) {
    const Matrix& g = t.grad_buffer(self);
    if (x.requires_grad()) t.grad_buffer(x.id()) += t.value(v.id()).col(0).asDiagonal() * g;
    if (v.requires_grad()) {
      t.grad_buffer(v.id()) += g.cwiseProduct(t.value(x.id())).rowwise().sum();
    }
  });
}

Var add_row(const Var& x, const Var& r) {
  if (r.rows() != 1 || r.cols() != x.cols()) throw DimensionMismatch("add_row: shape mismatch");
  Matrix out = x.value().rowwise() + r.value().row(0);
  return x.tape().record(std::move(out), {x, r}, [x, r](Tape& t, int self) {
    const Matrix& g = t.grad_buffer(self);
    accumulate(t, x, g);
    if (r.requires_grad()) t.grad_buffer(r.id()) += g.colwise().sum();
  });
}

Var exp(const Var& x) {
  return unary(
      x, [](const auto& a) { return a.exp(); },
      [](const auto&, const auto& out) { return out; });
}

Var log(const Var& x) {
  if ((x.value().array() <= 0.0).any()) throw DomainError("log: nonpositive argument");
  return unary(
      x, [](const auto& a) { return a.log(); },
      [](const auto& a, const auto&) { return a.inverse(); });
}

Var softplus(const Var& x) {
  return unary(
      x,
      [](const auto& a) {
        return a.max(0.0) + (-a.abs()).exp().log1p();
      },
      [](const auto& a, const auto&) {
        return a.unaryExpr([](double v) { return lft::sigmoid(v); });
      });
}

Var sigmoid(const Var& x) {
  return unary(
      x, [](const auto& a) { return a.unaryExpr([](double v) { return lft::sigmoid(v); }); },
      [](const auto&, const auto& out) { return out * (1.0 - out); });
}

Var square(const Var& x) {
  return unary(
      x, [](const auto& a) { return a.square(); },
      [](const auto& a, const auto&) { return 2.0 * a; });
}

Var abs(const Var& x) {
  return unary(
      x, [](const auto& a) { return a.abs(); },
      [](const auto& a, const auto&) {
        return a.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
      });
}

Var gelu(const Var& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary(
      x,
      [](const auto& a) {
        return a.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); });
      },
      [](const auto& a, const auto&) {
        return a.unaryExpr([](double v) {
          return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
        });
      });
}

Var sum(const Var& x) {
  return x.tape().record(Matrix::Constant(1, 1, x.value().sum()), {x}, [x](Tape& t, int self) {
    t.grad_buffer(x.id()).array() += t.grad_buffer(self)(0, 0);
  });
}

Var sum_squares(const Var& x) {
  return x.tape().record(Matrix::Constant(1, 1, x.value().squaredNorm()), {x},
                         [x](Tape& t, int self) {
                           t.grad_buffer(x.id()) +=
                               (2.0 * t.grad_buffer(self)(0, 0)) * t.value(x.id());
                         });
}

Var transpose(const Var& x) {
  return x.tape().record(x.value().transpose(), {x}, [x](Tape& t, int self) {
    t.grad_buffer(x.id()) += t.grad_buffer(self).transpose();
  });
}

Var reshape(const Var& x, Index rows, Index cols) {
  if (rows * cols != x.value().size()) throw DimensionMismatch("reshape: element count differs");
  Matrix v = x.value().reshaped(rows, cols);
  return x.tape().record(std::move(v), {x}, [x](Tape& t, int self) {
    const Matrix& g = t.grad_buffer(self);
    Matrix& gx = t.grad_buffer(x.id());
    gx += g.reshaped(gx.rows(), gx.cols());
  });
}

Var block(const Var& x, Index row0, Index col0, Index rows, Index cols) {
  if (row0 < 0 || col0 < 0 || row0 + rows > x.rows() || col0 + cols > x.cols()) {
    throw DimensionMismatch("block: out of range");
  }
  return x.tape().record(x.value().block(row0, col0, rows, cols), {x},
                         [x, row0, col0, rows, cols](Tape& t, int self) {
                           t.grad_buffer(x.id()).block(row0, col0, rows, cols) +=
                               t.grad_buffer(self);
                         });
}

Var vstack(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionMismatch("vstack: no parts");
  Index rows = 0;
  const Index cols = parts.front().cols();
  for (const Var& p : parts) {
    if (p.cols() != cols) throw DimensionMismatch("vstack: column counts differ");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return parts.front().tape().record(std::move(out), parts, [parts](Tape& t, int self) {
    const Matrix& g = t.grad_buffer(self);
    Index offset = 0;
    for (const Var& p : parts) {
      const Index r = t.value(p.id()).rows();
      if (p.requires_grad()) t.grad_buffer(p.id()) += g.middleRows(offset, r);
      offset += r;
    }
  });
}

Var hstack(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionMismatch("hstack: no parts");
  Index cols = 0;
  const Index rows = parts.front().rows();
  for (const Var& p : parts) {
    if (p.rows() != rows) throw DimensionMismatch("hstack: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return parts.front().tape().record(std::move(out), parts, [parts](Tape& t, int self) {
    const Matrix& g = t.grad_buffer(self);
    Index offset = 0;
    for (const Var& p : parts) {
      const Index c = t.value(p.id()).cols();
      if (p.requires_grad()) t.grad_buffer(p.id()) += g.middleCols(offset, c);
      offset += c;
    }
  });
}

Var diagonal(const Var& x) {
  if (x.rows() != x.cols()) throw DimensionMismatch("diagonal: matrix not square");
  return x.tape().record(Matrix(x.value().diagonal()), {x}, [x](Tape& t, int self) {
    t.grad_buffer(x.id()).diagonal() += t.grad_buffer(self).col(0);
  });
}

Var cholesky(const Var& a, double jitter) {
  CholeskyFactor factor = cholesky_with_jitter(a.value(), jitter);
  return a.tape().record(std::move(factor.lower), {a}, [a](Tape& t, int self) {
    const Matrix& l = t.value(self);
    const Matrix lbar = t.grad_buffer(self).triangularView<Eigen::Lower>();
    const Matrix p = phi_lower_half_diag(l.transpose() * lbar);
    const Matrix x = lft::solve_lower_transpose(l, p);
    const Matrix s = lft::solve_lower_transpose(l, x.transpose()).transpose();
    t.grad_buffer(a.id()) += 0.5 * (s + s.transpose());
  });
}

Var solve_lower(const Var& l, const Var& b) {
  if (l.rows() != l.cols() || l.cols() != b.rows()) {
    throw DimensionMismatch("solve_lower: shape mismatch");
  }
  return l.tape().record(lft::solve_lower(l.value(), b.value()), {l, b}, [l, b](Tape& t, int self) {
    const Matrix bbar = lft::solve_lower_transpose(t.value(l.id()), t.grad_buffer(self));
    if (b.requires_grad()) t.grad_buffer(b.id()) += bbar;
    if (l.requires_grad()) {
      const Matrix lbar = -(bbar * t.value(self).transpose());
      t.grad_buffer(l.id()) += Matrix(lbar.triangularView<Eigen::Lower>());
    }
  });
}

Var solve_lower_transpose(const Var& l, const Var& b) {
  if (l.rows() != l.cols() || l.cols() != b.rows()) {
    throw DimensionMismatch("solve_lower_transpose: shape mismatch");
  }
  return l.tape().record(lft::solve_lower_transpose(l.value(), b.value()), {l, b},
                         [l, b](Tape& t, int self) {
                           const Matrix bbar =
                               lft::solve_lower(t.value(l.id()), t.grad_buffer(self));
                           if (b.requires_grad()) t.grad_buffer(b.id()) += bbar;
                           if (l.requires_grad()) {
                             const Matrix lbar = -(t.value(self) * bbar.transpose());
                             t.grad_buffer(l.id()) += Matrix(lbar.triangularView<Eigen::Lower>());
                           }
                         });
}

Var tril_softplus_diag(const Var& raw) {
  if (raw.rows() != raw.cols()) throw DimensionMismatch("tril_softplus_diag: not square");
  Matrix out = raw.value().triangularView<Eigen::StrictlyLower>();
  for (Index i = 0; i < out.rows(); ++i) out(i, i) = lft::softplus(raw.value()(i, i));
  return raw.tape().record(std::move(out), {raw}, [raw](Tape& t, int self) {
    const Matrix& g = t.grad_buffer(self);
    Matrix& rg = t.grad_buffer(raw.id());
    rg += Matrix(g.triangularView<Eigen::StrictlyLower>());
    const Matrix& rv = t.value(raw.id());
    for (Index i = 0; i < g.rows(); ++i) rg(i, i) += g(i, i) * lft::sigmoid(rv(i, i));
  });
}

Var tridiagonal_solve(const Var& lower, const Var& diag, const Var& upper, const Var& rhs) {
  const Index n = diag.rows();
  if (diag.cols() != 1 || lower.cols() != 1 || upper.cols() != 1 || lower.rows() != n - 1 ||
      upper.rows() != n - 1 || rhs.rows() != n) {
    throw DimensionMismatch("tridiagonal_solve: band shapes inconsistent");
  }
  Matrix y = lft::solve_tridiagonal(lower.value().col(0), diag.value().col(0),
                                    upper.value().col(0), rhs.value());
  return diag.tape().record(
      std::move(y), {lower, diag, upper, rhs}, [lower, diag, upper, rhs](Tape& t, int self) {
        const Matrix& ybar = t.grad_buffer(self);
        const Matrix& y = t.value(self);
        // A^T has the sub- and super-diagonals swapped.
        const Matrix bbar = lft::solve_tridiagonal(t.value(upper.id()).col(0),
                                                   t.value(diag.id()).col(0),
                                                   t.value(lower.id()).col(0), ybar);
        if (rhs.requires_grad()) t.grad_buffer(rhs.id()) += bbar;
        const Index m = y.rows();
        if (diag.requires_grad()) {
          t.grad_buffer(diag.id()).col(0) -= bbar.cwiseProduct(y).rowwise().sum();
        }
        if (lower.requires_grad() && m > 1) {
          t.grad_buffer(lower.id()).col(0) -=
              bbar.bottomRows(m - 1).cwiseProduct(y.topRows(m - 1)).rowwise().sum();
        }
        if (upper.requires_grad() && m > 1) {
          t.grad_buffer(upper.id()).col(0) -=
              bbar.topRows(m - 1).cwiseProduct(y.bottomRows(m - 1)).rowwise().sum();
        }
      });
}

Var tridiagonal_multiply(const Vector& lower, const Vector& diag, const Vector& upper,
                         const Var& x) {
  Matrix out = lft::tridiagonal_multiply(lower, diag, upper, x.value());
  return x.tape().record(std::move(out), {x}, [lower, diag, upper, x](Tape& t, int self) {
    t.grad_buffer(x.id()) += lft::tridiagonal_multiply(upper, diag, lower, t.grad_buffer(self));
  });
}

Var linear_combination(const Vector& base, const std::vector<Var>& coeffs,
                       const std::vector<Vector>& vectors) {
  if (coeffs.size() != vectors.size() || coeffs.empty()) {
    throw DimensionMismatch("linear_combination: coefficient/vector count mismatch");
  }
  Matrix out = base;
  for (std::size_t k = 0; k < coeffs.size(); ++k) {
    require_scalar(coeffs[k], "linear_combination");
    if (vectors[k].size() != base.size()) throw DimensionMismatch("linear_combination: length");
    out.col(0) += coeffs[k].scalar() * vectors[k];
  }
  return coeffs.front().tape().record(std::move(out), coeffs, [coeffs, vectors](Tape& t, int self) {
    const Matrix& g = t.grad_buffer(self);
    for (std::size_t k = 0; k < coeffs.size(); ++k) {
      if (coeffs[k].requires_grad()) t.grad_buffer(coeffs[k].id())(0, 0) += g.col(0).dot(vectors[k]);
    }
  });
}

}  // namespace lft::ad
