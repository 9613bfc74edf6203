#pragma once

// Differentiable operations on tape variables.

#include <vector>

#include "lft/numcore/tape.hpp"

namespace lft::ad {

// Arithmetic ---------------------------------------------------------------

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator*(double s, const Var& a);
inline Var operator*(const Var& a, double s) { return s * a; }
Var operator+(const Var& a, double c);
inline Var operator+(double c, const Var& a) { return a + c; }
inline Var operator-(const Var& a, double c) { return a + (-c); }

Var hadamard(const Var& a, const Var& b);
Var matmul(const Var& a, const Var& b);
Var matmul(const Matrix& a, const Var& b);
Var matmul(const Var& a, const Matrix& b);
/// Elementwise product with a constant of the same shape.
Var mul_const(const Var& a, const Matrix& c);

/// x * s for a 1x1 node s.
Var scale(const Var& x, const Var& s);
/// Adds column vector v (n x 1) to every column of x (n x m).
Var add_col(const Var& x, const Var& v);
/// Multiplies row i of x by v(i).
Var mul_col(const Var& x, const Var& v);
/// Adds row vector r (1 x m) to every row of x (n x m).
Var add_row(const Var& x, const Var& r);

// Elementwise functions ----------------------------------------------------

Var exp(const Var& x);
Var log(const Var& x);
Var softplus(const Var& x);
Var sigmoid(const Var& x);
Var square(const Var& x);
/// |x| with subgradient 0 at x = 0.
Var abs(const Var& x);
/// Gaussian error linear unit, exact erf form.
Var gelu(const Var& x);

// Reductions and shape -----------------------------------------------------

Var sum(const Var& x);
Var sum_squares(const Var& x);
Var transpose(const Var& x);
/// Column-major reshape (Eigen storage order).
Var reshape(const Var& x, Index rows, Index cols);
Var block(const Var& x, Index row, Index col, Index rows, Index cols);
inline Var row(const Var& x, Index r) { return block(x, r, 0, 1, x.cols()); }
inline Var col(const Var& x, Index c) { return block(x, 0, c, x.rows(), 1); }
Var vstack(const std::vector<Var>& parts);
Var hstack(const std::vector<Var>& parts);
/// Diagonal of a square matrix as an n x 1 column.
Var diagonal(const Var& x);

// Dense factorisations -----------------------------------------------------

/// Lower Cholesky factor of (a + jitter I), with jitter escalation.
Var cholesky(const Var& a, double jitter);
/// L^{-1} B.
Var solve_lower(const Var& l, const Var& b);
/// L^{-T} B.
Var solve_lower_transpose(const Var& l, const Var& b);
/// Lower-triangular matrix from an unconstrained square matrix: strict lower
/// part copied, diagonal passed through softplus, upper part ignored.
Var tril_softplus_diag(const Var& raw);

// Tridiagonal systems ------------------------------------------------------

/// Solves A Y = B with A given by band nodes (lower: n-1, diag: n, upper:
/// n-1 column vectors). Backward: B̄ = A^{-T} Ȳ and Ā = -B̄ Y^T restricted
/// to the three bands.
Var tridiagonal_solve(const Var& lower, const Var& diag, const Var& upper, const Var& rhs);
/// A X for a constant tridiagonal A.
Var tridiagonal_multiply(const Vector& lower, const Vector& diag, const Vector& upper,
                         const Var& x);
/// base + sum_k coeffs[k] * vectors[k] for 1x1 coefficient nodes.
Var linear_combination(const Vector& base, const std::vector<Var>& coeffs,
                       const std::vector<Vector>& vectors);

}  // namespace lft::ad
