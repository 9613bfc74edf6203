#include "lft/fem1d.hpp"

#include <cmath>

#include "lft/errors.hpp"

namespace lft::fem {

using ad::Var;

Mesh1D Mesh1D::uniform(double length, Index elements) {
  if (elements < 1) throw std::invalid_argument("Mesh1D: need at least one element");
  if (!(length > 0.0)) throw std::invalid_argument("Mesh1D: length must be positive");
  Mesh1D m;
  const double h = length / static_cast<double>(elements);
  if (h < 1e-12) throw DegenerateElement("Mesh1D: element size below 1e-12");
  m.sizes_.assign(static_cast<std::size_t>(elements), h);
  for (Index k = 0; k <= elements; ++k) m.vertices_.push_back(static_cast<double>(k) * h);
  m.vertices_.back() = length;
  return m;
}

Mesh1D Mesh1D::from_points(std::vector<double> vertices) {
  if (vertices.size() < 2) throw std::invalid_argument("Mesh1D: need at least two vertices");
  Mesh1D m;
  for (std::size_t i = 1; i < vertices.size(); ++i) {
    const double h = vertices[i] - vertices[i - 1];
    if (!(h > 0.0)) throw NonMonotonicKnots("Mesh1D: vertices must be strictly increasing");
    if (h < 1e-12) throw DegenerateElement("Mesh1D: element size below 1e-12");
    m.sizes_.push_back(h);
  }
  m.vertices_ = std::move(vertices);
  return m;
}

Matrix Bands::dense() const { return tridiagonal_dense(off, diag, off); }

FemSystem assemble(const Mesh1D& mesh) {
  const Index n = mesh.num_vertices();
  FemSystem sys;
  sys.mass.diag = Vector::Zero(n);
  sys.mass.off = Vector::Zero(n - 1);
  sys.stiffness.diag = Vector::Zero(n);
  sys.stiffness.off = Vector::Zero(n - 1);
  for (Index e = 0; e + 1 < n; ++e) {
    const double h = mesh.element_sizes()[static_cast<std::size_t>(e)];
    if (h < 1e-12) throw DegenerateElement("assemble: element " + std::to_string(e) + " is degenerate");
    const double m = h / 6.0;
    sys.mass.diag(e) += 2.0 * m;
    sys.mass.diag(e + 1) += 2.0 * m;
    sys.mass.off(e) = m;
    const double k = 1.0 / h;
    sys.stiffness.diag(e) += k;
    sys.stiffness.diag(e + 1) += k;
    sys.stiffness.off(e) = -k;
  }
  return sys;
}

namespace {

// Band vectors with Dirichlet rows replaced by identity rows.
struct StepBands {
  Vector base_diag, m_diag, k_diag;
  Vector base_lower, m_lower, k_lower;
  Vector base_upper, m_upper, k_upper;
};

StepBands step_bands(const FemSystem& sys, const Dirichlet& bc) {
  const Index n = sys.size();
  StepBands b;
  b.base_diag = sys.mass.diag;
  b.m_diag = sys.mass.diag;
  b.k_diag = sys.stiffness.diag;
  b.base_lower = b.base_upper = sys.mass.off;
  b.m_lower = b.m_upper = sys.mass.off;
  b.k_lower = b.k_upper = sys.stiffness.off;
  auto identity_row = [&](Index r) {
    b.base_diag(r) = 1.0;
    b.m_diag(r) = 0.0;
    b.k_diag(r) = 0.0;
    if (r + 1 < n) b.base_upper(r) = b.m_upper(r) = b.k_upper(r) = 0.0;
    if (r > 0) b.base_lower(r - 1) = b.m_lower(r - 1) = b.k_lower(r - 1) = 0.0;
  };
  if (bc.left) identity_row(0);
  if (bc.right) identity_row(n - 1);
  return b;
}

}  // namespace

Var step_implicit_euler(const Var& y, const Var& u_next, double dt, const PdeParams& params,
                        const FemSystem& system, const Dirichlet& dirichlet) {
  const Index n = system.size();
  if (y.rows() != n || u_next.rows() != n || y.cols() != u_next.cols()) {
    throw DimensionMismatch("step_implicit_euler: state/force shape does not match the mesh");
  }
  if (!(dt > 0.0)) throw std::invalid_argument("step_implicit_euler: dt must be positive");
  const StepBands b = step_bands(system, dirichlet);
  const std::vector<Var> coeffs{params.decay, params.diffusion};
  const Var diag = ad::linear_combination(b.base_diag, coeffs, {dt * b.m_diag, dt * b.k_diag});
  const Var lower = ad::linear_combination(b.base_lower, coeffs, {dt * b.m_lower, dt * b.k_lower});
  const Var upper = ad::linear_combination(b.base_upper, coeffs, {dt * b.m_upper, dt * b.k_upper});
  const Var load = y + dt * ad::scale(u_next, params.sensitivity);
  Var rhs = ad::tridiagonal_multiply(system.mass.off, system.mass.diag, system.mass.off, load);
  if (dirichlet.left || dirichlet.right) {
    Matrix mask = Matrix::Ones(n, y.cols());
    if (dirichlet.left) mask.row(0).setZero();
    if (dirichlet.right) mask.row(n - 1).setZero();
    rhs = ad::mul_const(rhs, mask);
  }
  return ad::tridiagonal_solve(lower, diag, upper, rhs);
}

std::vector<Var> solve_pde(const Var& y0, const std::vector<Var>& forces, double dt,
                           const PdeParams& params, const FemSystem& system,
                           const Dirichlet& dirichlet) {
  std::vector<Var> states;
  states.reserve(forces.size());
  Var y = y0;
  for (const Var& u : forces) {
    y = step_implicit_euler(y, u, dt, params, system, dirichlet);
    if (!all_finite(y.value())) throw NonFiniteState("solve_pde: state became non-finite");
    states.push_back(y);
  }
  return states;
}

Matrix solve_pde(const Vector& y0, const Matrix& forces, double dt, double sensitivity,
                 double decay, double diffusion, const FemSystem& system,
                 const Dirichlet& dirichlet) {
  Matrix out(y0.size(), forces.cols());
  Matrix y = y0;
  for (Index k = 0; k < forces.cols(); ++k) {
    ad::Tape tape;
    const PdeParams p{tape.constant(sensitivity), tape.constant(decay), tape.constant(diffusion)};
    y = step_implicit_euler(tape.constant(y), tape.constant(Matrix(forces.col(k))), dt, p, system,
                            dirichlet)
            .value();
    if (!all_finite(y)) throw NonFiniteState("solve_pde: state became non-finite");
    out.col(k) = y;
  }
  return out;
}

Var discrete_laplacian(const Var& y, const FemSystem& system) {
  ad::Tape& tape = y.tape();
  const Index n = system.size();
  Var ky = ad::tridiagonal_multiply(system.stiffness.off, system.stiffness.diag,
                                    system.stiffness.off, y);
  Matrix mask = Matrix::Ones(n, y.cols());
  mask.row(0).setZero();
  mask.row(n - 1).setZero();
  ky = ad::mul_const(ky, mask);
  // Boundary rows of M become identity rows: the boundary values are pinned,
  // so only the interior block of M is inverted.
  Vector diag = system.mass.diag;
  Vector lower = system.mass.off;
  Vector upper = system.mass.off;
  diag(0) = diag(n - 1) = 1.0;
  upper(0) = 0.0;
  lower(n - 2) = 0.0;
  return ad::tridiagonal_solve(tape.constant(Matrix(lower)), tape.constant(Matrix(diag)),
                               tape.constant(Matrix(upper)), ky);
}

}  // namespace lft::fem
