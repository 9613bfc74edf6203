#pragma once

// P1 finite elements on a 1D mesh with implicit Euler time stepping for
//   dy/dt = S u - lambda y + D d2y/dx2,  y = 0 on the boundary.

#include <vector>

#include "lft/numcore/ops.hpp"

namespace lft::fem {

class Mesh1D {
 public:
  /// `elements` equal elements on [0, length]; every element size is exactly
  /// length / elements.
  static Mesh1D uniform(double length, Index elements);
  /// Mesh through the given strictly increasing vertices.
  static Mesh1D from_points(std::vector<double> vertices);

  const std::vector<double>& vertices() const { return vertices_; }
  const std::vector<double>& element_sizes() const { return sizes_; }
  Index num_vertices() const { return static_cast<Index>(vertices_.size()); }
  Index num_elements() const { return static_cast<Index>(sizes_.size()); }

 private:
  std::vector<double> vertices_;
  std::vector<double> sizes_;
};

/// Bands of a symmetric tridiagonal matrix (off has n - 1 entries).
struct Bands {
  Vector diag;
  Vector off;
  Matrix dense() const;
};

/// Mass and stiffness matrices over the mesh vertices.
struct FemSystem {
  Bands mass;
  Bands stiffness;
  Index size() const { return mass.diag.size(); }
};

/// Element-by-element assembly. Throws DegenerateElement when an element is
/// shorter than 1e-12.
FemSystem assemble(const Mesh1D& mesh);

/// Sensitivity S, decay lambda and diffusion D as 1x1 nodes.
struct PdeParams {
  ad::Var sensitivity;
  ad::Var decay;
  ad::Var diffusion;
};

struct Dirichlet {
  bool left = true;
  bool right = true;
};

/// One implicit Euler step for nodal states y (n x S) with force u_next
/// (n x S) taken at the new time level:
///   ((1 + dt lambda) M + dt D K) y' = M (y + dt S u_next),
/// with Dirichlet rows replaced by identity rows and zero right-hand side.
ad::Var step_implicit_euler(const ad::Var& y, const ad::Var& u_next, double dt,
                            const PdeParams& params, const FemSystem& system,
                            const Dirichlet& dirichlet = {});

/// Runs one step per entry of `forces` (each n x S, the force at step n+1).
/// Returns y^1 .. y^N.
std::vector<ad::Var> solve_pde(const ad::Var& y0, const std::vector<ad::Var>& forces, double dt,
                               const PdeParams& params, const FemSystem& system,
                               const Dirichlet& dirichlet = {});

/// Plain-value solve. `forces` is n x N (column k is the force at step k+1);
/// returns the n x N states after each step.
Matrix solve_pde(const Vector& y0, const Matrix& forces, double dt, double sensitivity,
                 double decay, double diffusion, const FemSystem& system,
                 const Dirichlet& dirichlet = {});

/// Discrete negative Laplacian with the boundary pinned: interior rows hold
/// M_II^{-1} (K y)_I, boundary rows are zero. The semi-discrete diffusion
/// term at interior nodes is -D times this.
ad::Var discrete_laplacian(const ad::Var& y, const FemSystem& system);

}  // namespace lft::fem
