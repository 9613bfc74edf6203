#pragma once

// Differentiable ODE integration. States are P x S matrices: S independent
// trajectories (Monte Carlo samples) advance together through one set of
// tape nodes.

#include <functional>
#include <vector>

#include "lft/numcore/ops.hpp"

namespace lft::ode {

/// Right-hand side dy/dt = rhs(t, y, f) with y: P x S and f: L x S (f may be
/// an invalid Var when the system has no forces).
using RhsFn = std::function<ad::Var(double t, const ad::Var& y, const ad::Var& f)>;

/// A force function of time built from sampled values at knot times. Exact
/// knot hits return the sampled row; other times use natural-spline weights.
class ForcePath {
 public:
  ForcePath() = default;
  /// `values[i]` holds force i at every knot, one column per trajectory.
  ForcePath(std::vector<double> knots, std::vector<ad::Var> values);

  /// L x S force values at time t, or an invalid Var for a force-free path.
  ad::Var at(double t) const;

  Index num_forces() const { return static_cast<Index>(values_.size()); }
  const std::vector<double>& knots() const { return knots_; }

 private:
  std::vector<double> knots_;
  std::vector<ad::Var> values_;
};

struct OdeProblem {
  RhsFn rhs;
  ad::Var y0;  // P x S at time t0
  double t0 = 0.0;
  std::vector<double> output_times;  // strictly increasing, all >= t0
};

struct Trajectory {
  std::vector<double> times;
  std::vector<ad::Var> states;  // one P x S node per output time
};

/// Times at which rk4_solve queries the force path: every step start and
/// midpoint plus the final time. Sample forces here to avoid interpolation.
std::vector<double> rk4_query_times(double t0, const std::vector<double>& output_times, double h);

/// Classical RK4. Each output interval is split into ceil(width/h) equal
/// steps. Throws NonFiniteState when the state leaves the finite range.
Trajectory rk4_solve(const OdeProblem& problem, const ForcePath& force, double h);

struct AdaptiveOptions {
  double rtol = 1e-6;
  double atol = 1e-8;
  double h_min = 1e-10;
  long max_steps = 1000000;
  /// When non-empty, take exactly these accepted step end times (from a
  /// previous AdaptiveResult) without error control.
  std::vector<double> replay_steps;
};

struct AdaptiveResult {
  Trajectory trajectory;
  long accepted = 0;
  long rejected = 0;
  std::vector<double> step_ends;  // end time of every accepted step
};

/// Dormand-Prince 5(4) with PI step-size control. Steps are shortened to
/// land on every output time. Rejected trial steps are rewound off the tape,
/// so gradients flow only through accepted steps (step sizes are treated as
/// constants). Replaying `step_ends` through `replay_steps` reproduces the
/// same discrete map, which is what the gradients differentiate.
AdaptiveResult adaptive_solve(const OdeProblem& problem, const ForcePath& force,
                              const AdaptiveOptions& options);

/// Output states side by side: P x (N*S), column n*S + s is trajectory s at
/// output time n.
ad::Var stack_states(const Trajectory& trajectory);

/// Observations repeated to line up with stack_states: column n*S + s of the
/// result is column n of y.
Matrix tile_observations(const Matrix& y, Index samples);

}  // namespace lft::ode
