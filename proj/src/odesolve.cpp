#include "lft/odesolve.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "lft/errors.hpp"
#include "lft/interp.hpp"

namespace lft::ode {

using ad::Var;

ForcePath::ForcePath(std::vector<double> knots, std::vector<Var> values)
    : knots_(std::move(knots)), values_(std::move(values)) {
  for (std::size_t i = 1; i < knots_.size(); ++i) {
    if (!(knots_[i] > knots_[i - 1])) throw NonMonotonicKnots("ForcePath: knots must increase");
  }
  for (const Var& v : values_) {
    if (v.rows() != static_cast<Index>(knots_.size())) {
      throw DimensionMismatch("ForcePath: force rows must match knot count");
    }
    if (v.cols() != values_.front().cols()) throw DimensionMismatch("ForcePath: sample counts differ");
  }
  if (!values_.empty() && knots_.size() < 2) throw std::invalid_argument("ForcePath: need two knots");
}

Var ForcePath::at(double t) const {
  if (values_.empty()) return {};
  const double scale = std::max(1.0, std::abs(t));
  const auto it = std::lower_bound(knots_.begin(), knots_.end(), t - 1e-12 * scale);
  std::vector<Var> rows;
  rows.reserve(values_.size());
  if (it != knots_.end() && std::abs(*it - t) <= 1e-12 * scale) {
    const Index k = static_cast<Index>(it - knots_.begin());
    for (const Var& v : values_) rows.push_back(ad::row(v, k));
  } else {
    const double q[1] = {t};
    const Matrix w = interp::interpolation_weights(knots_, q);
    for (const Var& v : values_) rows.push_back(ad::matmul(w, v));
  }
  return rows.size() == 1 ? rows.front() : ad::vstack(rows);
}

namespace {

void check_problem(const OdeProblem& p) {
  if (!p.rhs) throw std::invalid_argument("ode: missing right-hand side");
  if (!p.y0.valid()) throw std::invalid_argument("ode: missing initial state");
  if (p.output_times.empty()) throw std::invalid_argument("ode: no output times");
  if (p.output_times.front() < p.t0) throw std::invalid_argument("ode: output time before t0");
  for (std::size_t i = 1; i < p.output_times.size(); ++i) {
    if (!(p.output_times[i] > p.output_times[i - 1])) {
      throw NonMonotonicKnots("ode: output times must be strictly increasing");
    }
  }
}

Index substeps(double width, double h) {
  return std::max<Index>(1, static_cast<Index>(std::ceil(width / h - 1e-9)));
}

void require_finite(const Var& y, double t) {
  if (!all_finite(y.value())) {
    throw NonFiniteState("ode: state became non-finite at t = " + std::to_string(t));
  }
}

}  // namespace

std::vector<double> rk4_query_times(double t0, const std::vector<double>& output_times, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("rk4: step must be positive");
  std::vector<double> times{t0};
  double start = t0;
  for (double end : output_times) {
    if (end <= start) continue;
    const Index n = substeps(end - start, h);
    const double step = (end - start) / static_cast<double>(n);
    for (Index k = 0; k < n; ++k) {
      const double t = start + static_cast<double>(k) * step;
      times.push_back(t + 0.5 * step);
      times.push_back(k + 1 == n ? end : t + step);
    }
    start = end;
  }
  return times;
}

Trajectory rk4_solve(const OdeProblem& problem, const ForcePath& force, double h) {
  check_problem(problem);
  if (!(h > 0.0)) throw std::invalid_argument("rk4: step must be positive");
  Trajectory out;
  Var y = problem.y0;
  require_finite(y, problem.t0);
  double start = problem.t0;
  for (double end : problem.output_times) {
    if (end > start) {
      const Index n = substeps(end - start, h);
      const double step = (end - start) / static_cast<double>(n);
      for (Index k = 0; k < n; ++k) {
        const double t = start + static_cast<double>(k) * step;
        const double t_mid = t + 0.5 * step;
        const double t_end = k + 1 == n ? end : t + step;
        const Var f0 = force.at(t);
        const Var f_mid = force.at(t_mid);
        const Var f1 = force.at(t_end);
        const Var k1 = problem.rhs(t, y, f0);
        const Var k2 = problem.rhs(t_mid, y + (0.5 * step) * k1, f_mid);
        const Var k3 = problem.rhs(t_mid, y + (0.5 * step) * k2, f_mid);
        const Var k4 = problem.rhs(t_end, y + step * k3, f1);
        y = y + (step / 6.0) * (k1 + 2.0 * (k2 + k3) + k4);
        require_finite(y, t_end);
      }
      start = end;
    }
    out.times.push_back(end);
    out.states.push_back(y);
  }
  return out;
}

namespace {

// Dormand-Prince 5(4) tableau.
constexpr std::array<double, 7> kC{0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
constexpr double kA[7][6] = {
    {},
    {1.0 / 5},
    {3.0 / 40, 9.0 / 40},
    {44.0 / 45, -56.0 / 15, 32.0 / 9},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
    {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
};
// fifth-order minus embedded fourth-order weights
constexpr std::array<double, 7> kE{71.0 / 57600,      0.0,         -71.0 / 16695, 71.0 / 1920,
                                   -17253.0 / 339200, 22.0 / 525, -1.0 / 40};

struct DpTrial {
  std::array<Var, 7> k;
  Var y_new;
  bool finite = true;
};

// One Dormand-Prince trial step from (t, y) with first stage k1 already known.
DpTrial dp_trial(const OdeProblem& problem, const ForcePath& force, double t, double step,
                 const Var& y, const Var& k1) {
  DpTrial r;
  r.k[0] = k1;
  for (int s = 1; s < 7 && r.finite; ++s) {
    Var acc;
    for (int j = 0; j < s; ++j) {
      if (kA[s][j] == 0.0) continue;
      const Var term = (step * kA[s][j]) * r.k[static_cast<std::size_t>(j)];
      acc = acc.valid() ? acc + term : term;
    }
    const Var ys = y + acc;
    if (s == 6) r.y_new = ys;
    const double ts = s == 6 ? t + step : t + kC[static_cast<std::size_t>(s)] * step;
    r.k[static_cast<std::size_t>(s)] = problem.rhs(ts, ys, force.at(ts));
    r.finite = all_finite(r.k[static_cast<std::size_t>(s)].value()) && all_finite(ys.value());
  }
  return r;
}

double error_norm(const Matrix& err, const Matrix& y0, const Matrix& y1, double rtol, double atol) {
  double acc = 0.0;
  for (Index i = 0; i < err.size(); ++i) {
    const double sc = atol + rtol * std::max(std::abs(y0.data()[i]), std::abs(y1.data()[i]));
    const double r = err.data()[i] / sc;
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(err.size()));
}

}  // namespace

AdaptiveResult adaptive_solve(const OdeProblem& problem, const ForcePath& force,
                              const AdaptiveOptions& opt) {
  check_problem(problem);
  if (!(opt.rtol > 0.0) || !(opt.atol > 0.0)) throw std::invalid_argument("adaptive: tolerances must be positive");
  ad::Tape& tape = problem.y0.tape();
  AdaptiveResult result;
  Var y = problem.y0;
  require_finite(y, problem.t0);
  double t = problem.t0;
  Var k1 = problem.rhs(t, y, force.at(t));
  require_finite(k1, t);

  if (!opt.replay_steps.empty()) {
    std::size_t next = 0;
    for (double target : problem.output_times) {
      while (t < target) {
        if (next >= opt.replay_steps.size()) throw std::invalid_argument("adaptive: replay ends early");
        const double end = std::min(opt.replay_steps[next++], target);
        const double step = end - t;
        const DpTrial trial = dp_trial(problem, force, t, step, y, k1);
        if (!trial.finite) throw NonFiniteState("adaptive: non-finite state during replay");
        y = trial.y_new;
        k1 = trial.k[6];
        t = end;
        ++result.accepted;
        result.step_ends.push_back(end);
      }
      result.trajectory.times.push_back(target);
      result.trajectory.states.push_back(y);
    }
    return result;
  }

  // Initial step from the scaled sizes of y and dy/dt.
  const Matrix sc = (opt.atol + opt.rtol * y.value().array().abs()).matrix();
  const double d0 = std::sqrt((y.value().array() / sc.array()).square().mean());
  const double d1 = std::sqrt((k1.value().array() / sc.array()).square().mean());
  const double span = problem.output_times.back() - problem.t0;
  double h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  if (span > 0.0) h = std::min(h, span);
  double err_prev = 1e-4;

  constexpr double kSafety = 0.9;
  constexpr double kAlpha = 0.17;  // PI controller exponents for order 5
  constexpr double kBeta = 0.04;

  for (double target : problem.output_times) {
    while (t < target) {
      if (result.accepted + result.rejected >= opt.max_steps) {
        throw StepSizeUnderflow("adaptive: step budget exhausted");
      }
      if (h < opt.h_min) {
        throw StepSizeUnderflow("adaptive: step size fell below " + std::to_string(opt.h_min));
      }
      const bool clipped = t + h >= target;
      const double end = clipped ? target : t + h;
      const double step = end - t;
      const std::size_t mark = tape.size();
      const DpTrial trial = dp_trial(problem, force, t, step, y, k1);
      const std::array<Var, 7>& k = trial.k;
      const Var& y_new = trial.y_new;
      const bool finite = trial.finite;
      double err = std::numeric_limits<double>::infinity();
      if (finite) {
        Matrix e = Matrix::Zero(y.rows(), y.cols());
        for (int s = 0; s < 7; ++s) {
          if (kE[static_cast<std::size_t>(s)] != 0.0) e += (step * kE[static_cast<std::size_t>(s)]) * k[static_cast<std::size_t>(s)].value();
        }
        err = error_norm(e, y.value(), y_new.value(), opt.rtol, opt.atol);
      }
      if (err <= 1.0) {
        ++result.accepted;
        t = end;
        result.step_ends.push_back(t);
        y = y_new;
        k1 = k[6];
        const double e = std::max(err, 1e-10);
        const double fac = kSafety * std::pow(e, -kAlpha) * std::pow(err_prev, kBeta);
        // a clipped step says nothing about the controller's own proposal
        const double proposal = std::max(step, clipped ? h : step);
        h = proposal * std::clamp(fac, 0.2, 5.0);
        err_prev = e;
      } else {
        ++result.rejected;
        tape.rewind(mark);
        const double fac = std::isfinite(err) ? kSafety * std::pow(err, -0.2) : 0.2;
        h = step * std::clamp(fac, 0.2, 1.0);
      }
    }
    result.trajectory.times.push_back(target);
    result.trajectory.states.push_back(y);
  }
  return result;
}

Var stack_states(const Trajectory& trajectory) {
  return trajectory.states.size() == 1 ? trajectory.states.front() : ad::hstack(trajectory.states);
}

Matrix tile_observations(const Matrix& y, Index samples) {
  Matrix out(y.rows(), y.cols() * samples);
  for (Index n = 0; n < y.cols(); ++n) {
    for (Index s = 0; s < samples; ++s) out.col(n * samples + s) = y.col(n);
  }
  return out;
}

}  // namespace lft::ode
