#include "lft/synth.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace lft::synth {

namespace {

using RhsPlain = std::function<Vector(double, const Vector&)>;

/// Classical RK4 on plain values; each output interval is split into
/// ceil(width / h) equal steps. Row n of the result is the state at times[n].
Matrix rk4_plain(const RhsPlain& rhs, Vector y, double t0, const std::vector<double>& times,
                 double h) {
  Matrix out(static_cast<Index>(times.size()), y.size());
  double t = t0;
  for (std::size_t n = 0; n < times.size(); ++n) {
    const double width = times[n] - t;
    if (width > 0.0) {
      const long m = std::max(1L, static_cast<long>(std::ceil(width / h - 1e-9)));
      const double step = width / static_cast<double>(m);
      for (long i = 0; i < m; ++i) {
        const double ti = t + static_cast<double>(i) * step;
        const Vector k1 = rhs(ti, y);
        const Vector k2 = rhs(ti + 0.5 * step, y + 0.5 * step * k1);
        const Vector k3 = rhs(ti + 0.5 * step, y + 0.5 * step * k2);
        const Vector k4 = rhs(ti + step, y + step * k3);
        y += (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      }
      t = times[n];
    }
    if (!all_finite(y)) throw NonFiniteState("synthetic solve left the finite range");
    out.row(static_cast<Index>(n)) = y.transpose();
  }
  return out;
}

Matrix rbf_chol(const std::vector<double>& x, double lengthscale, double variance) {
  const Index n = static_cast<Index>(x.size());
  Matrix k(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      const double r = (x[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(j)]) / lengthscale;
      k(i, j) = variance * std::exp(-0.5 * r * r);
    }
  }
  return cholesky(k, 1e-8 * variance);
}

Matrix standard_normal(std::mt19937_64& rng, Index rows, Index cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

double uniform(std::mt19937_64& rng, double lo) {
  std::uniform_real_distribution<double> u(lo, 1.0);
  return u(rng);
}

Vector uniform_vector(std::mt19937_64& rng, Index n, double lo) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = uniform(rng, lo);
  return v;
}

void add_noise(Matrix& m, double std_dev, std::mt19937_64& rng, Index first_col, Index last_col) {
  std::normal_distribution<double> n(0.0, std_dev);
  for (Index c = first_col; c < last_col; ++c) {
    for (Index r = 0; r < m.rows(); ++r) m(r, c) += n(rng);
  }
}

std::vector<double> merged_times(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> all(a);
  all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  return all;
}

Index position(const std::vector<double>& sorted, double t) {
  return static_cast<Index>(std::lower_bound(sorted.begin(), sorted.end(), t) - sorted.begin());
}

}  // namespace

std::vector<double> linspace(double a, double b, Index n) {
  if (n < 2) throw std::invalid_argument("linspace: need at least two points");
  std::vector<double> v(static_cast<std::size_t>(n));
  const double step = (b - a) / static_cast<double>(n - 1);
  for (Index i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = a + static_cast<double>(i) * step;
  v.back() = b;
  return v;
}

Matrix sample_gp_1d(const std::vector<double>& times, double lengthscale, double variance,
                    Index draws, std::mt19937_64& rng) {
  const Matrix eps = standard_normal(rng, static_cast<Index>(times.size()), draws);
  return rbf_chol(times, lengthscale, variance) * eps;
}

Instance transcription(const TranscriptionSpec& spec, std::mt19937_64& rng) {
  const TimeGrid& g = spec.grid;
  if (spec.genes < 1) throw std::invalid_argument("transcription: need at least one gene");
  const Index forces =
      spec.response.kind == lfm::ResponseKind::hill ? std::max<Index>(1, spec.response.hill_weights.cols()) : 1;

  // truth force: a GP draw interpolated between 0.1-spaced knots
  const Index knots_n = static_cast<Index>(std::ceil((g.t1 - g.t0) / 0.1 - 1e-9)) + 1;
  const std::vector<double> knots = linspace(g.t0, g.t1, knots_n);
  Matrix draws = sample_gp_1d(knots, spec.force_lengthscale, spec.force_variance, forces, rng);
  const bool positive = spec.softplus_force || spec.response.kind != lfm::ResponseKind::identity;
  // a linear response cannot tell a constant force offset from the basal
  // rates, so raw draws are centred over the window
  if (!positive) draws.rowwise() -= draws.colwise().mean();
  std::vector<interp::CubicSpline> paths;
  for (Index i = 0; i < forces; ++i) {
    const Vector c = draws.col(i);
    paths.push_back(interp::fit_natural_cubic(
        knots, std::span<const double>(c.data(), static_cast<std::size_t>(c.size()))));
  }
  auto force_at = [&](double t) {
    std::vector<double> f(static_cast<std::size_t>(forces));
    for (Index i = 0; i < forces; ++i) {
      const double v = paths[static_cast<std::size_t>(i)].eval(t);
      f[static_cast<std::size_t>(i)] = positive ? softplus(v) : v;
    }
    return f;
  };

  lfm::TranscriptionParams p;
  if (spec.params) {
    p = *spec.params;
  } else {
    p.basal = uniform_vector(rng, spec.genes, spec.rate_min);
    p.sensitivity = uniform_vector(rng, spec.genes, spec.rate_min);
    p.decay = uniform_vector(rng, spec.genes, spec.rate_min);
  }
  lfm::ResponseFn response = spec.response;
  if (response.kind == lfm::ResponseKind::hill) {
    if (response.hill_weights.rows() != spec.genes) response.hill_weights = Matrix::Ones(spec.genes, forces);
    if (response.hill_offsets.size() != spec.genes) response.hill_offsets = Vector::Zero(spec.genes);
  }
  const RhsPlain rhs = [&](double t, const Vector& y) {
    const std::vector<double> f = force_at(t);
    return lfm::transcription_rhs(t, y, f, p, response);
  };

  Instance inst;
  inst.family = lfm::Family::transcription;
  inst.observed.times = linspace(g.t0, g.t1, g.points);
  inst.clean = rk4_plain(rhs, (p.basal.array() / p.decay.array()).matrix(), g.t0, inst.observed.times, spec.solver_step);
  inst.observed.values = inst.clean;
  add_noise(inst.observed.values, spec.noise_std, rng, 0, spec.genes);
  inst.force_times = linspace(g.t0, g.t1, g.force_points);
  inst.force.resize(g.force_points, forces);
  for (Index n = 0; n < g.force_points; ++n) {
    const std::vector<double> f = force_at(inst.force_times[static_cast<std::size_t>(n)]);
    for (Index i = 0; i < forces; ++i) inst.force(n, i) = f[static_cast<std::size_t>(i)];
  }
  for (Index j = 0; j < spec.genes; ++j) inst.truth.push_back({"basal_" + std::to_string(j), p.basal(j), false});
  for (Index j = 0; j < spec.genes; ++j) {
    inst.truth.push_back({"sensitivity_" + std::to_string(j), p.sensitivity(j), false});
  }
  for (Index j = 0; j < spec.genes; ++j) inst.truth.push_back({"decay_" + std::to_string(j), p.decay(j), false});
  return inst;
}

Instance lotka(const LotkaSpec& spec, std::mt19937_64& rng) {
  const TimeGrid& g = spec.grid;
  lfm::LotkaParams p;
  if (spec.params) {
    p = *spec.params;
  } else {
    p.growth = uniform(rng, spec.rate_min);
    p.decay = uniform(rng, spec.rate_min);
  }
  const RhsPlain rhs = [&](double, const Vector& s) {
    Vector d(2);
    d(0) = s(0) - s(0) * s(1);
    d(1) = p.growth * s(0) * s(1) - p.decay * s(1);
    return d;
  };
  Instance inst;
  inst.family = lfm::Family::lotka;
  inst.observed.times = linspace(g.t0, g.t1, g.points);
  inst.force_times = linspace(g.t0, g.t1, g.force_points);
  const std::vector<double> all = merged_times(inst.observed.times, inst.force_times);
  Vector y0(2);
  y0 << spec.prey0, spec.predator0;
  const Matrix sol = rk4_plain(rhs, y0, g.t0, all, spec.solver_step);
  inst.clean.resize(g.points, 1);
  for (Index n = 0; n < g.points; ++n) {
    inst.clean(n, 0) = sol(position(all, inst.observed.times[static_cast<std::size_t>(n)]), 1);
  }
  inst.force.resize(g.force_points, 1);
  for (Index n = 0; n < g.force_points; ++n) {
    inst.force(n, 0) = sol(position(all, inst.force_times[static_cast<std::size_t>(n)]), 0);
  }
  inst.observed.values = inst.clean;
  add_noise(inst.observed.values, spec.noise_std, rng, 0, 1);
  inst.truth = {{"growth", p.growth, false}, {"decay", p.decay, false}};
  return inst;
}

Instance reaction_diffusion(const ReactionDiffusionSpec& spec, std::mt19937_64& rng) {
  if (spec.elements < 2 || spec.steps < 2 || spec.refine < 1 || spec.substeps < 1) {
    throw std::invalid_argument("reaction_diffusion: grid too small");
  }
  std::array<double, 3> p{};
  if (spec.params) {
    p = *spec.params;
  } else {
    for (double& v : p) v = uniform(rng, spec.rate_min);
  }
  const fem::Mesh1D coarse = fem::Mesh1D::uniform(spec.length, spec.elements);
  const fem::Mesh1D fine = fem::Mesh1D::uniform(spec.length, spec.elements * spec.refine);
  const Index nf = spec.steps * spec.substeps;
  const std::vector<double> fine_times = linspace(0.0, spec.t1, nf + 1);
  const Index kf = fine.num_vertices();

  // separable RBF over (t, x): chol(Kt) E chol(Kx)^T
  const Matrix lt = rbf_chol(fine_times, spec.lengthscale_t, spec.force_variance);
  const Matrix lx = rbf_chol(fine.vertices(), spec.lengthscale_x, 1.0);
  const Matrix eps = standard_normal(rng, nf + 1, kf);
  const Matrix u = (lt * eps * lx.transpose()).unaryExpr([](double v) { return softplus(v); });

  const fem::FemSystem sys = fem::assemble(fine);
  const Matrix forces = u.bottomRows(nf).transpose();  // column m-1: force at t^m
  const Matrix y = fem::solve_pde(Vector::Zero(kf), forces, spec.t1 / static_cast<double>(nf), p[0],
                                  p[1], p[2], sys);

  Instance inst;
  inst.family = lfm::Family::reaction_diffusion;
  inst.observed.times = linspace(0.0, spec.t1, spec.steps + 1);
  inst.observed.space = coarse.vertices();
  const Index k = coarse.num_vertices();
  inst.clean = Matrix::Zero(spec.steps + 1, k);
  inst.force.resize(spec.steps + 1, k);
  for (Index n = 0; n <= spec.steps; ++n) {
    for (Index j = 0; j < k; ++j) {
      if (n > 0) inst.clean(n, j) = y(j * spec.refine, n * spec.substeps - 1);
      inst.force(n, j) = u(n * spec.substeps, j * spec.refine);
    }
  }
  inst.observed.values = inst.clean;
  add_noise(inst.observed.values, spec.noise_std, rng, 1, k - 1);
  inst.force_times = inst.observed.times;
  inst.force_space = inst.observed.space;
  inst.truth = {{"sensitivity", p[0], false}, {"decay", p[1], false}, {"diffusion", p[2], false}};
  return inst;
}

}  // namespace lft::synth
