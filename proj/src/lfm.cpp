#include "lft/lfm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "lft/numcore/random.hpp"

namespace lft::lfm {

using ad::Var;

namespace {

constexpr double kNoiseFloor = 1e-4;

double log_sigmoid_arg(std::span<const double> f, const ResponseFn& g, Index j) {
  if (g.hill_weights.rows() <= j || g.hill_weights.cols() != static_cast<Index>(f.size()) ||
      g.hill_offsets.size() <= j) {
    throw DimensionMismatch("hill response: weights do not match forces/outputs");
  }
  double z = g.hill_offsets(j);
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!(f[i] > 0.0)) throw DomainError("hill response: forces must be positive");
    z += g.hill_weights(j, static_cast<Index>(i)) * std::log(f[i]);
  }
  return z;
}

void check_observations(const Observations& d, Family family) {
  const Index n = static_cast<Index>(d.times.size());
  if (n < 2) throw std::invalid_argument("lfm: need at least two observation times");
  if (d.values.rows() != n) throw DimensionMismatch("lfm: one observation row per time");
  for (Index i = 1; i < n; ++i) {
    if (!(d.times[static_cast<std::size_t>(i)] > d.times[static_cast<std::size_t>(i - 1)])) {
      throw NonMonotonicKnots("lfm: observation times must increase");
    }
  }
  if (!all_finite(d.values)) throw DomainError("lfm: observations must be finite");
  if (family == Family::reaction_diffusion) {
    if (d.space.size() < 3) throw std::invalid_argument("lfm: PDE data needs at least 3 nodes");
    if (d.values.cols() != static_cast<Index>(d.space.size())) {
      throw DimensionMismatch("lfm: one observation column per node");
    }
  } else if (d.values.cols() < 1) {
    throw DimensionMismatch("lfm: no outputs");
  }
}

/// Period of the best single-sinusoid least-squares fit to the outputs, scanned
/// over a log grid from two sampling gaps to twice the window.
double dominant_period(const Observations& d) {
  const Index n = static_cast<Index>(d.times.size());
  double gap = d.times.back() - d.times.front();
  for (Index i = 1; i < n; ++i) gap = std::min(gap, d.times[static_cast<std::size_t>(i)] - d.times[static_cast<std::size_t>(i - 1)]);
  const double lo = std::log(2.0 * gap);
  const double hi = std::log(2.0 * (d.times.back() - d.times.front()));
  constexpr int kCandidates = 400;
  double best = std::exp(hi);
  double best_ss = std::numeric_limits<double>::infinity();
  for (int c = 0; c <= kCandidates; ++c) {
    const double period = std::exp(lo + (hi - lo) * c / kCandidates);
    Matrix basis(n, 3);
    for (Index i = 0; i < n; ++i) {
      const double w = 2.0 * std::numbers::pi * d.times[static_cast<std::size_t>(i)] / period;
      basis.row(i) << 1.0, std::cos(w), std::sin(w);
    }
    const Matrix coef = basis.colPivHouseholderQr().solve(d.values);
    const double ss = (basis * coef - d.values).squaredNorm();
    if (ss < best_ss) {
      best_ss = ss;
      best = period;
    }
  }
  return best;
}

svgp::VariationalGp make_gp(const ModelSpec& spec, const Observations& d) {
  check_observations(d, spec.family);
  svgp::InducingSet z;
  if (spec.family == Family::reaction_diffusion) {
    const Index nt = spec.inducing > 0 ? spec.inducing : 12;
    z = svgp::uniform_grid({d.times.front(), d.space.front()}, {d.times.back(), d.space.back()},
                           {nt, spec.inducing_space});
  } else {
    z = svgp::uniform_grid({d.times.front()}, {d.times.back()},
                           {spec.inducing > 0 ? spec.inducing : 16});
  }
  kernels::KernelParams init =
      spec.kernel_init ? *spec.kernel_init : kernels::initial_params(spec.kernel, z.locations);
  // The period barely moves during training, so start it from the data.
  if (!spec.kernel_init && spec.kernel == kernels::KernelKind::periodic &&
      spec.family != Family::reaction_diffusion) {
    init.period = dominant_period(d);
  }
  return svgp::VariationalGp(spec.kernel, std::move(z), spec.forces, init, spec.jitter);
}

Matrix uniform_raw(std::mt19937_64& rng, Index rows) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(rows, 1);
  for (Index i = 0; i < rows; ++i) m(i, 0) = inverse_softplus(std::max(u(rng), 1e-6));
  return m;
}

Var positive(const std::vector<Var>& leaves, int idx) {
  return ad::softplus(leaves.at(static_cast<std::size_t>(idx)));
}

Var noise_var(const std::vector<Var>& leaves, int idx) {
  return ad::softplus(leaves.at(static_cast<std::size_t>(idx))) + kNoiseFloor;
}

double positive_value(const ParamSet& p, int idx, Index row = 0) {
  return softplus(p[idx].value(row, 0));
}

/// Spline derivative of every column of `values` at `times`.
Matrix spline_derivatives(const std::vector<double>& times, const Matrix& values) {
  Matrix out(values.rows(), values.cols());
  for (Index c = 0; c < values.cols(); ++c) {
    const Vector col = values.col(c);
    const interp::CubicSpline s = interp::fit_natural_cubic(
        times, std::span<const double>(col.data(), static_cast<std::size_t>(col.size())));
    out.col(c) = s.eval_derivative(times);
  }
  return out;
}

void check_noise(const std::vector<Matrix>& eps, Index forces, Index rows) {
  if (static_cast<Index>(eps.size()) != forces) {
    throw DimensionMismatch("elbo: expected one noise block per force");
  }
  for (const Matrix& e : eps) {
    if (e.rows() != rows || e.cols() < 1 || e.cols() != eps.front().cols()) {
      throw DimensionMismatch("elbo: noise block has the wrong shape");
    }
  }
}

void add_moments(const Matrix& samples, Matrix& mean, Matrix& var, Index row, Index col) {
  // samples: one value per column
  const double m = samples.mean();
  mean(row, col) = m;
  var(row, col) = (samples.array() - m).square().mean();
}

}  // namespace

// Response functions ---------------------------------------------------------

ResponseKind parse_response_kind(const std::string& name) {
  if (name == "identity") return ResponseKind::identity;
  if (name == "softplus") return ResponseKind::softplus;
  if (name == "hill") return ResponseKind::hill;
  throw ConfigError("unknown response '" + name + "' (expected identity, softplus or hill)");
}

std::string to_string(ResponseKind kind) {
  switch (kind) {
    case ResponseKind::identity: return "identity";
    case ResponseKind::softplus: return "softplus";
    case ResponseKind::hill: return "hill";
  }
  return "identity";
}

double response(std::span<const double> f, const ResponseFn& g, Index output) {
  if (f.empty()) throw DimensionMismatch("response: no forces");
  switch (g.kind) {
    case ResponseKind::identity: {
      double s = 0.0;
      for (double v : f) s += v;
      return s;
    }
    case ResponseKind::softplus: {
      double s = 0.0;
      for (double v : f) s += v;
      return softplus(s);
    }
    case ResponseKind::hill:
      return sigmoid(log_sigmoid_arg(f, g, output));
  }
  return 0.0;
}

Vector transcription_rhs(double, const Vector& y, std::span<const double> f,
                         const TranscriptionParams& p, const ResponseFn& g) {
  const Index n = y.size();
  if (p.basal.size() != n || p.sensitivity.size() != n || p.decay.size() != n) {
    throw DimensionMismatch("transcription_rhs: parameter lengths differ from state");
  }
  Vector out(n);
  for (Index j = 0; j < n; ++j) {
    out(j) = p.basal(j) + p.sensitivity(j) * response(f, g, j) - p.decay(j) * y(j);
  }
  return out;
}

double lotka_rhs(double, double v, std::span<const double> f, const LotkaParams& p,
                 const ResponseFn& g) {
  return p.growth * response(f, g, 0) * v - p.decay * v;
}

// Names ----------------------------------------------------------------------

Family parse_family(const std::string& name) {
  if (name == "transcription") return Family::transcription;
  if (name == "lotka") return Family::lotka;
  if (name == "reaction_diffusion") return Family::reaction_diffusion;
  throw ConfigError("unknown model '" + name +
                    "' (expected transcription, lotka or reaction_diffusion)");
}

std::string to_string(Family family) {
  switch (family) {
    case Family::transcription: return "transcription";
    case Family::lotka: return "lotka";
    case Family::reaction_diffusion: return "reaction_diffusion";
  }
  return "transcription";
}

std::string to_string(Phase phase) { return phase == Phase::pre ? "pre" : "fine"; }

// Shared model pieces --------------------------------------------------------

Matrix LatentForceModel::standard_normal(std::mt19937_64& rng, Index rows, Index cols) const {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Var LatentForceModel::elbo(ad::Tape& tape, const std::vector<Var>& leaves, Phase phase,
                           std::mt19937_64& rng, Index samples) const {
  if (samples < 1) throw std::invalid_argument("elbo: need at least one sample");
  std::vector<Matrix> eps;
  for (Index i = 0; i < spec_.forces; ++i) eps.push_back(standard_normal(rng, noise_rows(phase), samples));
  return elbo(tape, leaves, phase, eps);
}

Matrix LatentForceModel::latent_view(const Matrix& f) const {
  if (spec_.response.kind == ResponseKind::identity) return f;
  return f.unaryExpr([](double v) { return softplus(v); });
}

Matrix space_time_points(const std::vector<double>& times, const std::vector<double>& space) {
  const Index nt = static_cast<Index>(times.size());
  const Index nx = static_cast<Index>(space.size());
  Matrix pts(nt * nx, 2);
  for (Index n = 0; n < nt; ++n) {
    for (Index k = 0; k < nx; ++k) {
      pts(n * nx + k, 0) = times[static_cast<std::size_t>(n)];
      pts(n * nx + k, 1) = space[static_cast<std::size_t>(k)];
    }
  }
  return pts;
}

// ODE models -----------------------------------------------------------------

OdeModel::OdeModel(ModelSpec spec, Observations data, std::uint64_t init_seed)
    : LatentForceModel(spec, data, make_gp(spec, data)) {
  if (spec_.family == Family::reaction_diffusion) {
    throw std::invalid_argument("OdeModel: reaction_diffusion needs PdeModel");
  }
  if (!(spec_.rk4_step > 0.0)) throw std::invalid_argument("OdeModel: rk4 step must be positive");
  const Index p = outputs();
  const Index l = spec_.forces;
  std::mt19937_64 rng(splitmix64(init_seed));
  gp_.register_params(params_);
  if (spec_.family == Family::transcription) {
    basal_idx_ = params_.add("basal", uniform_raw(rng, p));
    sensitivity_idx_ = params_.add("sensitivity", uniform_raw(rng, p));
    decay_idx_ = params_.add("decay", uniform_raw(rng, p));
    if (spec_.frozen_sensitivity) {
      if (!(*spec_.frozen_sensitivity > 0.0)) {
        throw DomainError("OdeModel: frozen sensitivity must be positive");
      }
      params_[sensitivity_idx_].value(0, 0) = inverse_softplus(*spec_.frozen_sensitivity);
    }
    params_.freeze("sensitivity", 0, 0);
  } else {
    if (p != 1) throw DimensionMismatch("OdeModel: lotka observes a single predator output");
    growth_idx_ = params_.add("growth", uniform_raw(rng, 1));
    decay_idx_ = params_.add("decay", uniform_raw(rng, 1));
  }
  if (spec_.response.kind == ResponseKind::hill) {
    Matrix w = Matrix::Ones(p, l);
    Matrix b = Matrix::Zero(p, 1);
    if (spec_.response.hill_weights.rows() == p && spec_.response.hill_weights.cols() == l) {
      w = spec_.response.hill_weights;
    }
    if (spec_.response.hill_offsets.size() == p) b = spec_.response.hill_offsets;
    hill_w_idx_ = params_.add("hill_weights", w);
    hill_b_idx_ = params_.add("hill_offsets", b);
  }
  const double raw_noise = inverse_softplus(std::max(spec_.noise_var_init - kNoiseFloor, 1e-8));
  noise_idx_ = params_.add("noise_var", Matrix::Constant(1, 1, raw_noise));
  deriv_noise_idx_ = params_.add("derivative_noise_var", Matrix::Constant(1, 1, raw_noise));

  query_times_ = ode::rk4_query_times(data_.times.front(), data_.times, spec_.rk4_step);
  if (data_.times.size() >= 3) derivative_targets_ = spline_derivatives(data_.times, data_.values);
}

Var OdeModel::initial_state(ad::Tape& tape, const std::vector<Var>& leaves, Index samples) const {
  if (spec_.family == Family::transcription) {
    // basal steady state b / d
    const Var ratio = ad::exp(ad::log(positive(leaves, basal_idx_)) - ad::log(positive(leaves, decay_idx_)));
    return ad::matmul(ratio, Matrix::Ones(1, samples));
  }
  return tape.constant(data_.values.row(0).transpose().replicate(1, samples));
}

ode::RhsFn OdeModel::make_rhs(const std::vector<Var>& leaves) const {
  const ResponseKind kind = spec_.response.kind;
  Var w, w0;
  if (kind == ResponseKind::hill) {
    w = leaves.at(static_cast<std::size_t>(hill_w_idx_));
    w0 = leaves.at(static_cast<std::size_t>(hill_b_idx_));
  }
  // G(f): a single row shared by every output, or one row per output (hill)
  auto apply = [kind, w, w0](const Var& f) -> Var {
    switch (kind) {
      case ResponseKind::identity:
        return f.rows() == 1 ? f : ad::matmul(Matrix::Ones(1, f.rows()), f);
      case ResponseKind::softplus:
        return ad::softplus(f.rows() == 1 ? f : ad::matmul(Matrix::Ones(1, f.rows()), f));
      case ResponseKind::hill:
        return ad::sigmoid(ad::add_col(ad::matmul(w, ad::log(ad::softplus(f))), w0));
    }
    return f;
  };
  if (spec_.family == Family::transcription) {
    const Var b = positive(leaves, basal_idx_);
    const Var s = positive(leaves, sensitivity_idx_);
    const Var d = positive(leaves, decay_idx_);
    return [apply, b, s, d](double, const Var& y, const Var& f) {
      const Var g = apply(f);
      const Var drive = g.rows() == 1 ? ad::matmul(s, g) : ad::mul_col(g, s);
      return ad::add_col(drive - ad::mul_col(y, d), b);
    };
  }
  const Var delta = positive(leaves, growth_idx_);
  const Var gamma = positive(leaves, decay_idx_);
  return [apply, delta, gamma](double, const Var& v, const Var& f) {
    return ad::scale(ad::hadamard(apply(f), v), delta) - ad::scale(v, gamma);
  };
}

Index OdeModel::noise_rows(Phase phase) const {
  return phase == Phase::pre ? static_cast<Index>(data_.times.size())
                             : static_cast<Index>(query_times_.size());
}

Var OdeModel::elbo(ad::Tape& tape, const std::vector<Var>& leaves, Phase phase,
                   const std::vector<Matrix>& eps) const {
  check_noise(eps, spec_.forces, noise_rows(phase));
  const Index samples = eps.front().cols();
  const svgp::VariationalGp::Bound bound = gp_.bind(leaves);
  const ode::RhsFn rhs = make_rhs(leaves);
  // one noise variance shared by every output
  const Var noise = ad::matmul(Matrix::Ones(outputs(), 1),
                               noise_var(leaves, phase == Phase::pre ? deriv_noise_idx_ : noise_idx_));
  const Var kl = svgp::kl_to_prior(bound.q, gp_.inducing(), gp_.kind(), bound.kernel, gp_.jitter());
  const Index n = static_cast<Index>(data_.times.size());
  const double inv_s = 1.0 / static_cast<double>(samples);

  if (phase == Phase::pre) {
    if (derivative_targets_.size() == 0) {
      throw std::invalid_argument("pre-estimation: need at least 3 observation times");
    }
    const Matrix x = Eigen::Map<const Vector>(data_.times.data(), n);
    const std::vector<Var> f =
        svgp::sample_forces(bound.q, gp_.inducing(), x, gp_.kind(), bound.kernel, eps, gp_.jitter());
    std::vector<Var> rows;
    for (const Var& fi : f) rows.push_back(ad::reshape(fi, 1, n * samples));
    const Var flat = rows.size() == 1 ? rows.front() : ad::vstack(rows);
    // column s N + n holds time n of sample s
    const Var y = tape.constant(data_.values.transpose().replicate(1, samples));
    const Var dy = rhs(0.0, y, flat);
    const Matrix target = derivative_targets_.transpose().replicate(1, samples);
    return inv_s * svgp::gaussian_loglik(target, dy, noise) - kl;
  }

  Matrix xq(static_cast<Index>(query_times_.size()), 1);
  for (Index i = 0; i < xq.rows(); ++i) xq(i, 0) = query_times_[static_cast<std::size_t>(i)];
  const std::vector<Var> f =
      svgp::sample_forces(bound.q, gp_.inducing(), xq, gp_.kind(), bound.kernel, eps, gp_.jitter());
  const ode::ForcePath path(query_times_, f);
  const ode::OdeProblem problem{rhs, initial_state(tape, leaves, samples), data_.times.front(),
                                data_.times};
  const ode::Trajectory traj = ode::rk4_solve(problem, path, spec_.rk4_step);
  const Matrix y = ode::tile_observations(data_.values.transpose(), samples);
  return inv_s * svgp::gaussian_loglik(y, ode::stack_states(traj), noise) - kl;
}

std::vector<Estimate> OdeModel::estimates() const {
  std::vector<Estimate> out;
  if (spec_.family == Family::transcription) {
    const Index p = outputs();
    for (Index j = 0; j < p; ++j) {
      out.push_back({"basal_" + std::to_string(j), positive_value(params_, basal_idx_, j), false});
    }
    for (Index j = 0; j < p; ++j) {
      out.push_back({"sensitivity_" + std::to_string(j),
                     positive_value(params_, sensitivity_idx_, j), j == 0});
    }
    for (Index j = 0; j < p; ++j) {
      out.push_back({"decay_" + std::to_string(j), positive_value(params_, decay_idx_, j), false});
    }
  } else {
    out.push_back({"growth", positive_value(params_, growth_idx_), false});
    out.push_back({"decay", positive_value(params_, decay_idx_), false});
  }
  return out;
}

Prediction OdeModel::predict(const std::vector<double>& output_times,
                             const std::vector<double>& force_times, Index samples,
                             std::mt19937_64& rng) const {
  if (samples < 1) throw std::invalid_argument("predict: need at least one sample");
  ad::Tape tape;
  const std::vector<Var> leaves = params_.bind(tape);
  const svgp::VariationalGp::Bound bound = gp_.bind(leaves);
  const Index p = outputs();
  const Index l = spec_.forces;
  Prediction out;

  const double t0 = data_.times.front();
  const std::vector<double> q = ode::rk4_query_times(t0, output_times, spec_.rk4_step);
  Matrix xq(static_cast<Index>(q.size()), 1);
  for (Index i = 0; i < xq.rows(); ++i) xq(i, 0) = q[static_cast<std::size_t>(i)];
  std::vector<Matrix> eps;
  for (Index i = 0; i < l; ++i) eps.push_back(standard_normal(rng, xq.rows(), samples));
  const std::vector<Var> f =
      svgp::sample_forces(bound.q, gp_.inducing(), xq, gp_.kind(), bound.kernel, eps, gp_.jitter());
  const ode::OdeProblem problem{make_rhs(leaves), initial_state(tape, leaves, samples), t0,
                                output_times};
  const ode::Trajectory traj = ode::rk4_solve(problem, ode::ForcePath(q, f), spec_.rk4_step);
  const Index nt = static_cast<Index>(output_times.size());
  out.output_mean.resize(nt, p);
  out.output_var.resize(nt, p);
  for (Index n = 0; n < nt; ++n) {
    const Matrix& s = traj.states[static_cast<std::size_t>(n)].value();
    for (Index j = 0; j < p; ++j) add_moments(s.row(j), out.output_mean, out.output_var, n, j);
  }

  const Index nf = static_cast<Index>(force_times.size());
  if (nf > 0) {
    const Matrix xf = Eigen::Map<const Vector>(force_times.data(), nf);
    std::vector<Matrix> eps_f;
    for (Index i = 0; i < l; ++i) eps_f.push_back(standard_normal(rng, nf, samples));
    const std::vector<Var> ff = svgp::sample_forces(bound.q, gp_.inducing(), xf, gp_.kind(),
                                                    bound.kernel, eps_f, gp_.jitter());
    out.force_mean.resize(nf, l);
    out.force_var.resize(nf, l);
    for (Index i = 0; i < l; ++i) {
      const Matrix v = latent_view(ff[static_cast<std::size_t>(i)].value());
      for (Index n = 0; n < nf; ++n) add_moments(v.row(n), out.force_mean, out.force_var, n, i);
    }
  }
  return out;
}

// PDE model ------------------------------------------------------------------

PdeModel::PdeModel(ModelSpec spec, Observations data, std::uint64_t init_seed)
    : LatentForceModel(spec, data, make_gp(spec, data)) {
  if (spec_.family != Family::reaction_diffusion) {
    throw std::invalid_argument("PdeModel: only reaction_diffusion is a PDE model");
  }
  if (spec_.forces != 1) throw DimensionMismatch("PdeModel: a single latent force is supported");
  const auto& t = data_.times;
  dt_ = t[1] - t[0];
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (std::abs((t[i] - t[i - 1]) - dt_) > 1e-9 * std::max(1.0, std::abs(dt_))) {
      throw std::invalid_argument("PdeModel: observation times must be evenly spaced");
    }
  }
  system_ = fem::assemble(fem::Mesh1D::from_points(data_.space));

  std::mt19937_64 rng(splitmix64(init_seed));
  gp_.register_params(params_);
  sensitivity_idx_ = params_.add("sensitivity", uniform_raw(rng, 1));
  decay_idx_ = params_.add("decay", uniform_raw(rng, 1));
  diffusion_idx_ = params_.add("diffusion", uniform_raw(rng, 1));
  const double raw_noise = inverse_softplus(std::max(spec_.noise_var_init - kNoiseFloor, 1e-8));
  noise_idx_ = params_.add("noise_var", Matrix::Constant(1, 1, raw_noise));
  deriv_noise_idx_ = params_.add("derivative_noise_var", Matrix::Constant(1, 1, raw_noise));

  const std::vector<double> later(t.begin() + 1, t.end());
  step_points_ = space_time_points(later, data_.space);
  data_points_ = space_time_points(t, data_.space);
  if (t.size() >= 3) derivative_targets_ = spline_derivatives(t, data_.values).transpose();
  ad::Tape scratch;
  laplacian_ = fem::discrete_laplacian(scratch.constant(data_.values.transpose()), system_).value();
}

fem::PdeParams PdeModel::bind_params(const std::vector<Var>& leaves) const {
  return {positive(leaves, sensitivity_idx_), positive(leaves, decay_idx_),
          positive(leaves, diffusion_idx_)};
}

Index PdeModel::noise_rows(Phase phase) const {
  return phase == Phase::pre ? data_points_.rows() : step_points_.rows();
}

Var PdeModel::elbo(ad::Tape& tape, const std::vector<Var>& leaves, Phase phase,
                   const std::vector<Matrix>& eps) const {
  check_noise(eps, 1, noise_rows(phase));
  const Index samples = eps.front().cols();
  const svgp::VariationalGp::Bound bound = gp_.bind(leaves);
  const fem::PdeParams pp = bind_params(leaves);
  const Var kl = svgp::kl_to_prior(bound.q, gp_.inducing(), gp_.kind(), bound.kernel, gp_.jitter());
  const Index nt = static_cast<Index>(data_.times.size());
  const Index k = static_cast<Index>(data_.space.size());
  const Index interior = k - 2;
  const Var noise = ad::matmul(Matrix::Ones(interior, 1),
                               noise_var(leaves, phase == Phase::pre ? deriv_noise_idx_ : noise_idx_));
  const double inv_s = 1.0 / static_cast<double>(samples);

  if (phase == Phase::pre) {
    if (derivative_targets_.size() == 0) {
      throw std::invalid_argument("pre-estimation: need at least 3 observation times");
    }
    const Var f = svgp::sample_forces(bound.q, gp_.inducing(), data_points_, gp_.kind(),
                                      bound.kernel, eps, gp_.jitter())
                      .front();
    // column s (N+1) + n holds time n of sample s
    const Var u = ad::reshape(f, k, nt * samples);
    const Var y = tape.constant(data_.values.transpose().replicate(1, samples));
    const Var lap = tape.constant(laplacian_.replicate(1, samples));
    const Var dy = ad::scale(u, pp.sensitivity) - ad::scale(y, pp.decay) - ad::scale(lap, pp.diffusion);
    const Matrix target = derivative_targets_.replicate(1, samples);
    return inv_s * svgp::gaussian_loglik(target.middleRows(1, interior),
                                         ad::block(dy, 1, 0, interior, dy.cols()), noise) -
           kl;
  }

  const Var f = svgp::sample_forces(bound.q, gp_.inducing(), step_points_, gp_.kind(), bound.kernel,
                                    eps, gp_.jitter())
                    .front();
  std::vector<Var> forces;
  for (Index n = 0; n + 1 < nt; ++n) forces.push_back(ad::block(f, n * k, 0, k, samples));
  const Var y0 = tape.constant(data_.values.row(0).transpose().replicate(1, samples));
  const std::vector<Var> states = fem::solve_pde(y0, forces, dt_, pp, system_);
  const Var yhat = ad::hstack(states);
  const Matrix y = ode::tile_observations(data_.values.bottomRows(nt - 1).transpose(), samples);
  return inv_s * svgp::gaussian_loglik(y.middleRows(1, interior),
                                       ad::block(yhat, 1, 0, interior, yhat.cols()), noise) -
         kl;
}

std::vector<Estimate> PdeModel::estimates() const {
  return {{"sensitivity", positive_value(params_, sensitivity_idx_), false},
          {"decay", positive_value(params_, decay_idx_), false},
          {"diffusion", positive_value(params_, diffusion_idx_), false}};
}

Prediction PdeModel::predict(const Matrix& points, Index samples, std::mt19937_64& rng) const {
  if (samples < 1) throw std::invalid_argument("predict: need at least one sample");
  ad::Tape tape;
  const std::vector<Var> leaves = params_.bind(tape);
  const svgp::VariationalGp::Bound bound = gp_.bind(leaves);
  const Index nt = static_cast<Index>(data_.times.size());
  const Index k = static_cast<Index>(data_.space.size());
  Prediction out;

  const std::vector<Matrix> eps{standard_normal(rng, step_points_.rows(), samples)};
  const Var f = svgp::sample_forces(bound.q, gp_.inducing(), step_points_, gp_.kind(), bound.kernel,
                                    eps, gp_.jitter())
                    .front();
  std::vector<Var> forces;
  for (Index n = 0; n + 1 < nt; ++n) forces.push_back(ad::block(f, n * k, 0, k, samples));
  const Var y0 = tape.constant(data_.values.row(0).transpose().replicate(1, samples));
  const std::vector<Var> states = fem::solve_pde(y0, forces, dt_, bind_params(leaves), system_);
  out.output_mean.resize(nt, k);
  out.output_var.resize(nt, k);
  for (Index j = 0; j < k; ++j) {
    out.output_mean(0, j) = data_.values(0, j);
    out.output_var(0, j) = 0.0;
  }
  for (Index n = 1; n < nt; ++n) {
    const Matrix& s = states[static_cast<std::size_t>(n - 1)].value();
    for (Index j = 0; j < k; ++j) add_moments(s.row(j), out.output_mean, out.output_var, n, j);
  }
  if (points.rows() > 0) {
    const std::vector<Matrix> eps_f{standard_normal(rng, points.rows(), samples)};
    const Matrix v = latent_view(svgp::sample_forces(bound.q, gp_.inducing(), points, gp_.kind(),
                                                     bound.kernel, eps_f, gp_.jitter())
                                     .front()
                                     .value());
    out.force_mean.resize(points.rows(), 1);
    out.force_var.resize(points.rows(), 1);
    for (Index n = 0; n < points.rows(); ++n) add_moments(v.row(n), out.force_mean, out.force_var, n, 0);
  }
  return out;
}

// Training -------------------------------------------------------------------

Trace optimize(LatentForceModel& model, Phase phase, int epochs, double lr, int samples,
               std::mt19937_64& rng, const EpochHook& on_epoch) {
  if (epochs < 0) throw std::invalid_argument("optimize: negative epoch count");
  if (samples < 1) throw std::invalid_argument("optimize: need at least one sample");
  Trace trace;
  trace.reserve(static_cast<std::size_t>(epochs));
  Adam adam(lr);
  ParamSet& params = model.params();
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    ad::Tape tape;
    const std::vector<Var> leaves = params.bind(tape);
    Var objective;
    try {
      objective = model.elbo(tape, leaves, phase, rng, samples);
    } catch (const NonFiniteState& e) {
      throw TrainingAborted(std::string("solver diverged: ") + e.what(), std::move(trace));
    } catch (const DomainError& e) {
      // a positive parameter underflowed to zero after a huge step
      throw TrainingAborted(std::string("parameters left their domain: ") + e.what(), std::move(trace));
    } catch (const NotPositiveDefinite& e) {
      throw TrainingAborted(std::string("covariance collapsed: ") + e.what(), std::move(trace));
    }
    const double value = objective.scalar();
    if (!std::isfinite(value)) {
      throw TrainingAborted("ELBO is not finite at " + to_string(phase) + " epoch " +
                                std::to_string(epoch),
                            std::move(trace));
    }
    tape.backward(objective);
    const std::vector<Matrix> grads = params.gradients(tape, leaves);
    trace.push_back({epoch, phase, value});
    for (const Matrix& g : grads) {
      if (!all_finite(g)) {
        throw TrainingAborted("ELBO gradient is not finite at " + to_string(phase) + " epoch " +
                                  std::to_string(epoch),
                              std::move(trace));
      }
    }
    adam.step(params, grads, true);
    if (on_epoch) on_epoch(trace.back());
  }
  return trace;
}

Trace pretrain_gradient_match(LatentForceModel& model, const TrainConfig& config,
                              std::mt19937_64& rng, const EpochHook& on_epoch) {
  return optimize(model, Phase::pre, config.preestimation_epochs, config.lr_pre, config.mc_samples,
                  rng, on_epoch);
}

Trace train(LatentForceModel& model, const TrainConfig& config, const EpochHook& on_epoch) {
  std::mt19937_64 rng = stream_rng(config.seed);
  Trace trace = pretrain_gradient_match(model, config, rng, on_epoch);
  try {
    const Trace fine =
        optimize(model, Phase::fine, config.epochs, config.lr, config.mc_samples, rng, on_epoch);
    trace.insert(trace.end(), fine.begin(), fine.end());
  } catch (TrainingAborted& e) {
    Trace merged = trace;
    merged.insert(merged.end(), e.trace.begin(), e.trace.end());
    throw TrainingAborted(e.what(), std::move(merged));
  }
  return trace;
}

}  // namespace lft::lfm
