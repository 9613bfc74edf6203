#pragma once

// Latent force models: response functions, the transcription, Lotka-Volterra
// and reaction-diffusion systems, ELBO assembly, gradient-matching
// pre-estimation and the two-phase training loop.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lft/errors.hpp"
#include "lft/fem1d.hpp"
#include "lft/interp.hpp"
#include "lft/kernels.hpp"
#include "lft/odesolve.hpp"
#include "lft/svgp.hpp"

namespace lft::lfm {

// Response functions ---------------------------------------------------------

enum class ResponseKind { identity, softplus, hill };

ResponseKind parse_response_kind(const std::string& name);
std::string to_string(ResponseKind kind);

/// G(f). Hill carries one weight row (P x L) and one offset per output.
struct ResponseFn {
  ResponseKind kind = ResponseKind::identity;
  Matrix hill_weights;
  Vector hill_offsets;
};

/// G(f_1..f_L) for output j. Identity with several forces sums them.
/// Throws DomainError for hill with a nonpositive force.
double response(std::span<const double> f, const ResponseFn& g, Index output);

// Right-hand sides -----------------------------------------------------------

struct TranscriptionParams {
  Vector basal;
  Vector sensitivity;
  Vector decay;
};

/// dy_j/dt = b_j + s_j G_j(f) - d_j y_j.
Vector transcription_rhs(double t, const Vector& y, std::span<const double> f,
                         const TranscriptionParams& params, const ResponseFn& g);

struct LotkaParams {
  double growth = 1.0;  // delta
  double decay = 1.0;   // gamma
};

/// dv/dt = delta G(f) v - gamma v for the predator v; prey is the force.
double lotka_rhs(double t, double v, std::span<const double> f, const LotkaParams& params,
                 const ResponseFn& g);

// Models ---------------------------------------------------------------------

enum class Family { transcription, lotka, reaction_diffusion };

Family parse_family(const std::string& name);
std::string to_string(Family family);

enum class Phase { pre, fine };
std::string to_string(Phase phase);

/// Observed outputs: `values(n, p)` at `times[n]` for ODE models, or
/// `values(n, k)` at (`times[n]`, `space[k]`) for the PDE model.
struct Observations {
  std::vector<double> times;
  std::vector<double> space;
  Matrix values;
};

struct ModelSpec {
  Family family = Family::transcription;
  ResponseFn response;
  kernels::KernelKind kernel = kernels::KernelKind::rbf;
  /// Defaults to the smallest-gap rule over the inducing locations.
  std::optional<kernels::KernelParams> kernel_init;
  Index forces = 1;
  /// Inducing points along time; 0 means 16 for ODEs and 12 for the PDE.
  Index inducing = 0;
  Index inducing_space = 12;  // PDE only
  double rk4_step = 0.25;     // ODE solver step
  double jitter = kDefaultJitter;
  double noise_var_init = 0.05;
  /// Transcription: value the frozen first sensitivity starts (and stays) at.
  /// Drawn like every other equation parameter when absent.
  std::optional<double> frozen_sensitivity;
};

struct Estimate {
  std::string name;
  double value = 0.0;
  bool frozen = false;
};

/// Posterior summaries from Monte Carlo samples. ODE: `output_*` are N x P
/// over the requested times and `force_*` are Q x L. PDE: `output_*` are
/// N x K over observation times and nodes, `force_*` are (N K) x 1 over the
/// requested (t, x) points.
struct Prediction {
  Matrix output_mean;
  Matrix output_var;
  Matrix force_mean;
  Matrix force_var;
};

class LatentForceModel {
 public:
  virtual ~LatentForceModel() = default;

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  const svgp::VariationalGp& gp() const { return gp_; }
  const ModelSpec& spec() const { return spec_; }
  const Observations& data() const { return data_; }

  /// ELBO on `tape` for leaves bound from params(). The fine phase runs the
  /// solver; the pre phase compares the right-hand side with spline
  /// derivatives of the data. `eps` holds one noise_rows(phase) x S block of
  /// standard normal draws per force, S being the Monte Carlo sample count.
  virtual ad::Var elbo(ad::Tape& tape, const std::vector<ad::Var>& leaves, Phase phase,
                       const std::vector<Matrix>& eps) const = 0;
  /// Same, with `samples` draws per force taken from `rng`.
  ad::Var elbo(ad::Tape& tape, const std::vector<ad::Var>& leaves, Phase phase,
               std::mt19937_64& rng, Index samples) const;

  /// Force sample locations per Monte Carlo draw in `phase`.
  virtual Index noise_rows(Phase phase) const = 0;

  /// Equation parameters in a fixed order.
  virtual std::vector<Estimate> estimates() const = 0;

 protected:
  LatentForceModel(ModelSpec spec, Observations data, svgp::VariationalGp gp)
      : spec_(std::move(spec)), data_(std::move(data)), gp_(std::move(gp)) {}

  Matrix standard_normal(std::mt19937_64& rng, Index rows, Index cols) const;
  /// Latent values as compared with ground truth: f for identity, softplus(f)
  /// otherwise.
  Matrix latent_view(const Matrix& f) const;

  ModelSpec spec_;
  Observations data_;
  svgp::VariationalGp gp_;
  ParamSet params_;
  int noise_idx_ = -1;
  int deriv_noise_idx_ = -1;
};

/// Transcription and Lotka-Volterra systems, solved with RK4. Transcription
/// starts from the basal steady state b/d; Lotka from the first observation.
class OdeModel : public LatentForceModel {
 public:
  OdeModel(ModelSpec spec, Observations data, std::uint64_t init_seed);

  using LatentForceModel::elbo;
  ad::Var elbo(ad::Tape& tape, const std::vector<ad::Var>& leaves, Phase phase,
               const std::vector<Matrix>& eps) const override;
  Index noise_rows(Phase phase) const override;
  std::vector<Estimate> estimates() const override;

  /// Outputs at `output_times` (>= first data time) and latent forces at
  /// `force_times`.
  Prediction predict(const std::vector<double>& output_times,
                     const std::vector<double>& force_times, Index samples,
                     std::mt19937_64& rng) const;

  Index outputs() const { return data_.values.cols(); }

 private:
  ode::RhsFn make_rhs(const std::vector<ad::Var>& leaves) const;
  ad::Var initial_state(ad::Tape& tape, const std::vector<ad::Var>& leaves, Index samples) const;

  std::vector<double> query_times_;
  Matrix derivative_targets_;  // N x P spline derivatives
  int basal_idx_ = -1, sensitivity_idx_ = -1, decay_idx_ = -1;
  int growth_idx_ = -1;
  int hill_w_idx_ = -1, hill_b_idx_ = -1;
};

/// Reaction-diffusion dy/dt = S u - lambda y + D d2y/dx2 on the observation
/// mesh with zero Dirichlet boundaries; one implicit Euler step per
/// observation interval. The force is a GP over (t, x).
class PdeModel : public LatentForceModel {
 public:
  PdeModel(ModelSpec spec, Observations data, std::uint64_t init_seed);

  using LatentForceModel::elbo;
  ad::Var elbo(ad::Tape& tape, const std::vector<ad::Var>& leaves, Phase phase,
               const std::vector<Matrix>& eps) const override;
  Index noise_rows(Phase phase) const override;
  std::vector<Estimate> estimates() const override;

  /// Outputs at every observation time and node; force at `points` (Q x 2).
  Prediction predict(const Matrix& points, Index samples, std::mt19937_64& rng) const;

  const fem::FemSystem& system() const { return system_; }
  double dt() const { return dt_; }

 private:
  fem::PdeParams bind_params(const std::vector<ad::Var>& leaves) const;

  fem::FemSystem system_;
  double dt_ = 0.0;
  Matrix step_points_;   // (N K) x 2, force locations at t^{n+1}, step-major
  Matrix data_points_;   // ((N+1) K) x 2, every observation location, time-major
  Matrix derivative_targets_;  // K x (N+1)
  Matrix laplacian_;           // K x (N+1), discrete Laplacian of the data
  int sensitivity_idx_ = -1, decay_idx_ = -1, diffusion_idx_ = -1;
};

/// (t, x) pairs for every time and node, time-major: row n K + k.
Matrix space_time_points(const std::vector<double>& times, const std::vector<double>& space);

// Training -------------------------------------------------------------------

struct TrainConfig {
  int preestimation_epochs = 1000;
  int epochs = 700;
  int mc_samples = 5;
  double lr_pre = 0.01;
  double lr = 0.005;
  std::uint64_t seed = 0;
};

struct TraceRow {
  int epoch = 0;
  Phase phase = Phase::fine;
  double elbo = 0.0;
};
using Trace = std::vector<TraceRow>;

/// Raised when the ELBO or a gradient stops being finite; keeps the rows
/// recorded so far.
class TrainingAborted : public NonFiniteLoss {
 public:
  TrainingAborted(const std::string& what, Trace partial)
      : NonFiniteLoss(what), trace(std::move(partial)) {}
  Trace trace;
};

/// Called after every completed epoch.
using EpochHook = std::function<void(const TraceRow&)>;

/// One optimisation phase: `epochs` Adam ascent steps on the phase's ELBO.
/// Each row holds the ELBO evaluated before that epoch's update.
Trace optimize(LatentForceModel& model, Phase phase, int epochs, double lr, int samples,
               std::mt19937_64& rng, const EpochHook& on_epoch = {});

/// Gradient matching (no solver calls).
Trace pretrain_gradient_match(LatentForceModel& model, const TrainConfig& config,
                              std::mt19937_64& rng, const EpochHook& on_epoch = {});

/// Pre-estimation followed by fine-tuning through the solver.
Trace train(LatentForceModel& model, const TrainConfig& config, const EpochHook& on_epoch = {});

}  // namespace lft::lfm
