#pragma once

// Synthetic instances with known ground truth for the three model families.

#include <array>
#include <optional>
#include <random>
#include <vector>

#include "lft/lfm.hpp"

namespace lft::synth {

struct TimeGrid {
  double t0 = 0.0;
  double t1 = 12.0;
  Index points = 7;        // observation times
  Index force_points = 64;  // truth force times
};

/// `n` evenly spaced values from `a` to `b` inclusive.
std::vector<double> linspace(double a, double b, Index n);

struct TranscriptionSpec {
  Index genes = 5;
  TimeGrid grid;
  double noise_std = 0.05;
  double force_lengthscale = 2.5;
  double force_variance = 1.0;
  /// Pass the GP draw through softplus. Always on for nonlinear responses;
  /// identity responses otherwise get the draw centred over the window.
  bool softplus_force = false;
  lfm::ResponseFn response;
  /// Drawn from Uniform(rate_min, 1) per entry when absent.
  std::optional<lfm::TranscriptionParams> params;
  double rate_min = 0.1;
  double solver_step = 0.05;
};

struct LotkaSpec {
  TimeGrid grid{0.0, 30.0, 60, 120};
  double noise_std = 0.05;
  /// Drawn from Uniform(rate_min, 1) when absent. The prey equation uses
  /// alpha = beta = 1.
  std::optional<lfm::LotkaParams> params;
  double rate_min = 0.1;
  double prey0 = 1.0;
  double predator0 = 0.5;
  double solver_step = 0.01;
};

struct ReactionDiffusionSpec {
  double length = 1.0;
  Index elements = 10;
  double t1 = 1.0;
  Index steps = 10;
  double noise_std = 0.01;
  double lengthscale_t = 0.3;
  double lengthscale_x = 0.2;
  double force_variance = 1.0;
  /// Sensitivity, decay and diffusion; drawn from Uniform(rate_min, 1) when absent.
  std::optional<std::array<double, 3>> params;
  double rate_min = 0.1;
  Index refine = 2;      // spatial refinement of the truth mesh
  Index substeps = 4;    // truth time steps per observation interval
};

/// One generated instance. ODE: `force` is Q x L at `force_times`. PDE:
/// `force` is (N+1) x K over observation times and mesh nodes, and
/// `force_space` lists the nodes.
struct Instance {
  lfm::Family family = lfm::Family::transcription;
  lfm::Observations observed;  // with noise
  Matrix clean;                // noiseless, same layout as observed.values
  std::vector<double> force_times;
  std::vector<double> force_space;
  Matrix force;
  std::vector<lfm::Estimate> truth;
};

Instance transcription(const TranscriptionSpec& spec, std::mt19937_64& rng);
Instance lotka(const LotkaSpec& spec, std::mt19937_64& rng);
Instance reaction_diffusion(const ReactionDiffusionSpec& spec, std::mt19937_64& rng);

/// Samples a zero-mean GP with an RBF kernel at `times` (one column per draw).
Matrix sample_gp_1d(const std::vector<double>& times, double lengthscale, double variance,
                    Index draws, std::mt19937_64& rng);

}  // namespace lft::synth
