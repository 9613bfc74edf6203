#pragma once

// Experiment configuration and the fit-and-score plumbing shared by the CLI
// and the acceptance checks.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lft/io.hpp"
#include "lft/lfm.hpp"
#include "lft/lfo.hpp"
#include "lft/synth.hpp"

namespace lft::experiment {

/// Synthetic single-instance data. Unset fields keep the generator defaults
/// of the chosen family.
struct SyntheticConfig {
  std::optional<Index> genes;
  std::optional<Index> points;
  std::optional<double> t1;
  std::optional<double> noise_std;
  std::optional<double> force_lengthscale;
  std::optional<Index> elements;
  std::optional<Index> steps;
  /// ODE only: fit on t <= holdout_after and also score the later points.
  std::optional<double> holdout_after;
};

struct LfoConfig {
  lfo::LfoTrainConfig train;
  Index stride = 2;  // training grid = dataset grid subsampled by this
  Index width = 32;
};

struct BenchmarkConfig {
  int pre_epochs = 20;
  int fine_epochs = 20;
  int lfo_epochs = 2;
  Index lfo_instances = 100;
  std::vector<Index> inducing{8, 16, 32};
};

struct ExperimentConfig {
  lfm::Family model = lfm::Family::transcription;
  std::uint64_t seed = 0;
  Index repeats = 1;
  lfm::ModelSpec spec;
  lfm::TrainConfig train;
  SyntheticConfig synthetic;
  std::string dataset;
  Index instance = 0;
  Index dataset_size = 2000;
  LfoConfig lfo;
  BenchmarkConfig benchmark;
};

/// Parses and validates a JSON config. Unknown keys, wrong types, empty text
/// and out-of-range values raise ConfigError.
ExperimentConfig parse_config(const std::string& text);

// Problems and scoring -------------------------------------------------------

/// One fitting problem plus whatever ground truth is known.
struct Problem {
  lfm::Observations data;
  std::optional<Matrix> clean;       // noiseless outputs, layout of data.values
  std::vector<double> force_times;   // ODE force grid
  std::optional<Matrix> force;       // ODE: Q x L; PDE: times x nodes
  std::vector<lfm::Estimate> truth;  // equation parameters, may be empty
  /// Held-out observations (ODE extrapolation) with noiseless targets.
  std::vector<double> heldout_times;
  Matrix heldout_clean;
};

Problem from_instance(const synth::Instance& inst);
/// Instance `r` of the synthetic data described by `config`.
Problem synthetic_problem(const ExperimentConfig& config, std::mt19937_64& rng);
/// Moves observations after `cut` into the held-out block.
Problem split_holdout(Problem p, double cut);

struct MetricReport {
  std::optional<double> q2_output;
  std::optional<double> q2_latent;
  std::optional<double> q2_heldout;
  std::optional<double> coverage_output;
  std::optional<double> coverage_latent;
  std::optional<double> param_mae;
  Index output_points = 0;
  Index latent_points = 0;
  Index parameters = 0;
};
io::Json to_json(const MetricReport& m);

std::unique_ptr<lfm::LatentForceModel> make_model(const lfm::ModelSpec& spec,
                                                  const lfm::Observations& data, std::uint64_t seed);

/// Posterior summaries against the known truth; metrics whose target is
/// unknown or constant stay empty.
MetricReport score(const lfm::LatentForceModel& model, const Problem& problem, std::uint64_t seed,
                   Index samples = 50);

struct FitResult {
  std::unique_ptr<lfm::LatentForceModel> model;
  lfm::Trace trace;
  MetricReport metrics;
  double seconds = 0.0;
  std::optional<std::string> aborted;  // NonFiniteLoss message
};

/// Builds, trains and scores. A transcription problem with known truth gets
/// its first sensitivity frozen at the true value unless `spec` fixes one.
FitResult fit(lfm::ModelSpec spec, const Problem& problem, const lfm::TrainConfig& train,
              std::uint64_t model_seed, std::uint64_t predict_seed);

/// Checkpoint of a fitted model: header with spec and estimates, values in
/// parameter order.
void save_lfm(const std::string& path, const lfm::LatentForceModel& model);

/// Held-out LFO metrics on `positions` of `data`.
MetricReport score_lfo(const lfo::LfoNet& net, const lfo::Dataset& data,
                       const std::vector<Index>& positions);

}  // namespace lft::experiment
