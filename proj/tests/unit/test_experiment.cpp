#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "lft/errors.hpp"
#include "lft/experiment.hpp"
#include "lft/numcore/random.hpp"

using namespace lft;

TEST_CASE("parse_config: defaults from an empty object") {
  const experiment::ExperimentConfig c = experiment::parse_config("{}");
  CHECK(c.model == lfm::Family::transcription);
  CHECK(c.train.preestimation_epochs == 1000);
  CHECK(c.train.epochs == 700);
  CHECK(c.repeats == 1);
  CHECK(c.lfo.train.epochs == 50);
  CHECK_FALSE(c.spec.kernel_init.has_value());
}

TEST_CASE("parse_config: full document") {
  const experiment::ExperimentConfig c = experiment::parse_config(R"({
    "model": "reaction_diffusion", "seed": 11, "repeats": 3,
    "kernel": {"kind": "rbf", "lengthscale": [0.3, 0.2], "variance": 2.0},
    "inducing": {"time": 8, "space": 6},
    "solver": {"rk4_step": 0.1},
    "train": {"preestimation_epochs": 0, "epochs": 12, "mc_samples": 3, "lr": 0.01},
    "synthetic": {"elements": 12, "steps": 6, "noise_std": 0.02},
    "lfo": {"epochs": 4, "stride": 1, "width": 8, "weight_decay": 0.5},
    "benchmark": {"inducing": [4, 8]}
  })");
  CHECK(c.model == lfm::Family::reaction_diffusion);
  CHECK(c.spec.family == lfm::Family::reaction_diffusion);
  CHECK(c.seed == 11);
  CHECK(c.repeats == 3);
  REQUIRE(c.spec.kernel_init.has_value());
  CHECK(c.spec.kernel_init->lengthscales.size() == 2);
  CHECK(c.spec.kernel_init->variance == 2.0);
  CHECK(c.spec.inducing == 8);
  CHECK(c.spec.inducing_space == 6);
  CHECK(c.spec.rk4_step == 0.1);
  CHECK(c.train.preestimation_epochs == 0);
  CHECK(c.train.mc_samples == 3);
  CHECK(*c.synthetic.elements == 12);
  CHECK(c.lfo.train.weight_decay == 0.5);
  CHECK(c.benchmark.inducing == std::vector<Index>{4, 8});
}

TEST_CASE("parse_config: hill response sets the force count") {
  const experiment::ExperimentConfig c = experiment::parse_config(
      R"({"response": {"kind": "hill", "weights": [[1, -1], [0.5, 2]], "offsets": [0, 1]}})");
  CHECK(c.spec.response.kind == lfm::ResponseKind::hill);
  CHECK(c.spec.forces == 2);
  CHECK(c.spec.response.hill_offsets(1) == 1.0);
}

TEST_CASE("parse_config: rejects bad documents") {
  const char* bad[] = {
      "",
      "  \n",
      "[1, 2]",
      "{\"model\": \"transcription\",}",
      "{\"modle\": \"lotka\"}",
      "{\"kernel\": {\"kind\": \"rbf\", \"shape\": 1}}",
      "{\"model\": \"heat\"}",
      "{\"seed\": \"seven\"}",
      "{\"repeats\": 0}",
      "{\"train\": {\"epochs\": -1}}",
      "{\"train\": {\"lr\": 0}}",
      "{\"kernel\": {\"lengthscale\": -1}}",
      "{\"inducing\": {\"time\": 1}}",
      "{\"dataset\": {\"n\": 0}}",
      "{\"lfo\": {\"validation_fraction\": 1.0}}",
      "{\"response\": {\"weights\": [[1], [1, 2]]}}",
  };
  for (const char* text : bad) {
    CAPTURE(text);
    CHECK_THROWS_AS(experiment::parse_config(text), ConfigError);
  }
}

TEST_CASE("split_holdout: partitions by time") {
  experiment::ExperimentConfig c = experiment::parse_config(R"({"model": "lotka"})");
  std::mt19937_64 rng = stream_rng(4);
  const experiment::Problem whole = experiment::synthetic_problem(c, rng);
  const experiment::Problem p = experiment::split_holdout(whole, 20.0);
  CHECK(p.data.times.size() + p.heldout_times.size() == whole.data.times.size());
  CHECK(p.data.times.back() <= 20.0);
  CHECK(p.heldout_times.front() > 20.0);
  CHECK(p.heldout_clean.rows() == static_cast<Index>(p.heldout_times.size()));
  CHECK(p.clean->rows() == p.data.values.rows());
  CHECK(p.data.values.row(0) == whole.data.values.row(0));
  CHECK_THROWS_AS(experiment::split_holdout(whole, -1.0), ConfigError);
}

TEST_CASE("synthetic_problem: overrides reach the generator") {
  experiment::ExperimentConfig c =
      experiment::parse_config(R"({"synthetic": {"genes": 2, "points": 9, "t1": 6}})");
  std::mt19937_64 rng = stream_rng(1);
  const experiment::Problem p = experiment::synthetic_problem(c, rng);
  CHECK(p.data.values.cols() == 2);
  CHECK(p.data.times.size() == 9);
  CHECK(p.data.times.back() == doctest::Approx(6.0));
  CHECK(p.truth.size() == 6);
}

TEST_CASE("fit: short transcription run reports every metric") {
  experiment::ExperimentConfig c = experiment::parse_config(
      R"({"train": {"preestimation_epochs": 100, "epochs": 50}, "synthetic": {"genes": 3}})");
  std::mt19937_64 rng = stream_rng(2);
  const experiment::Problem p = experiment::synthetic_problem(c, rng);
  const experiment::FitResult r = experiment::fit(c.spec, p, c.train, 3, 4);
  CHECK_FALSE(r.aborted.has_value());
  CHECK(r.trace.size() == 150);
  REQUIRE(r.metrics.q2_output.has_value());
  REQUIRE(r.metrics.q2_latent.has_value());
  REQUIRE(r.metrics.param_mae.has_value());
  CHECK(r.metrics.output_points == 21);
  // the frozen sensitivity is not scored
  CHECK(r.metrics.parameters == 8);
  const auto est = r.model->estimates();
  for (const lfm::Estimate& e : est) {
    if (e.name == "sensitivity_0") {
      CHECK(e.frozen);
      CHECK(e.value == doctest::Approx(p.truth[3].value));
    }
  }
  const io::Json j = experiment::to_json(r.metrics);
  CHECK(j.contains("q2_output"));
  CHECK_FALSE(j.contains("q2_heldout"));
}

TEST_CASE("fit: the same seeds give the same trace") {
  experiment::ExperimentConfig c =
      experiment::parse_config(R"({"train": {"preestimation_epochs": 20, "epochs": 10}})");
  std::mt19937_64 rng = stream_rng(5);
  const experiment::Problem p = experiment::synthetic_problem(c, rng);
  const experiment::FitResult a = experiment::fit(c.spec, p, c.train, 1, 2);
  const experiment::FitResult b = experiment::fit(c.spec, p, c.train, 1, 2);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) CHECK(a.trace[i].elbo == b.trace[i].elbo);
  CHECK(*a.metrics.q2_output == *b.metrics.q2_output);
}

TEST_CASE("score: reaction-diffusion latent field is scored point by point") {
  experiment::ExperimentConfig c = experiment::parse_config(
      R"({"model": "reaction_diffusion", "train": {"preestimation_epochs": 20, "epochs": 5}})");
  std::mt19937_64 rng = stream_rng(3);
  const experiment::Problem p = experiment::synthetic_problem(c, rng);
  const experiment::FitResult r = experiment::fit(c.spec, p, c.train, 1, 2);
  CHECK(r.metrics.latent_points == p.force->size());
  CHECK(r.metrics.output_points == p.data.values.size());
  CHECK(r.metrics.parameters == 3);
}

TEST_CASE("save_lfm: header names the model and its layout") {
  experiment::ExperimentConfig c =
      experiment::parse_config(R"({"train": {"preestimation_epochs": 5, "epochs": 0}})");
  std::mt19937_64 rng = stream_rng(6);
  const experiment::Problem p = experiment::synthetic_problem(c, rng);
  const experiment::FitResult r = experiment::fit(c.spec, p, c.train, 1, 2);
  const std::string path = (std::filesystem::temp_directory_path() / "lft_test_lfm.bin").string();
  experiment::save_lfm(path, *r.model);
  const io::Checkpoint ck = io::read_checkpoint(path);
  CHECK(ck.header["kind"] == "lfm");
  CHECK(ck.header["model"] == "transcription");
  CHECK(ck.values == r.model->params().flatten());
  io::check_layout(ck.header["parameters"], r.model->params());
}
