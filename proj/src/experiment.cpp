#include "lft/experiment.hpp"

#include <chrono>
#include <cmath>
#include <set>

#include "lft/metrics.hpp"
#include "lft/numcore/random.hpp"

namespace lft::experiment {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

template <class T>
void read(const json& obj, const char* key, std::optional<T>& out, const std::string& where) {
  if (!obj.contains(key)) return;
  T v{};
  read(obj, key, v, where);
  out = v;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

Matrix matrix_from(const json& j, const std::string& where) {
  try {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    if (rows.empty()) return Matrix();
    Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != rows.front().size()) throw ConfigError(where + " rows differ in length");
      for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
    }
    return m;
  } catch (const json::exception&) {
    throw ConfigError(where + " must be a list of number lists");
  }
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw ConfigError("config is empty");
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(root, {"model", "seed", "repeats", "kernel", "response", "inducing", "solver", "train",
                    "synthetic", "dataset", "lfo", "benchmark"},
             "config");
  ExperimentConfig c;
  if (root.contains("model")) {
    std::string name;
    read(root, "model", name, "config");
    c.model = lfm::parse_family(name);
  }
  read(root, "seed", c.seed, "config");
  read(root, "repeats", c.repeats, "config");
  require(c.repeats >= 1, "repeats must be at least 1");

  if (root.contains("kernel")) {
    const json& k = root["kernel"];
    check_keys(k, {"kind", "lengthscale", "variance", "period"}, "kernel");
    if (k.contains("kind")) {
      std::string name;
      read(k, "kind", name, "kernel");
      c.spec.kernel = kernels::parse_kernel_kind(name);
    }
    if (k.contains("lengthscale") || k.contains("variance") || k.contains("period")) {
      kernels::KernelParams p;
      if (k.contains("lengthscale")) {
        std::vector<double> ls;
        if (k["lengthscale"].is_number()) {
          ls.push_back(k["lengthscale"].get<double>());
        } else {
          read(k, "lengthscale", ls, "kernel");
        }
        require(!ls.empty(), "kernel.lengthscale must not be empty");
        p.lengthscales = Eigen::Map<const Vector>(ls.data(), static_cast<Index>(ls.size()));
      }
      read(k, "variance", p.variance, "kernel");
      read(k, "period", p.period, "kernel");
      require((p.lengthscales.array() > 0.0).all() && p.variance > 0.0 && p.period > 0.0,
              "kernel hyperparameters must be positive");
      c.spec.kernel_init = p;
    }
  }
  if (root.contains("response")) {
    const json& r = root["response"];
    check_keys(r, {"kind", "weights", "offsets"}, "response");
    if (r.contains("kind")) {
      std::string name;
      read(r, "kind", name, "response");
      c.spec.response.kind = lfm::parse_response_kind(name);
    }
    if (r.contains("weights")) c.spec.response.hill_weights = matrix_from(r["weights"], "response.weights");
    if (r.contains("offsets")) {
      std::vector<double> o;
      read(r, "offsets", o, "response");
      c.spec.response.hill_offsets = Eigen::Map<const Vector>(o.data(), static_cast<Index>(o.size()));
    }
    if (c.spec.response.kind == lfm::ResponseKind::hill && c.spec.response.hill_weights.size() > 0) {
      c.spec.forces = c.spec.response.hill_weights.cols();
    }
  }
  if (root.contains("inducing")) {
    const json& m = root["inducing"];
    check_keys(m, {"time", "space"}, "inducing");
    read(m, "time", c.spec.inducing, "inducing");
    read(m, "space", c.spec.inducing_space, "inducing");
    require(c.spec.inducing >= 0 && c.spec.inducing != 1, "inducing.time must be 0 or at least 2");
    require(c.spec.inducing_space >= 2, "inducing.space must be at least 2");
  }
  if (root.contains("solver")) {
    const json& s = root["solver"];
    check_keys(s, {"rk4_step", "jitter"}, "solver");
    read(s, "rk4_step", c.spec.rk4_step, "solver");
    read(s, "jitter", c.spec.jitter, "solver");
    require(c.spec.rk4_step > 0.0, "solver.rk4_step must be positive");
    require(c.spec.jitter >= 0.0, "solver.jitter must be nonnegative");
  }
  if (root.contains("train")) {
    const json& t = root["train"];
    check_keys(t, {"preestimation_epochs", "epochs", "mc_samples", "lr_pre", "lr", "noise_var_init"}, "train");
    read(t, "preestimation_epochs", c.train.preestimation_epochs, "train");
    read(t, "epochs", c.train.epochs, "train");
    read(t, "mc_samples", c.train.mc_samples, "train");
    read(t, "lr_pre", c.train.lr_pre, "train");
    read(t, "lr", c.train.lr, "train");
    read(t, "noise_var_init", c.spec.noise_var_init, "train");
  }
  require(c.train.preestimation_epochs >= 0 && c.train.epochs >= 0, "epoch counts must be nonnegative");
  require(c.train.mc_samples >= 1, "train.mc_samples must be at least 1");
  require(c.train.lr_pre > 0.0 && c.train.lr > 0.0, "learning rates must be positive");
  require(c.spec.noise_var_init > 0.0, "train.noise_var_init must be positive");

  if (root.contains("synthetic")) {
    const json& s = root["synthetic"];
    check_keys(s, {"genes", "points", "t1", "noise_std", "force_lengthscale", "elements", "steps", "holdout_after"},
               "synthetic");
    SyntheticConfig& y = c.synthetic;
    read(s, "genes", y.genes, "synthetic");
    read(s, "points", y.points, "synthetic");
    read(s, "t1", y.t1, "synthetic");
    read(s, "noise_std", y.noise_std, "synthetic");
    read(s, "force_lengthscale", y.force_lengthscale, "synthetic");
    read(s, "elements", y.elements, "synthetic");
    read(s, "steps", y.steps, "synthetic");
    read(s, "holdout_after", y.holdout_after, "synthetic");
    require(!y.genes || *y.genes >= 1, "synthetic.genes must be at least 1");
    require(!y.points || *y.points >= 2, "synthetic.points must be at least 2");
    require(!y.t1 || *y.t1 > 0.0, "synthetic.t1 must be positive");
    require(!y.noise_std || *y.noise_std >= 0.0, "synthetic.noise_std must be nonnegative");
    require(!y.force_lengthscale || *y.force_lengthscale > 0.0, "synthetic.force_lengthscale must be positive");
    require(!y.elements || *y.elements >= 2, "synthetic.elements must be at least 2");
    require(!y.steps || *y.steps >= 2, "synthetic.steps must be at least 2");
  }
  if (root.contains("dataset")) {
    const json& d = root["dataset"];
    check_keys(d, {"path", "instance", "n"}, "dataset");
    read(d, "path", c.dataset, "dataset");
    read(d, "instance", c.instance, "dataset");
    read(d, "n", c.dataset_size, "dataset");
    require(c.instance >= 0, "dataset.instance must be nonnegative");
    require(c.dataset_size >= 1, "dataset.n must be at least 1");
  }
  if (root.contains("lfo")) {
    const json& l = root["lfo"];
    check_keys(l, {"epochs", "lr", "batch", "weight_decay", "validation_fraction", "stride", "width"}, "lfo");
    read(l, "epochs", c.lfo.train.epochs, "lfo");
    read(l, "lr", c.lfo.train.lr, "lfo");
    read(l, "batch", c.lfo.train.batch, "lfo");
    read(l, "weight_decay", c.lfo.train.weight_decay, "lfo");
    read(l, "validation_fraction", c.lfo.train.validation_fraction, "lfo");
    read(l, "stride", c.lfo.stride, "lfo");
    read(l, "width", c.lfo.width, "lfo");
    require(c.lfo.train.epochs >= 0, "lfo.epochs must be nonnegative");
    require(c.lfo.train.lr > 0.0 && c.lfo.train.weight_decay >= 0.0, "lfo rates must be positive");
    require(c.lfo.train.batch >= 1 && c.lfo.stride >= 1 && c.lfo.width >= 1, "lfo sizes must be positive");
    require(c.lfo.train.validation_fraction >= 0.0 && c.lfo.train.validation_fraction < 1.0,
            "lfo.validation_fraction must lie in [0, 1)");
  }
  if (root.contains("benchmark")) {
    const json& b = root["benchmark"];
    check_keys(b, {"pre_epochs", "fine_epochs", "lfo_epochs", "lfo_instances", "inducing"}, "benchmark");
    read(b, "pre_epochs", c.benchmark.pre_epochs, "benchmark");
    read(b, "fine_epochs", c.benchmark.fine_epochs, "benchmark");
    read(b, "lfo_epochs", c.benchmark.lfo_epochs, "benchmark");
    read(b, "lfo_instances", c.benchmark.lfo_instances, "benchmark");
    read(b, "inducing", c.benchmark.inducing, "benchmark");
    require(c.benchmark.pre_epochs >= 1 && c.benchmark.fine_epochs >= 1 && c.benchmark.lfo_epochs >= 1,
            "benchmark epochs must be at least 1");
    require(c.benchmark.lfo_instances >= 2, "benchmark.lfo_instances must be at least 2");
    for (Index m : c.benchmark.inducing) require(m >= 2, "benchmark.inducing entries must be at least 2");
  }
  c.spec.family = c.model;
  return c;
}

// Problems -------------------------------------------------------------------

Problem from_instance(const synth::Instance& inst) {
  Problem p;
  p.data = inst.observed;
  p.clean = inst.clean;
  p.force_times = inst.force_times;
  p.force = inst.force;
  p.truth = inst.truth;
  return p;
}

Problem synthetic_problem(const ExperimentConfig& config, std::mt19937_64& rng) {
  const SyntheticConfig& s = config.synthetic;
  Problem p;
  switch (config.model) {
    case lfm::Family::transcription: {
      synth::TranscriptionSpec ts;
      if (s.genes) ts.genes = *s.genes;
      if (s.points) ts.grid.points = *s.points;
      if (s.t1) ts.grid.t1 = *s.t1;
      if (s.noise_std) ts.noise_std = *s.noise_std;
      if (s.force_lengthscale) ts.force_lengthscale = *s.force_lengthscale;
      ts.response = config.spec.response;
      p = from_instance(synth::transcription(ts, rng));
      break;
    }
    case lfm::Family::lotka: {
      synth::LotkaSpec ls;
      if (s.points) ls.grid.points = *s.points;
      if (s.t1) ls.grid.t1 = *s.t1;
      if (s.noise_std) ls.noise_std = *s.noise_std;
      p = from_instance(synth::lotka(ls, rng));
      break;
    }
    case lfm::Family::reaction_diffusion: {
      synth::ReactionDiffusionSpec rs;
      if (s.elements) rs.elements = *s.elements;
      if (s.steps) rs.steps = *s.steps;
      if (s.t1) rs.t1 = *s.t1;
      if (s.noise_std) rs.noise_std = *s.noise_std;
      p = from_instance(synth::reaction_diffusion(rs, rng));
      break;
    }
  }
  if (s.holdout_after) {
    if (config.model == lfm::Family::reaction_diffusion) {
      throw ConfigError("synthetic.holdout_after applies to ODE models only");
    }
    p = split_holdout(std::move(p), *s.holdout_after);
  }
  return p;
}

Problem split_holdout(Problem p, double cut) {
  if (!p.clean) throw ConfigError("a held-out window needs noiseless targets");
  std::vector<Index> keep;
  std::vector<Index> held;
  for (std::size_t n = 0; n < p.data.times.size(); ++n) {
    (p.data.times[n] <= cut ? keep : held).push_back(static_cast<Index>(n));
  }
  if (keep.size() < 2) throw ConfigError("holdout_after leaves fewer than two training points");
  lfm::Observations train;
  Matrix clean(static_cast<Index>(keep.size()), p.clean->cols());
  train.values.resize(static_cast<Index>(keep.size()), p.data.values.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    train.times.push_back(p.data.times[static_cast<std::size_t>(keep[i])]);
    train.values.row(static_cast<Index>(i)) = p.data.values.row(keep[i]);
    clean.row(static_cast<Index>(i)) = p.clean->row(keep[i]);
  }
  p.heldout_clean.resize(static_cast<Index>(held.size()), p.clean->cols());
  p.heldout_times.clear();
  for (std::size_t i = 0; i < held.size(); ++i) {
    p.heldout_times.push_back(p.data.times[static_cast<std::size_t>(held[i])]);
    p.heldout_clean.row(static_cast<Index>(i)) = p.clean->row(held[i]);
  }
  p.data = std::move(train);
  p.clean = std::move(clean);
  return p;
}

// Scoring --------------------------------------------------------------------

namespace {

std::span<const double> span_of(const Matrix& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

std::optional<double> safe_q2(const Matrix& pred, const Matrix& target) {
  try {
    return metrics::q2(span_of(pred), span_of(target));
  } catch (const ZeroVariance&) {
    return std::nullopt;
  }
}

double coverage(const Matrix& mean, const Matrix& var, const Matrix& target) {
  const Matrix sigma = var.cwiseMax(0.0).cwiseSqrt().cwiseMax(1e-12);
  return metrics::coverage_deviation(span_of(mean), span_of(sigma), span_of(target));
}

std::optional<double> mae_against(const std::vector<lfm::Estimate>& est, const std::vector<lfm::Estimate>& truth,
                                  Index& count) {
  std::vector<double> a;
  std::vector<double> b;
  for (const lfm::Estimate& e : est) {
    if (e.frozen) continue;
    bool found = false;
    for (const lfm::Estimate& t : truth) {
      if (t.name == e.name) {
        a.push_back(e.value);
        b.push_back(t.value);
        found = true;
        break;
      }
    }
    if (!found) return std::nullopt;
  }
  count = static_cast<Index>(a.size());
  if (a.empty()) return std::nullopt;
  return metrics::param_mae(a, b);
}

}  // namespace

io::Json to_json(const MetricReport& m) {
  io::Json j = io::Json::object();
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
  };
  put("q2_output", m.q2_output);
  put("q2_latent", m.q2_latent);
  put("q2_heldout", m.q2_heldout);
  put("coverage_output", m.coverage_output);
  put("coverage_latent", m.coverage_latent);
  put("param_mae", m.param_mae);
  j["output_points"] = m.output_points;
  j["latent_points"] = m.latent_points;
  j["parameters"] = m.parameters;
  return j;
}

std::unique_ptr<lfm::LatentForceModel> make_model(const lfm::ModelSpec& spec,
                                                  const lfm::Observations& data, std::uint64_t seed) {
  if (spec.family == lfm::Family::reaction_diffusion) return std::make_unique<lfm::PdeModel>(spec, data, seed);
  return std::make_unique<lfm::OdeModel>(spec, data, seed);
}

MetricReport score(const lfm::LatentForceModel& model, const Problem& problem, std::uint64_t seed,
                   Index samples) {
  MetricReport r;
  std::mt19937_64 rng = stream_rng(seed);
  const Matrix& outputs_target = problem.clean ? *problem.clean : problem.data.values;
  lfm::Prediction pred;
  Matrix force_target;
  if (const auto* ode = dynamic_cast<const lfm::OdeModel*>(&model)) {
    const std::vector<double>& ft = problem.force_times.empty() ? problem.data.times : problem.force_times;
    pred = ode->predict(problem.data.times, problem.force ? ft : std::vector<double>{}, samples, rng);
    if (problem.force) force_target = *problem.force;
    if (!problem.heldout_times.empty()) {
      const lfm::Prediction h = ode->predict(problem.heldout_times, {}, samples, rng);
      r.q2_heldout = safe_q2(h.output_mean, problem.heldout_clean);
    }
  } else {
    const auto& pde = dynamic_cast<const lfm::PdeModel&>(model);
    const Matrix points = problem.force ? lfm::space_time_points(problem.data.times, problem.data.space) : Matrix();
    pred = pde.predict(points, samples, rng);
    if (problem.force) {
      const Matrix& f = *problem.force;
      force_target.resize(f.size(), 1);
      for (Index n = 0; n < f.rows(); ++n) {
        for (Index k = 0; k < f.cols(); ++k) force_target(n * f.cols() + k, 0) = f(n, k);
      }
    }
  }
  r.output_points = pred.output_mean.size();
  r.q2_output = safe_q2(pred.output_mean, outputs_target);
  r.coverage_output = coverage(pred.output_mean, pred.output_var, outputs_target);
  if (force_target.size() > 0) {
    r.latent_points = force_target.size();
    r.q2_latent = safe_q2(pred.force_mean, force_target);
    r.coverage_latent = coverage(pred.force_mean, pred.force_var, force_target);
  }
  if (!problem.truth.empty()) r.param_mae = mae_against(model.estimates(), problem.truth, r.parameters);
  return r;
}

FitResult fit(lfm::ModelSpec spec, const Problem& problem, const lfm::TrainConfig& train,
              std::uint64_t model_seed, std::uint64_t predict_seed) {
  if (spec.family == lfm::Family::transcription && !spec.frozen_sensitivity) {
    for (const lfm::Estimate& e : problem.truth) {
      if (e.name == "sensitivity_0") spec.frozen_sensitivity = e.value;
    }
  }
  FitResult res;
  res.model = make_model(spec, problem.data, model_seed);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    res.trace = lfm::train(*res.model, train);
  } catch (const lfm::TrainingAborted& e) {
    res.trace = e.trace;
    res.aborted = e.what();
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!res.aborted) res.metrics = score(*res.model, problem, predict_seed);
  return res;
}

void save_lfm(const std::string& path, const lfm::LatentForceModel& model) {
  io::Json h;
  h["format"] = "lft-checkpoint";
  h["version"] = 1;
  h["kind"] = "lfm";
  h["model"] = lfm::to_string(model.spec().family);
  h["kernel"] = kernels::to_string(model.spec().kernel);
  h["response"] = lfm::to_string(model.spec().response.kind);
  io::Json est = io::Json::object();
  for (const lfm::Estimate& e : model.estimates()) est[e.name] = e.value;
  h["estimates"] = est;
  h["parameters"] = io::parameter_layout(model.params());
  const std::vector<double> flat = model.params().flatten();
  io::write_checkpoint(path, std::move(h), flat);
}

MetricReport score_lfo(const lfo::LfoNet& net, const lfo::Dataset& data, const std::vector<Index>& positions) {
  MetricReport r;
  if (positions.empty()) return r;
  const lfo::SpectralBasis basis = lfo::make_basis(data.grid, net.arch().modes);
  const Index g = data.grid.size();
  const Index l = data.forces;
  const Index n = static_cast<Index>(positions.size());
  Matrix mean(l * n, g), var(l * n, g), target(l * n, g);
  std::vector<double> phi_est;
  std::vector<double> phi_true;
  for (Index i = 0; i < n; ++i) {
    const lfo::Sample& s = data.samples[static_cast<std::size_t>(positions[static_cast<std::size_t>(i)])];
    const lfo::Prediction p = net.forward(s.solution, basis);
    mean.middleRows(i * l, l) = p.mean;
    var.middleRows(i * l, l) = p.variance;
    target.middleRows(i * l, l) = s.force;
    for (Index k = 0; k < p.phi.size() && k < s.phi.size(); ++k) {
      phi_est.push_back(p.phi(k));
      phi_true.push_back(s.phi(k));
    }
  }
  r.latent_points = target.size();
  r.q2_latent = safe_q2(mean, target);
  r.coverage_latent = coverage(mean, var, target);
  if (!phi_est.empty()) {
    r.param_mae = metrics::param_mae(phi_est, phi_true);
    r.parameters = static_cast<Index>(phi_est.size());
  }
  return r;
}

}  // namespace lft::experiment
