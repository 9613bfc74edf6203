// lft: command-line front end for latent force models and operators.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "lft/experiment.hpp"
#include "lft/io.hpp"
#include "lft/lfo.hpp"
#include "lft/numcore/random.hpp"

using namespace lft;
namespace fs = std::filesystem;
using io::Json;
using Clock = std::chrono::steady_clock;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::optional<Index> repeats;
  std::optional<std::string> model;
  std::optional<Index> n;
  std::optional<int> pre_epochs;
  std::optional<int> epochs;
  std::string data;
  std::optional<Index> instance;
  std::string checkpoint;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void write_json(const std::string& path, const Json& j) { io::write_text(path, j.dump(2) + "\n"); }

void write_timing(const std::string& dir, double seconds, Json extra = Json::object()) {
  extra["seconds"] = seconds;
  write_json(dir + "/timing.json", extra);
}

experiment::ExperimentConfig load_config(const Options& o) {
  experiment::ExperimentConfig c =
      experiment::parse_config(o.config.empty() ? std::string("{}") : io::read_text(o.config));
  if (o.model) c.model = lfm::parse_family(*o.model);
  c.spec.family = c.model;
  if (o.seed) c.seed = *o.seed;
  if (o.repeats) c.repeats = *o.repeats;
  if (o.n) c.dataset_size = *o.n;
  if (o.pre_epochs) c.train.preestimation_epochs = *o.pre_epochs;
  if (o.epochs) {
    c.train.epochs = *o.epochs;
    c.lfo.train.epochs = *o.epochs;
  }
  if (!o.data.empty()) c.dataset = o.data;
  if (o.instance) c.instance = *o.instance;
  if (c.repeats < 1) throw ConfigError("repeats must be at least 1");
  if (c.train.preestimation_epochs < 0 || c.train.epochs < 0) throw ConfigError("epoch counts must be nonnegative");
  if (c.instance < 0) throw ConfigError("instance must be nonnegative");
  return c;
}

/// Runs fn(0..count-1) on up to LFT_THREADS workers. The first failure by
/// index is rethrown after every task finished.
void parallel_for(Index count, const std::function<void(Index)>& fn) {
  const unsigned workers = std::min<unsigned>(lfo::thread_count(), static_cast<unsigned>(std::max<Index>(count, 1)));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  std::atomic<Index> next{0};
  auto loop = [&] {
    for (Index i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(loop);
  loop();
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::size_t position_of(const lfo::Dataset& d, Index instance) {
  const auto it = std::find(d.indices.begin(), d.indices.end(), instance);
  if (it == d.indices.end()) {
    throw ConfigError("instance " + std::to_string(instance) + " is not in the dataset");
  }
  return static_cast<std::size_t>(it - d.indices.begin());
}

bool is_field_csv(const std::string& path) {
  const std::string text = io::read_text(path);
  return text.rfind("t,x,value", 0) == 0;
}

// Problems for `train` ---------------------------------------------------------

experiment::Problem dataset_problem(const lfo::Dataset& d, std::size_t pos) {
  experiment::Problem p;
  p.data = io::observations_of(d, pos);
  const lfo::Sample& s = d.samples[pos];
  if (d.grid.rows > 1) {
    Matrix f(d.grid.rows, d.grid.cols);
    for (Index n = 0; n < d.grid.rows; ++n) {
      for (Index k = 0; k < d.grid.cols; ++k) f(n, k) = s.force(0, n * d.grid.cols + k);
    }
    p.force = f;
  } else {
    p.force = s.force.transpose();
    p.force_times = d.times;
  }
  for (std::size_t k = 0; k < d.phi_names.size(); ++k) {
    p.truth.push_back({d.phi_names[k], s.phi(static_cast<Index>(k)), false});
  }
  return p;
}

experiment::Problem file_problem(const std::string& path, lfm::Family family) {
  experiment::Problem p;
  if (is_field_csv(path)) {
    if (family != lfm::Family::reaction_diffusion) throw ConfigError("a t,x,value file needs the reaction_diffusion model");
    io::Field f = io::read_field_csv(path);
    p.data = {std::move(f.times), std::move(f.space), std::move(f.values)};
  } else {
    if (family == lfm::Family::reaction_diffusion) throw ConfigError("the reaction_diffusion model needs a t,x,value file");
    io::Series s = io::read_series_csv(path);
    p.data = {std::move(s.times), {}, std::move(s.values)};
  }
  return p;
}

void write_trace(const std::string& path, const lfm::Trace& trace) {
  std::string text = "epoch,phase,elbo\n";
  for (const lfm::TraceRow& r : trace) {
    text += io::csv_row({std::to_string(r.epoch), lfm::to_string(r.phase), io::format_double(r.elbo)});
  }
  io::write_text(path, text);
}

// Commands ---------------------------------------------------------------------

int cmd_generate(const Options& o) {
  const experiment::ExperimentConfig c = load_config(o);
  const auto t0 = Clock::now();
  const lfo::Dataset d = lfo::generate_dataset(c.model, c.dataset_size, c.seed);
  io::write_dataset(o.out, d, c.dataset_size);
  std::printf("generated %zu of %lld %s instances in %.2f s\n", d.samples.size(),
              static_cast<long long>(c.dataset_size), lfm::to_string(c.model).c_str(), seconds_since(t0));
  return 0;
}

int cmd_train(const Options& o) {
  experiment::ExperimentConfig c = load_config(o);
  std::optional<lfo::Dataset> stored;
  if (!c.dataset.empty() && fs::is_directory(c.dataset)) {
    stored = io::read_dataset(c.dataset);
    c.model = stored->family;
    c.spec.family = c.model;
  }
  const Index repeats = c.repeats;
  std::vector<experiment::MetricReport> reports(static_cast<std::size_t>(repeats));
  std::vector<std::optional<std::string>> aborted(static_cast<std::size_t>(repeats));
  std::vector<double> seconds(static_cast<std::size_t>(repeats));

  parallel_for(repeats, [&](Index r) {
    const std::string dir = repeats == 1 ? o.out : o.out + "/repeat_" + std::to_string(r);
    std::mt19937_64 rng = stream_rng(c.seed, static_cast<std::uint64_t>(r));
    experiment::Problem problem;
    if (stored) {
      problem = dataset_problem(*stored, position_of(*stored, c.instance));
    } else if (!c.dataset.empty()) {
      problem = file_problem(c.dataset, c.model);
    } else {
      problem = experiment::synthetic_problem(c, rng);
    }
    lfm::TrainConfig train = c.train;
    const std::uint64_t model_seed = rng();
    train.seed = rng();
    const std::uint64_t predict_seed = rng();
    experiment::FitResult res = experiment::fit(c.spec, problem, train, model_seed, predict_seed);
    write_trace(dir + "/trace.csv", res.trace);
    const auto i = static_cast<std::size_t>(r);
    seconds[i] = res.seconds;
    write_timing(dir, res.seconds);
    if (res.aborted) {
      aborted[i] = res.aborted;
      return;
    }
    experiment::save_lfm(dir + "/checkpoint.bin", *res.model);
    Json m = experiment::to_json(res.metrics);
    Json est = Json::object();
    for (const lfm::Estimate& e : res.model->estimates()) est[e.name] = e.value;
    m["estimates"] = est;
    write_json(dir + "/metrics.json", m);
    reports[i] = res.metrics;
  });

  for (Index r = 0; r < repeats; ++r) {
    if (aborted[static_cast<std::size_t>(r)]) {
      throw NonFiniteLoss("repeat " + std::to_string(r) + ": " + *aborted[static_cast<std::size_t>(r)]);
    }
  }
  if (repeats > 1) {
    Json summary;
    summary["repeats"] = repeats;
    Json metrics = Json::object();
    const std::vector<std::pair<const char*, std::optional<double> experiment::MetricReport::*>> keys{
        {"q2_output", &experiment::MetricReport::q2_output},
        {"q2_latent", &experiment::MetricReport::q2_latent},
        {"q2_heldout", &experiment::MetricReport::q2_heldout},
        {"coverage_output", &experiment::MetricReport::coverage_output},
        {"coverage_latent", &experiment::MetricReport::coverage_latent},
        {"param_mae", &experiment::MetricReport::param_mae}};
    for (const auto& [name, member] : keys) {
      std::vector<double> v;
      for (const experiment::MetricReport& m : reports) {
        if (m.*member) v.push_back(*(m.*member));
      }
      if (v.empty()) continue;
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
      metrics[name] = {{"mean", mean}, {"std", sd}, {"values", v}};
      std::printf("%-16s %10.4f +- %.4f\n", name, mean, sd);
    }
    summary["metrics"] = metrics;
    write_json(o.out + "/summary.json", summary);
    write_json(o.out + "/timing.json", Json{{"seconds", seconds}});
  } else {
    const Json m = experiment::to_json(reports.front());
    std::printf("%s\n", m.dump().c_str());
  }
  return 0;
}

lfo::Dataset lfo_dataset(const experiment::ExperimentConfig& c) {
  if (!c.dataset.empty()) return io::read_dataset(c.dataset);
  return lfo::generate_dataset(c.model, c.dataset_size, c.seed);
}

int cmd_train_lfo(const Options& o) {
  const experiment::ExperimentConfig c = load_config(o);
  const lfo::Dataset full = lfo_dataset(c);
  const lfo::Dataset data = lfo::subsample(full, c.lfo.stride);
  lfo::Architecture arch = lfo::architecture_for(data);
  arch.width = c.lfo.width;
  lfo::LfoNet net(arch, c.seed);
  lfo::LfoTrainConfig tc = c.lfo.train;
  tc.seed = c.seed;

  std::vector<lfo::LossRow> rows;
  auto write_loss = [&] {
    std::string text = "epoch,train,validation\n";
    for (const lfo::LossRow& r : rows) {
      text += io::csv_row({std::to_string(r.epoch), io::format_double(r.train), io::format_double(r.validation)});
    }
    io::write_text(o.out + "/loss.csv", text);
  };
  const auto t0 = Clock::now();
  try {
    lfo::train_lfo(net, data, tc, [&](const lfo::LossRow& r) {
      rows.push_back(r);
      std::printf("epoch %3d  train %.5f  validation %.5f\n", r.epoch, r.train, r.validation);
      std::fflush(stdout);
    });
  } catch (const NonFiniteLoss&) {
    write_loss();
    throw;
  }
  const double train_seconds = seconds_since(t0);
  write_loss();
  io::save_lfo(o.out + "/lfo.ckpt", net, data);

  const std::vector<Index> held = lfo::split(static_cast<Index>(data.samples.size()), tc.validation_fraction).second;
  const experiment::MetricReport coarse = experiment::score_lfo(net, data, held);
  const experiment::MetricReport fine = experiment::score_lfo(net, full, held);
  Json m;
  m["heldout"] = static_cast<Index>(held.size());
  m["train_grid"] = experiment::to_json(coarse);
  m["full_grid"] = experiment::to_json(fine);
  write_json(o.out + "/metrics.json", m);
  write_timing(o.out, train_seconds);
  return 0;
}

int cmd_infer_lfo(const Options& o) {
  const experiment::ExperimentConfig c = load_config(o);
  if (o.checkpoint.empty()) throw ConfigError("infer-lfo needs --checkpoint");
  if (c.dataset.empty()) throw ConfigError("infer-lfo needs --data");
  const lfo::LfoNet net = io::load_lfo(o.checkpoint);

  Matrix solution;
  lfo::GridShape grid;
  std::vector<double> times;
  std::vector<double> space;
  if (fs::is_directory(c.dataset)) {
    const lfo::Dataset d = io::read_dataset(c.dataset);
    solution = d.samples[position_of(d, c.instance)].solution;
    grid = d.grid;
    times = d.times;
    space = d.space;
  } else if (is_field_csv(c.dataset)) {
    const io::Field f = io::read_field_csv(c.dataset);
    grid = {static_cast<Index>(f.times.size()), static_cast<Index>(f.space.size())};
    solution.resize(1, grid.size());
    for (Index n = 0; n < grid.rows; ++n) {
      for (Index k = 0; k < grid.cols; ++k) solution(0, n * grid.cols + k) = f.values(n, k);
    }
    times = f.times;
    space = f.space;
  } else {
    const io::Series s = io::read_series_csv(c.dataset);
    grid = {1, static_cast<Index>(s.times.size())};
    solution = s.values.transpose();
    times = s.times;
  }
  if (grid.rows > 1 && net.arch().dims != 2) throw ChannelMismatch("checkpoint expects a time series, got a field");
  if (grid.rows == 1 && net.arch().dims != 1) throw ChannelMismatch("checkpoint expects a field, got a time series");

  const auto t0 = Clock::now();
  const lfo::Prediction p = net.forward(solution, grid);
  const double infer_seconds = seconds_since(t0);

  std::string text;
  if (grid.rows > 1) {
    text = "t,x,mean,sigma\n";
    for (Index n = 0; n < grid.rows; ++n) {
      for (Index k = 0; k < grid.cols; ++k) {
        const Index g = n * grid.cols + k;
        text += io::csv_row({io::format_double(times[static_cast<std::size_t>(n)]),
                             io::format_double(space[static_cast<std::size_t>(k)]), io::format_double(p.mean(0, g)),
                             io::format_double(std::sqrt(p.variance(0, g)))});
      }
    }
  } else {
    std::vector<std::string> head{"t"};
    for (Index l = 0; l < p.mean.rows(); ++l) {
      head.push_back("mean_" + std::to_string(l));
      head.push_back("sigma_" + std::to_string(l));
    }
    text = io::csv_row(head);
    for (Index g = 0; g < grid.cols; ++g) {
      std::vector<std::string> row{io::format_double(times[static_cast<std::size_t>(g)])};
      for (Index l = 0; l < p.mean.rows(); ++l) {
        row.push_back(io::format_double(p.mean(l, g)));
        row.push_back(io::format_double(std::sqrt(p.variance(l, g))));
      }
      text += io::csv_row(row);
    }
  }
  io::write_text(o.out + "/force.csv", text);

  const io::Checkpoint ck = io::read_checkpoint(o.checkpoint);
  Json phi = Json::object();
  const Json names = ck.header.value("phi_names", Json::array());
  for (Index k = 0; k < p.phi.size(); ++k) {
    const std::string name = k < static_cast<Index>(names.size()) ? names[static_cast<std::size_t>(k)].get<std::string>()
                                                                   : "phi_" + std::to_string(k);
    phi[name] = p.phi(k);
  }
  write_json(o.out + "/phi.json", phi);
  write_timing(o.out, infer_seconds, Json{{"grid_points", grid.size()}});
  return 0;
}

int cmd_eval(const Options& o) {
  const experiment::ExperimentConfig c = load_config(o);
  if (o.checkpoint.empty()) throw ConfigError("eval needs --checkpoint");
  const lfo::LfoNet net = io::load_lfo(o.checkpoint);
  const lfo::Dataset d = lfo_dataset(c);
  const std::vector<Index> held =
      lfo::split(static_cast<Index>(d.samples.size()), c.lfo.train.validation_fraction).second;
  const lfo::Loss loss = lfo::evaluate(net, d, held);
  Json m = experiment::to_json(experiment::score_lfo(net, d, held));
  m["heldout"] = static_cast<Index>(held.size());
  m["nll"] = loss.nll;
  m["phi_mse"] = loss.phi_mse;
  write_json(o.out + "/metrics.json", m);
  std::printf("%s\n", m.dump().c_str());
  return 0;
}

/// Per-epoch wall times from an epoch hook.
struct EpochClock {
  std::vector<double>* out;
  Clock::time_point last = Clock::now();
  void tick() {
    const Clock::time_point now = Clock::now();
    out->push_back(std::chrono::duration<double>(now - last).count());
    last = now;
  }
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int cmd_benchmark(const Options& o) {
  const experiment::ExperimentConfig c = load_config(o);
  const experiment::BenchmarkConfig& b = c.benchmark;
  std::mt19937_64 data_rng = stream_rng(c.seed, 0);
  const experiment::Problem problem = experiment::synthetic_problem(c, data_rng);
  std::map<std::string, std::vector<double>> times;

  lfm::TrainConfig tc = c.train;
  tc.preestimation_epochs = b.pre_epochs;
  {
    auto model = experiment::make_model(c.spec, problem.data, c.seed);
    std::mt19937_64 rng = stream_rng(c.seed, 1);
    EpochClock pre{&times["pre"]};
    lfm::pretrain_gradient_match(*model, tc, rng, [&](const lfm::TraceRow&) { pre.tick(); });
    EpochClock fine{&times["fine"]};
    lfm::optimize(*model, lfm::Phase::fine, b.fine_epochs, tc.lr, tc.mc_samples, rng,
                  [&](const lfm::TraceRow&) { fine.tick(); });
  }
  {
    auto model = experiment::make_model(c.spec, problem.data, c.seed);
    std::mt19937_64 rng = stream_rng(c.seed, 1);
    EpochClock cold{&times["fine_cold"]};
    lfm::optimize(*model, lfm::Phase::fine, b.fine_epochs, tc.lr, tc.mc_samples, rng,
                  [&](const lfm::TraceRow&) { cold.tick(); });
  }
  {
    const lfo::Dataset d = lfo::subsample(lfo::generate_dataset(c.model, b.lfo_instances, c.seed), c.lfo.stride);
    lfo::Architecture arch = lfo::architecture_for(d);
    arch.width = c.lfo.width;
    lfo::LfoNet net(arch, c.seed);
    lfo::LfoTrainConfig lc = c.lfo.train;
    lc.epochs = b.lfo_epochs;
    lc.seed = c.seed;
    EpochClock clock{&times["lfo"]};
    lfo::train_lfo(net, d, lc, [&](const lfo::LossRow&) { clock.tick(); });
  }

  std::string text = "phase,epoch,seconds\n";
  for (const char* phase : {"pre", "fine", "fine_cold", "lfo"}) {
    const std::vector<double>& v = times[phase];
    for (std::size_t e = 0; e < v.size(); ++e) {
      text += io::csv_row({phase, std::to_string(e + 1), io::format_double(v[e])});
    }
    std::printf("%-10s median epoch %.6f s\n", phase, v.empty() ? 0.0 : median(v));
  }
  io::write_text(o.out + "/benchmark.csv", text);

  // Non-solver epoch time against the inducing count, fitted on log-log axes.
  std::string scaling = "inducing,seconds\n";
  std::vector<double> lx;
  std::vector<double> ly;
  for (Index m : b.inducing) {
    lfm::ModelSpec spec = c.spec;
    spec.inducing = m;
    auto model = experiment::make_model(spec, problem.data, c.seed);
    std::mt19937_64 rng = stream_rng(c.seed, 2);
    std::vector<double> v;
    EpochClock clock{&v};
    lfm::optimize(*model, lfm::Phase::pre, b.pre_epochs, tc.lr_pre, tc.mc_samples, rng,
                  [&](const lfm::TraceRow&) { clock.tick(); });
    const double s = median(v);
    scaling += io::csv_row({std::to_string(m), io::format_double(s)});
    lx.push_back(std::log(static_cast<double>(m)));
    ly.push_back(std::log(s));
  }
  io::write_text(o.out + "/scaling.csv", scaling);
  Json summary;
  if (lx.size() >= 2) {
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      mx += lx[i];
      my += ly[i];
    }
    mx /= static_cast<double>(lx.size());
    my /= static_cast<double>(ly.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      sxy += (lx[i] - mx) * (ly[i] - my);
      sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    summary["inducing_slope"] = sxx > 0.0 ? sxy / sxx : 0.0;
    std::printf("log-log slope of epoch time in M: %.3f\n", summary["inducing_slope"].get<double>());
  }
  for (const char* phase : {"pre", "fine", "fine_cold", "lfo"}) summary["median_epoch_seconds"][phase] = median(times[phase]);
  write_json(o.out + "/benchmark.json", summary);
  return 0;
}

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "JSON experiment config");
  cmd->add_option("--seed", o.seed, "Seed");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--model", o.model, "transcription, lotka or reaction_diffusion");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent force models and operators"};
  app.require_subcommand(1);
  Options o;

  CLI::App* generate = app.add_subcommand("generate", "Write a synthetic instance dataset");
  add_common(generate, o);
  generate->add_option("--n", o.n, "Number of instances");

  CLI::App* train = app.add_subcommand("train", "Fit a latent force model");
  add_common(train, o);
  train->add_option("--repeats", o.repeats, "Independent repeats with per-repeat seeds");
  train->add_option("--preestimation-epochs", o.pre_epochs, "Gradient-matching epochs");
  train->add_option("--epochs", o.epochs, "Fine-tuning epochs");
  train->add_option("--data", o.data, "Dataset directory or trajectory CSV");
  train->add_option("--instance", o.instance, "Instance index within a dataset");

  CLI::App* train_lfo = app.add_subcommand("train-lfo", "Train a latent force operator");
  add_common(train_lfo, o);
  train_lfo->add_option("--n", o.n, "Instances to generate when no dataset is given");
  train_lfo->add_option("--epochs", o.epochs, "Training epochs");
  train_lfo->add_option("--data", o.data, "Dataset directory");

  CLI::App* infer = app.add_subcommand("infer-lfo", "Predict latent forces with a trained operator");
  add_common(infer, o);
  infer->add_option("--checkpoint", o.checkpoint, "Operator checkpoint");
  infer->add_option("--data", o.data, "Dataset directory or trajectory CSV");
  infer->add_option("--instance", o.instance, "Instance index within a dataset");

  CLI::App* eval = app.add_subcommand("eval", "Score a trained operator on held-out instances");
  add_common(eval, o);
  eval->add_option("--checkpoint", o.checkpoint, "Operator checkpoint");
  eval->add_option("--data", o.data, "Dataset directory");
  eval->add_option("--n", o.n, "Instances to generate when no dataset is given");

  CLI::App* bench = app.add_subcommand("benchmark", "Per-epoch timings");
  add_common(bench, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (generate->parsed()) return cmd_generate(o);
    if (train->parsed()) return cmd_train(o);
    if (train_lfo->parsed()) return cmd_train_lfo(o);
    if (infer->parsed()) return cmd_infer_lfo(o);
    if (eval->parsed()) return cmd_eval(o);
    if (bench->parsed()) return cmd_benchmark(o);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 3;
  } catch (const NonFiniteLoss& e) {
    std::fprintf(stderr, "training diverged: %s\n", e.what());
    return 4;
  } catch (const CheckpointMismatch& e) {
    std::fprintf(stderr, "checkpoint mismatch: %s\n", e.what());
    return 5;
  } catch (const ChannelMismatch& e) {
    std::fprintf(stderr, "channel mismatch: %s\n", e.what());
    return 5;
  } catch (const GridTooSmall& e) {
    std::fprintf(stderr, "grid too small: %s\n", e.what());
    return 5;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
