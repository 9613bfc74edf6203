#include "lft/lfo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <thread>

#include "lft/numcore/random.hpp"
#include "lft/synth.hpp"

namespace lft::lfo {

namespace {

/// Y_k = X_k R_k^T per mode k in complex arithmetic. `spec` is 2K x (B W)
/// with column b + B c; weights are (K W) x W.
Matrix mix_forward(const Matrix& spec, const Matrix& rr, const Matrix& ri, Index batch,
                   Index width) {
  const Index k_count = spec.rows() / 2;
  const Matrix t = spec.transpose();
  Matrix out(t.rows(), t.cols());
  for (Index k = 0; k < k_count; ++k) {
    Eigen::Map<const Matrix> xr(t.col(k).data(), batch, width);
    Eigen::Map<const Matrix> xi(t.col(k_count + k).data(), batch, width);
    const auto wr = rr.middleRows(k * width, width);
    const auto wi = ri.middleRows(k * width, width);
    Eigen::Map<Matrix> yr(out.col(k).data(), batch, width);
    Eigen::Map<Matrix> yi(out.col(k_count + k).data(), batch, width);
    yr.noalias() = xr * wr.transpose() - xi * wi.transpose();
    yi.noalias() = xr * wi.transpose() + xi * wr.transpose();
  }
  return out.transpose();
}

ad::Var spectral_mix(const ad::Var& spec, const ad::Var& rr, const ad::Var& ri, Index batch,
                     Index width) {
  Matrix value = mix_forward(spec.value(), rr.value(), ri.value(), batch, width);
  return spec.tape().record(std::move(value), {spec, rr, ri}, [=](ad::Tape& t, int self) {
    const Index k_count = spec.rows() / 2;
    const Matrix g = t.grad_buffer(self).transpose();
    const Matrix x = t.value(spec.id()).transpose();
    const Matrix& wr_all = t.value(rr.id());
    const Matrix& wi_all = t.value(ri.id());
    Matrix gx(x.rows(), x.cols());
    Matrix gr = Matrix::Zero(wr_all.rows(), wr_all.cols());
    Matrix gi = Matrix::Zero(wi_all.rows(), wi_all.cols());
    for (Index k = 0; k < k_count; ++k) {
      Eigen::Map<const Matrix> xr(x.col(k).data(), batch, width);
      Eigen::Map<const Matrix> xi(x.col(k_count + k).data(), batch, width);
      Eigen::Map<const Matrix> gyr(g.col(k).data(), batch, width);
      Eigen::Map<const Matrix> gyi(g.col(k_count + k).data(), batch, width);
      const auto wr = wr_all.middleRows(k * width, width);
      const auto wi = wi_all.middleRows(k * width, width);
      Eigen::Map<Matrix> gxr(gx.col(k).data(), batch, width);
      Eigen::Map<Matrix> gxi(gx.col(k_count + k).data(), batch, width);
      gxr.noalias() = gyr * wr + gyi * wi;
      gxi.noalias() = gyi * wr - gyr * wi;
      gr.middleRows(k * width, width).noalias() = gyr.transpose() * xr + gyi.transpose() * xi;
      gi.middleRows(k * width, width).noalias() = gyi.transpose() * xr - gyr.transpose() * xi;
    }
    if (spec.requires_grad()) t.grad_buffer(spec.id()) += gx.transpose();
    if (rr.requires_grad()) t.grad_buffer(rr.id()) += gr;
    if (ri.requires_grad()) t.grad_buffer(ri.id()) += gi;
  });
}

std::vector<ad::Var> bind_constants(ad::Tape& tape, const ParamSet& params) {
  std::vector<ad::Var> out;
  for (const Parameter& p : params) out.push_back(tape.constant(p.value));
  return out;
}

Matrix normal_matrix(std::mt19937_64& rng, Index rows, Index cols, double std_dev) {
  std::normal_distribution<double> n(0.0, std_dev);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

constexpr double kVarianceFloor = 1e-6;

}  // namespace

SpectralBasis make_basis(GridShape grid, Modes modes) {
  if (modes.first < 1 || modes.second < 1) throw GridTooSmall("modes must be positive");
  if (grid.cols < 2 * modes.second || (modes.first > 1 && grid.rows < 2 * modes.first)) {
    throw GridTooSmall("grid " + std::to_string(grid.rows) + "x" + std::to_string(grid.cols) +
                       " cannot hold the kept modes");
  }
  SpectralBasis b{grid, modes, {}, {}};
  const Index k_count = modes.count();
  const Index g_count = grid.size();
  b.forward.resize(2 * k_count, g_count);
  b.inverse.resize(g_count, 2 * k_count);
  const double two_pi = 2.0 * std::numbers::pi;
  for (Index j1 = 0; j1 < 2 * modes.first - 1; ++j1) {
    const Index k1 = j1 < modes.first ? j1 : j1 - (2 * modes.first - 1);
    for (Index k2 = 0; k2 < modes.second; ++k2) {
      const Index k = j1 * modes.second + k2;
      const double weight = (k2 == 0 ? 1.0 : 2.0) / static_cast<double>(g_count);
      for (Index g1 = 0; g1 < grid.rows; ++g1) {
        for (Index g2 = 0; g2 < grid.cols; ++g2) {
          const Index g = g1 * grid.cols + g2;
          const double theta =
              two_pi * (static_cast<double>(k1 * g1) / static_cast<double>(grid.rows) +
                        static_cast<double>(k2 * g2) / static_cast<double>(grid.cols));
          const double c = std::cos(theta);
          const double s = std::sin(theta);
          b.forward(k, g) = c;
          b.forward(k_count + k, g) = -s;
          b.inverse(g, k) = weight * c;
          b.inverse(g, k_count + k) = -weight * s;
        }
      }
    }
  }
  return b;
}

Matrix spectral_conv(const Matrix& x, const SpectralWeights& weights, const SpectralBasis& basis) {
  const Index width = x.rows();
  if (x.cols() != basis.grid.size()) throw DimensionMismatch("spectral_conv: grid size differs");
  if (weights.real.rows() != basis.modes.count() * width || weights.real.cols() != width ||
      weights.imag.rows() != weights.real.rows() || weights.imag.cols() != width) {
    throw DimensionMismatch("spectral_conv: weight shape");
  }
  const Matrix spec = basis.forward * x.transpose();
  return (basis.inverse * mix_forward(spec, weights.real, weights.imag, 1, width)).transpose();
}

ad::Var spectral_conv(const ad::Var& x, const ad::Var& real, const ad::Var& imag,
                      const SpectralBasis& basis) {
  const Index g = basis.grid.size();
  const Index width = x.cols();
  if (x.rows() % g != 0) throw DimensionMismatch("spectral_conv: rows not a multiple of grid");
  if (real.rows() != basis.modes.count() * width || real.cols() != width) {
    throw DimensionMismatch("spectral_conv: weight shape");
  }
  const Index batch = x.rows() / g;
  const ad::Var z = ad::reshape(x, g, batch * width);
  const ad::Var spec = ad::matmul(basis.forward, z);
  const ad::Var mixed = spectral_mix(spec, real, imag, batch, width);
  return ad::reshape(ad::matmul(basis.inverse, mixed), batch * g, width);
}

ad::Var grid_shift(const ad::Var& x, GridShape grid, Index offset) {
  const Index g = grid.size();
  if (x.rows() % g != 0) throw DimensionMismatch("grid_shift: rows not a multiple of grid");
  const Index total = x.rows();
  auto source = [grid, offset](Index r) -> Index {
    const Index c = r % grid.cols + offset;
    return (c < 0 || c >= grid.cols) ? -1 : r + offset;
  };
  Matrix value = Matrix::Zero(total, x.cols());
  for (Index r = 0; r < total; ++r) {
    const Index s = source(r);
    if (s >= 0) value.row(r) = x.value().row(s);
  }
  return x.tape().record(std::move(value), {x}, [x, source, total](ad::Tape& t, int self) {
    const Matrix& gy = t.grad_buffer(self);
    Matrix& gx = t.grad_buffer(x.id());
    for (Index r = 0; r < total; ++r) {
      const Index s = source(r);
      if (s >= 0) gx.row(s) += gy.row(r);
    }
  });
}

// Net ------------------------------------------------------------------------

LfoNet::LfoNet(Architecture arch, std::uint64_t seed) : arch_(arch) {
  if (arch.outputs < 1 || arch.forces < 1 || arch.width < 1 || arch.layers < 1 || arch.dims < 1 ||
      arch.dims > 2 || arch.phi < 0) {
    throw DimensionMismatch("LfoNet: invalid architecture");
  }
  std::mt19937_64 rng = stream_rng(seed);
  const Index w = arch.width;
  const Index cin = arch.in_channels();
  const Index k = arch.modes.count();
  const double wd = static_cast<double>(w);
  params_.add("lift_w", normal_matrix(rng, cin, w, 1.0 / std::sqrt(static_cast<double>(cin))));
  params_.add("lift_b", Matrix::Zero(1, w));
  for (Index l = 0; l < arch.layers; ++l) {
    const std::string s = std::to_string(l);
    params_.add("spectral_re_" + s, normal_matrix(rng, k * w, w, 1.0 / wd));
    params_.add("spectral_im_" + s, normal_matrix(rng, k * w, w, 1.0 / wd));
    params_.add("pointwise_w_" + s, normal_matrix(rng, w, w, 1.0 / std::sqrt(wd)));
    params_.add("pointwise_b_" + s, Matrix::Zero(1, w));
  }
  params_.add("boundary_w", normal_matrix(rng, 3 * w, w, 1.0 / std::sqrt(3.0 * wd)));
  params_.add("boundary_b", Matrix::Zero(1, w));
  params_.add("proj_w", normal_matrix(rng, w, 2 * arch.forces, 1.0 / std::sqrt(wd)));
  params_.add("proj_b", Matrix::Zero(1, 2 * arch.forces));
  if (arch.phi > 0) {
    params_.add("phi_w", normal_matrix(rng, w, arch.phi, 1.0 / std::sqrt(wd)));
    params_.add("phi_b", Matrix::Zero(1, arch.phi));
  }
  input_mean_ = Vector::Zero(arch.outputs);
  input_scale_ = Vector::Ones(arch.outputs);
}

void LfoNet::set_normalization(Vector mean, Vector scale) {
  if (mean.size() != arch_.outputs || scale.size() != arch_.outputs) {
    throw ChannelMismatch("normalisation size differs from the output channels");
  }
  if ((scale.array() <= 0.0).any()) throw DomainError("normalisation scale must be positive");
  input_mean_ = std::move(mean);
  input_scale_ = std::move(scale);
}

Matrix LfoNet::inputs(const std::vector<const Matrix*>& solutions, GridShape grid) const {
  const Index g = grid.size();
  const Index batch = static_cast<Index>(solutions.size());
  Matrix x(batch * g, arch_.in_channels());
  for (Index b = 0; b < batch; ++b) {
    const Matrix& s = *solutions[static_cast<std::size_t>(b)];
    if (s.rows() != arch_.outputs) {
      throw ChannelMismatch("expected " + std::to_string(arch_.outputs) + " solution channels, got " +
                            std::to_string(s.rows()));
    }
    if (s.cols() != g) throw DimensionMismatch("solution width differs from the grid size");
    for (Index p = 0; p < arch_.outputs; ++p) {
      x.block(b * g, p, g, 1) =
          ((s.row(p).transpose().array() - input_mean_(p)) / input_scale_(p)).matrix();
    }
    for (Index i = 0; i < g; ++i) {
      const double c2 = static_cast<double>(i % grid.cols) / static_cast<double>(grid.cols);
      const double c1 = static_cast<double>(i / grid.cols) / static_cast<double>(grid.rows);
      if (arch_.dims == 1) {
        x(b * g + i, arch_.outputs) = grid.rows == 1 ? c2 : c1;
      } else {
        x(b * g + i, arch_.outputs) = c1;
        x(b * g + i, arch_.outputs + 1) = c2;
      }
    }
  }
  return x;
}

LfoNet::Batch LfoNet::forward(ad::Tape& tape, const std::vector<ad::Var>& leaves,
                              const std::vector<const Matrix*>& solutions,
                              const SpectralBasis& basis) const {
  using namespace ad;
  const Index w = arch_.width;
  const Index g = basis.grid.size();
  const Index batch = static_cast<Index>(solutions.size());
  if (basis.modes.first != arch_.modes.first || basis.modes.second != arch_.modes.second) {
    throw DimensionMismatch("basis modes differ from the architecture");
  }
  auto p = [&](const std::string& name) { return leaves[static_cast<std::size_t>(params_.index_of(name))]; };

  Var h = add_row(matmul(tape.constant(inputs(solutions, basis.grid)), p("lift_w")), p("lift_b"));
  for (Index l = 0; l < arch_.layers; ++l) {
    const std::string s = std::to_string(l);
    const Var spec = spectral_conv(h, p("spectral_re_" + s), p("spectral_im_" + s), basis);
    h = add_row(spec + matmul(h, p("pointwise_w_" + s)), p("pointwise_b_" + s));
    if (l + 1 < arch_.layers) h = gelu(h);
  }
  const Var kw = p("boundary_w");
  Var conv = matmul(grid_shift(h, basis.grid, -1), block(kw, 0, 0, w, w)) +
             matmul(h, block(kw, w, 0, w, w)) +
             matmul(grid_shift(h, basis.grid, 1), block(kw, 2 * w, 0, w, w));
  h = gelu(add_row(conv, p("boundary_b")));

  const Var out = add_row(matmul(h, p("proj_w")), p("proj_b"));
  const Index l_count = arch_.forces;
  Batch res;
  res.mean = block(out, 0, 0, batch * g, l_count);
  res.variance = softplus(block(out, 0, l_count, batch * g, l_count)) + kVarianceFloor;
  if (arch_.phi > 0) {
    Matrix pool = Matrix::Zero(batch, batch * g);
    for (Index b = 0; b < batch; ++b) pool.block(b, b * g, 1, g).setConstant(1.0 / static_cast<double>(g));
    res.phi = add_row(matmul(matmul(pool, h), p("phi_w")), p("phi_b"));
  }
  return res;
}

Prediction LfoNet::forward(const Matrix& solution, const SpectralBasis& basis) const {
  ad::Tape tape;
  const std::vector<ad::Var> leaves = bind_constants(tape, params_);
  const Batch b = forward(tape, leaves, {&solution}, basis);
  Prediction out;
  out.mean = b.mean.value().transpose();
  out.variance = b.variance.value().transpose();
  out.phi = arch_.phi > 0 ? Vector(b.phi.value().row(0).transpose()) : Vector();
  return out;
}

Prediction LfoNet::forward(const Matrix& solution, GridShape grid) const {
  if (solution.rows() != arch_.outputs) {
    throw ChannelMismatch("expected " + std::to_string(arch_.outputs) + " solution channels, got " +
                          std::to_string(solution.rows()));
  }
  return forward(solution, make_basis(grid, arch_.modes));
}

// Datasets -------------------------------------------------------------------

unsigned thread_count() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("LFT_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) n = std::min(n, static_cast<unsigned>(cap));
  }
  return n;
}

namespace {

struct Generated {
  bool ok = false;
  std::string reason;
  Sample sample;
  std::vector<std::string> names;
  std::vector<double> times;
  std::vector<double> space;
};

std::vector<std::string> phi_names_of(const synth::Instance& inst) {
  std::vector<std::string> names;
  for (const lfm::Estimate& e : inst.truth) names.push_back(e.name);
  return names;
}

Vector phi_of(const synth::Instance& inst) {
  Vector v(static_cast<Index>(inst.truth.size()));
  for (std::size_t i = 0; i < inst.truth.size(); ++i) v(static_cast<Index>(i)) = inst.truth[i].value;
  return v;
}

constexpr Index kOdeGrid = 64;
constexpr Index kPdeGrid = 24;

synth::Instance generate_one(lfm::Family family, std::mt19937_64& rng) {
  switch (family) {
    case lfm::Family::transcription: {
      synth::TranscriptionSpec spec;
      spec.grid = {0.0, 12.0, kOdeGrid, kOdeGrid};
      return synth::transcription(spec, rng);
    }
    case lfm::Family::lotka: {
      synth::LotkaSpec spec;
      spec.grid = {0.0, 30.0, kOdeGrid, kOdeGrid};
      return synth::lotka(spec, rng);
    }
    case lfm::Family::reaction_diffusion: {
      synth::ReactionDiffusionSpec spec;
      spec.elements = kPdeGrid - 1;
      spec.steps = kPdeGrid - 1;
      return synth::reaction_diffusion(spec, rng);
    }
  }
  throw ConfigError("unknown model family");
}

Sample to_sample(const synth::Instance& inst) {
  Sample s;
  if (inst.family == lfm::Family::reaction_diffusion) {
    const Matrix& v = inst.observed.values;
    s.solution.resize(1, v.size());
    s.force.resize(1, inst.force.size());
    for (Index n = 0; n < v.rows(); ++n) {
      for (Index k = 0; k < v.cols(); ++k) {
        s.solution(0, n * v.cols() + k) = v(n, k);
        s.force(0, n * v.cols() + k) = inst.force(n, k);
      }
    }
  } else {
    s.solution = inst.observed.values.transpose();
    s.force = inst.force.transpose();
  }
  s.phi = phi_of(inst);
  return s;
}

}  // namespace

Dataset generate_dataset(lfm::Family family, Index n, std::uint64_t seed, unsigned threads) {
  if (n < 1) throw ConfigError("dataset size must be at least 1");
  std::vector<Generated> results(static_cast<std::size_t>(n));
  std::atomic<Index> next{0};
  auto work = [&] {
    for (Index i = next++; i < n; i = next++) {
      Generated& r = results[static_cast<std::size_t>(i)];
      std::mt19937_64 rng = stream_rng(seed, static_cast<std::uint64_t>(i));
      try {
        const synth::Instance inst = generate_one(family, rng);
        r.sample = to_sample(inst);
        r.ok = all_finite(r.sample.solution) && all_finite(r.sample.force);
        if (!r.ok) r.reason = "non-finite values";
        r.names = phi_names_of(inst);
        r.times = inst.observed.times;
        r.space = inst.observed.space;
      } catch (const Error& e) {
        r.reason = e.what();
      }
    }
  };
  const unsigned workers = std::min<unsigned>(threads == 0 ? thread_count() : threads,
                                              static_cast<unsigned>(n));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }

  Dataset d;
  d.family = family;
  d.seed = seed;
  if (family == lfm::Family::reaction_diffusion) {
    d.grid = {kPdeGrid, kPdeGrid};
  } else {
    d.grid = {1, kOdeGrid};
  }
  for (Index i = 0; i < n; ++i) {
    Generated& r = results[static_cast<std::size_t>(i)];
    if (r.ok) {
      if (d.samples.empty()) {
        d.phi_names = r.names;
        d.times = r.times;
        d.space = r.space;
      }
      d.indices.push_back(i);
      d.samples.push_back(std::move(r.sample));
    } else {
      d.skips.push_back({i, r.reason});
    }
  }
  if (!d.samples.empty()) {
    d.channels = d.samples.front().solution.rows();
    d.forces = d.samples.front().force.rows();
  }
  return d;
}

Dataset subsample(const Dataset& data, Index stride) {
  if (stride < 1) throw ConfigError("stride must be at least 1");
  Dataset out = data;
  const Index rows = data.grid.rows == 1 ? 1 : (data.grid.rows + stride - 1) / stride;
  const Index cols = (data.grid.cols + stride - 1) / stride;
  out.grid = {rows, cols};
  auto take = [&](const Matrix& m) {
    Matrix r(m.rows(), rows * cols);
    for (Index a = 0; a < rows; ++a) {
      for (Index b = 0; b < cols; ++b) {
        const Index src = (data.grid.rows == 1 ? 0 : a * stride) * data.grid.cols + b * stride;
        r.col(a * cols + b) = m.col(src);
      }
    }
    return r;
  };
  for (Sample& s : out.samples) {
    s.solution = take(s.solution);
    s.force = take(s.force);
  }
  auto every = [stride](const std::vector<double>& v) {
    std::vector<double> r;
    for (std::size_t i = 0; i < v.size(); i += static_cast<std::size_t>(stride)) r.push_back(v[i]);
    return r;
  };
  out.times = every(data.times);
  out.space = every(data.space);
  return out;
}

// Training -------------------------------------------------------------------

Architecture architecture_for(const Dataset& data) {
  Architecture a;
  a.outputs = data.channels;
  a.forces = data.forces;
  a.phi = static_cast<Index>(data.phi_names.size());
  if (data.grid.rows > 1) {
    a.dims = 2;
    a.modes = {12, 12};
  }
  return a;
}

std::pair<std::vector<Index>, std::vector<Index>> split(Index count, double validation_fraction) {
  const Index val = static_cast<Index>(std::floor(static_cast<double>(count) * validation_fraction));
  std::vector<Index> train;
  std::vector<Index> valid;
  for (Index i = 0; i < count; ++i) (i < count - val ? train : valid).push_back(i);
  return {train, valid};
}

namespace {

struct BatchLoss {
  ad::Var total;
  double nll = 0.0;
  double phi_mse = 0.0;
};

BatchLoss batch_loss(const LfoNet& net, ad::Tape& tape, const std::vector<ad::Var>& leaves,
                     const Dataset& data, const std::vector<Index>& positions,
                     const SpectralBasis& basis) {
  using namespace ad;
  std::vector<const Matrix*> solutions;
  const Index g = basis.grid.size();
  const Index batch = static_cast<Index>(positions.size());
  const Index l_count = net.arch().forces;
  Matrix targets(batch * g, l_count);
  Matrix phi_targets(batch, std::max<Index>(net.arch().phi, 1));
  for (Index b = 0; b < batch; ++b) {
    const Sample& s = data.samples[static_cast<std::size_t>(positions[static_cast<std::size_t>(b)])];
    solutions.push_back(&s.solution);
    if (s.force.rows() != l_count || s.force.cols() != g) {
      throw DimensionMismatch("force shape differs from the architecture");
    }
    targets.block(b * g, 0, g, l_count) = s.force.transpose();
    if (net.arch().phi > 0) phi_targets.row(b) = s.phi.transpose();
  }
  const LfoNet::Batch out = net.forward(tape, leaves, solutions, basis);
  const double count = static_cast<double>(batch * g * l_count);
  const Var log_var = log(out.variance);
  const Var resid = out.mean - tape.constant(targets);
  const Var nll = (0.5 / count) * (sum(log_var) + sum(hadamard(square(resid), exp(-log_var)))) +
                  0.5 * std::log(2.0 * std::numbers::pi);
  BatchLoss res{nll, nll.scalar(), 0.0};
  if (net.arch().phi > 0) {
    const Var mse = (1.0 / static_cast<double>(phi_targets.size())) *
                    sum_squares(out.phi - tape.constant(phi_targets));
    res.phi_mse = mse.scalar();
    res.total = nll + mse;
  }
  return res;
}

}  // namespace

Loss evaluate(const LfoNet& net, const Dataset& data, const std::vector<Index>& samples) {
  const SpectralBasis basis = make_basis(data.grid, net.arch().modes);
  Loss total;
  const Index chunk = 50;
  const Index n = static_cast<Index>(samples.size());
  for (Index start = 0; start < n; start += chunk) {
    const Index stop = std::min(n, start + chunk);
    const std::vector<Index> part(samples.begin() + start, samples.begin() + stop);
    ad::Tape tape;
    const std::vector<ad::Var> leaves = bind_constants(tape, net.params());
    const BatchLoss l = batch_loss(net, tape, leaves, data, part, basis);
    const double w = static_cast<double>(stop - start) / static_cast<double>(n);
    total.nll += w * l.nll;
    total.phi_mse += w * l.phi_mse;
  }
  return total;
}

std::vector<LossRow> train_lfo(LfoNet& net, const Dataset& data, const LfoTrainConfig& config,
                               const std::function<void(const LossRow&)>& on_epoch) {
  if (data.samples.empty()) throw ConfigError("dataset is empty");
  if (config.batch < 1 || config.epochs < 0) throw ConfigError("invalid LFO training settings");
  if (data.channels != net.arch().outputs) {
    throw ChannelMismatch("dataset channels differ from the network inputs");
  }
  auto [train, valid] = split(static_cast<Index>(data.samples.size()), config.validation_fraction);
  if (train.empty()) throw ConfigError("no training samples after the split");

  // per-channel standardisation over every training grid point
  const Index p_count = data.channels;
  Vector mean = Vector::Zero(p_count);
  Vector sq = Vector::Zero(p_count);
  double points = 0.0;
  for (Index i : train) {
    const Matrix& s = data.samples[static_cast<std::size_t>(i)].solution;
    mean += s.rowwise().sum();
    sq += s.array().square().matrix().rowwise().sum();
    points += static_cast<double>(s.cols());
  }
  mean /= points;
  Vector scale = (sq / points - mean.cwiseProduct(mean)).cwiseMax(0.0).cwiseSqrt();
  for (Index p = 0; p < p_count; ++p) {
    if (!(scale(p) > 1e-12)) scale(p) = 1.0;
  }
  net.set_normalization(mean, scale);

  const SpectralBasis basis = make_basis(data.grid, net.arch().modes);
  const std::vector<Index>& held = valid.empty() ? train : valid;
  std::mt19937_64 rng = stream_rng(config.seed);
  Adam adam(config.lr);
  const double shrink = 1.0 - config.lr * config.weight_decay;
  std::vector<LossRow> rows;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    double sum_loss = 0.0;
    for (std::size_t start = 0; start < train.size(); start += static_cast<std::size_t>(config.batch)) {
      const std::size_t stop = std::min(train.size(), start + static_cast<std::size_t>(config.batch));
      const std::vector<Index> part(train.begin() + static_cast<std::ptrdiff_t>(start),
                                    train.begin() + static_cast<std::ptrdiff_t>(stop));
      ad::Tape tape;
      const std::vector<ad::Var> leaves = net.params().bind(tape);
      const BatchLoss l = batch_loss(net, tape, leaves, data, part, basis);
      const double value = l.total.scalar();
      if (!std::isfinite(value)) {
        throw NonFiniteLoss("LFO loss is not finite at epoch " + std::to_string(epoch));
      }
      tape.backward(l.total);
      const std::vector<Matrix> grads = net.params().gradients(tape, leaves);
      for (const Matrix& gm : grads) {
        if (!all_finite(gm)) throw NonFiniteLoss("LFO gradient is not finite at epoch " + std::to_string(epoch));
      }
      adam.step(net.params(), grads, false);
      for (int i = 0; i < net.params().size(); ++i) net.params()[i].value *= shrink;
      sum_loss += value * static_cast<double>(stop - start);
    }
    rows.push_back({epoch, sum_loss / static_cast<double>(train.size()), evaluate(net, data, held).total()});
    if (on_epoch) on_epoch(rows.back());
  }
  return rows;
}

}  // namespace lft::lfo
