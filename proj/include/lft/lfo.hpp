#pragma once

// Latent force operator: a Fourier neural operator that maps observed
// solution fields to a Gaussian over latent forces, plus the instance
// datasets it is trained on.

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lft/lfm.hpp"
#include "lft/numcore/ops.hpp"
#include "lft/numcore/params.hpp"

namespace lft::lfo {

/// Grid of `rows` x `cols` points flattened row-major (index r * cols + c).
/// ODE fields use rows = 1. The last axis is the half-spectrum axis.
struct GridShape {
  Index rows = 1;
  Index cols = 0;
  Index size() const { return rows * cols; }
  bool operator==(const GridShape&) const = default;
};

/// Kept Fourier modes: frequencies |k1| < first along the row axis and
/// 0 <= k2 < second along the column axis.
struct Modes {
  Index first = 1;
  Index second = 16;
  Index count() const { return (2 * first - 1) * second; }
};

/// Real and imaginary parts of the forward transform restricted to the kept
/// modes (K x G each) and the weighted inverse (G x 2K) that maps stacked
/// [real; imag] spectra back to a real field.
struct SpectralBasis {
  GridShape grid;
  Modes modes;
  Matrix forward;  // 2K x G, [real; imag]
  Matrix inverse;  // G x 2K
};

/// Throws GridTooSmall unless each axis holds at least twice its modes.
SpectralBasis make_basis(GridShape grid, Modes modes);

/// Per-mode complex channel mixing weights, each block W_out x W_in stacked
/// mode by mode: real and imag are (K W) x W.
struct SpectralWeights {
  Matrix real;
  Matrix imag;
};

/// Value-level spectral convolution of x (channels x grid).
Matrix spectral_conv(const Matrix& x, const SpectralWeights& weights, const SpectralBasis& basis);

/// Spectral convolution of a batch laid out as (B G) x W rows (instance
/// major) on the tape.
ad::Var spectral_conv(const ad::Var& x, const ad::Var& real, const ad::Var& imag,
                      const SpectralBasis& basis);

/// Shifts every grid row along the column axis by `offset` with zero fill:
/// out[g2] = x[g2 + offset].
ad::Var grid_shift(const ad::Var& x, GridShape grid, Index offset);

struct Architecture {
  Index outputs = 5;  // solution channels
  Index forces = 1;
  Index phi = 0;      // size of the auxiliary parameter head
  Index width = 32;
  Modes modes;
  Index layers = 4;
  int dims = 1;       // coordinate channels appended to the input

  Index in_channels() const { return outputs + dims; }
};

/// Forces and parameters predicted for one instance: mean and variance are
/// forces x grid.
struct Prediction {
  Matrix mean;
  Matrix variance;
  Vector phi;
};

class LfoNet {
 public:
  LfoNet(Architecture arch, std::uint64_t seed);

  const Architecture& arch() const { return arch_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  /// Per-channel standardisation of the solution inputs.
  const Vector& input_mean() const { return input_mean_; }
  const Vector& input_scale() const { return input_scale_; }
  void set_normalization(Vector mean, Vector scale);

  /// Throws ChannelMismatch when `solution` does not have arch().outputs
  /// rows and DimensionMismatch when its width differs from grid.size().
  Prediction forward(const Matrix& solution, GridShape grid) const;
  Prediction forward(const Matrix& solution, const SpectralBasis& basis) const;

  struct Batch {
    ad::Var mean;      // (B G) x L
    ad::Var variance;  // (B G) x L
    ad::Var phi;       // B x phi
  };
  /// Batched forward on the tape with leaves bound from params().
  Batch forward(ad::Tape& tape, const std::vector<ad::Var>& leaves,
                const std::vector<const Matrix*>& solutions, const SpectralBasis& basis) const;

 private:
  Matrix inputs(const std::vector<const Matrix*>& solutions, GridShape grid) const;

  Architecture arch_;
  ParamSet params_;
  Vector input_mean_;
  Vector input_scale_;
};

// Datasets -------------------------------------------------------------------

struct Sample {
  Matrix solution;  // outputs x grid
  Matrix force;     // forces x grid
  Vector phi;
};

struct Skip {
  Index index = 0;
  std::string reason;
};

struct Dataset {
  lfm::Family family = lfm::Family::transcription;
  GridShape grid;
  Index channels = 0;
  Index forces = 1;
  std::uint64_t seed = 0;
  /// Column-axis coordinates for ODE grids; row (time) and column (space)
  /// coordinates for PDE grids.
  std::vector<double> times;
  std::vector<double> space;
  std::vector<std::string> phi_names;
  std::vector<Index> indices;  // generation index of each sample
  std::vector<Sample> samples;
  std::vector<Skip> skips;
};

/// `n` instances with per-index seeds, so instance i does not depend on n.
/// Instances whose solve fails are skipped and listed. Runs on up to
/// `threads` workers (0 means thread_count()).
Dataset generate_dataset(lfm::Family family, Index n, std::uint64_t seed, unsigned threads = 0);

/// Keeps every `stride`-th point along each axis.
Dataset subsample(const Dataset& data, Index stride);

/// Worker count from LFT_THREADS (at least 1, at most hardware threads).
unsigned thread_count();

// Training -------------------------------------------------------------------

struct LfoTrainConfig {
  int epochs = 50;
  double lr = 1e-3;
  /// Decoupled decay: every weight is scaled by (1 - lr * weight_decay) after
  /// each step.
  double weight_decay = 1.0;
  Index batch = 20;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct LossRow {
  int epoch = 0;
  double train = 0.0;
  double validation = 0.0;
};

/// Architecture matching a dataset's channels and parameter count.
Architecture architecture_for(const Dataset& data);

/// Mean Gaussian NLL of the forces plus mean squared error of the parameter
/// head over `samples`.
struct Loss {
  double nll = 0.0;
  double phi_mse = 0.0;
  double total() const { return nll + phi_mse; }
};
Loss evaluate(const LfoNet& net, const Dataset& data, const std::vector<Index>& samples);

/// Splits by index (the last validation_fraction is held out), fits the input
/// normalisation on the training part and runs Adam on the joint loss. The
/// validation column falls back to the training samples when nothing is
/// held out.
/// Throws NonFiniteLoss when a batch loss stops being finite.
std::vector<LossRow> train_lfo(LfoNet& net, const Dataset& data, const LfoTrainConfig& config,
                               const std::function<void(const LossRow&)>& on_epoch = {});

/// Training and validation sample positions used by train_lfo.
std::pair<std::vector<Index>, std::vector<Index>> split(Index count, double validation_fraction);

}  // namespace lft::lfo
