#include "lft/metrics.hpp"

#include <cmath>

#include "lft/errors.hpp"

namespace lft::metrics {

double q2(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw LengthMismatch("q2: prediction and target lengths differ");
  if (target.size() < 2) throw ZeroVariance("q2: need at least two targets");
  const double n = static_cast<double>(target.size());
  double mean = 0.0;
  for (double t : target) mean += t;
  mean /= n;
  double var = 0.0;
  double mse = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    var += (target[i] - mean) * (target[i] - mean);
    mse += (pred[i] - target[i]) * (pred[i] - target[i]);
  }
  if (!(var > 0.0)) throw ZeroVariance("q2: targets have zero variance");
  return 100.0 * (1.0 - mse / var);
}

double coverage_deviation(std::span<const double> mean, std::span<const double> sigma,
                          std::span<const double> target) {
  if (mean.size() != target.size() || sigma.size() != target.size()) {
    throw LengthMismatch("coverage_deviation: lengths differ");
  }
  if (target.empty()) throw LengthMismatch("coverage_deviation: no targets");
  std::size_t inside = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (!(sigma[i] > 0.0)) throw DomainError("coverage_deviation: sigma must be positive");
    if (std::abs(target[i] - mean[i]) <= sigma[i]) ++inside;
  }
  return 100.0 * static_cast<double>(inside) / static_cast<double>(target.size()) - 68.0;
}

double param_mae(std::span<const double> estimated, std::span<const double> truth) {
  if (estimated.size() != truth.size() || truth.empty()) {
    throw LengthMismatch("param_mae: lengths differ or are empty");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) s += std::abs(estimated[i] - truth[i]);
  return s / static_cast<double>(truth.size());
}

}  // namespace lft::metrics
