#pragma once

// Evaluation metrics: Q2, coverage deviation and parameter MAE.

#include <span>

namespace lft::metrics {

/// 100 (1 - mean((pred - target)^2) / var(target)) with the population
/// variance. Throws ZeroVariance when fewer than two targets are given or
/// they are all equal, LengthMismatch when the lengths differ.
double q2(std::span<const double> pred, std::span<const double> target);

/// 100 * (fraction of targets inside [mean - sigma, mean + sigma]) - 68.
/// Signed. Throws LengthMismatch, and DomainError for a nonpositive sigma.
double coverage_deviation(std::span<const double> mean, std::span<const double> sigma,
                          std::span<const double> target);

/// Mean absolute error. Throws LengthMismatch (also for empty input).
double param_mae(std::span<const double> estimated, std::span<const double> truth);

}  // namespace lft::metrics
