#pragma once

// Stationary covariance functions for latent-force GP priors.

#include <span>
#include <string>

#include "lft/numcore/ops.hpp"

namespace lft::kernels {

enum class KernelKind { rbf, periodic };

KernelKind parse_kernel_kind(const std::string& name);
std::string to_string(KernelKind kind);

/// Constrained (positive) hyperparameters. `lengthscales` holds one entry per
/// input dimension; `period` is read by the periodic kernel only.
struct KernelParams {
  Vector lengthscales = Vector::Ones(1);
  double variance = 1.0;
  double period = 1.0;
};

/// variance * exp(-1/2 sum_d (x_d - x'_d)^2 / l_d^2). Anisotropic when more
/// than one lengthscale is given.
double rbf(std::span<const double> x, std::span<const double> xp, const KernelParams& params);

/// variance * exp(-2 sin^2(pi |t - t'| / p) / l^2).
double periodic(double t, double tp, const KernelParams& params);

/// Gram matrix between the rows of `x` (N x D) and `xp` (M x D).
Matrix kernel_matrix(const Matrix& x, const Matrix& xp, KernelKind kind, const KernelParams& params);

/// Lengthscale per dimension = smallest positive gap between data points in
/// that dimension; variance 1; period = half the span of the first input
/// dimension.
KernelParams initial_params(KernelKind kind, const Matrix& x);

/// Hyperparameters as tape nodes (already positive).
struct KernelVars {
  ad::Var lengthscales;  // D x 1
  ad::Var variance;      // 1 x 1
  ad::Var period;        // 1 x 1, may be invalid for rbf
};

/// Differentiable Gram matrix; gradients flow to every hyperparameter node.
ad::Var kernel_matrix(const Matrix& x, const Matrix& xp, KernelKind kind, const KernelVars& params);

}  // namespace lft::kernels
