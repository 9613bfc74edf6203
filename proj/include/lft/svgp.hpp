#pragma once

// Sparse variational GP machinery shared by every latent force model.
//
// Each of the L latent forces has M inducing values at shared locations Z
// with a Gaussian variational distribution q(u_i) = N(m_i, C_i), C_i = L_i L_i^T.
// Forces are a-priori independent and the variational family factorises
// across forces.

#include <vector>

#include "lft/kernels.hpp"
#include "lft/numcore/params.hpp"

namespace lft::svgp {

/// Inducing locations, M x D.
struct InducingSet {
  Matrix locations;
  Index size() const { return locations.rows(); }
  Index dims() const { return locations.cols(); }
};

/// Tensor lattice of `counts[d]` evenly spaced points over `[lo[d], hi[d]]`,
/// first dimension varying slowest.
InducingSet uniform_grid(const std::vector<double>& lo, const std::vector<double>& hi,
                         const std::vector<Index>& counts);

/// Plain-value variational distribution: mean M x L, one lower Cholesky
/// factor (M x M) per force.
struct VariationalDist {
  Matrix mean;
  std::vector<Matrix> chol;
};

/// The same distribution as tape nodes.
struct VariationalVars {
  ad::Var mean;
  std::vector<ad::Var> chol;
};

struct Predictive {
  ad::Var mean;  // N* x 1
  ad::Var cov;   // N* x N*
};

/// q(f*) for every force:
///   m* = K*M KMM^{-1} m,  S* = K** + K*M KMM^{-1} (C - KMM) KMM^{-1} KM*.
std::vector<Predictive> predictive(const VariationalVars& q, const InducingSet& z,
                                   const Matrix& xstar, kernels::KernelKind kind,
                                   const kernels::KernelVars& kernel, double jitter);

/// sum_i KL(q(u_i) || N(0, KMM)).
ad::Var kl_to_prior(const VariationalVars& q, const InducingSet& z, kernels::KernelKind kind,
                    const kernels::KernelVars& kernel, double jitter);

/// Reparameterised draws f_i = m*_i + chol(S*_i + jitter I) eps_i. `eps`
/// holds one N* x S block of standard normal draws per force; the result
/// has the same layout.
std::vector<ad::Var> sample_forces(const VariationalVars& q, const InducingSet& z,
                                   const Matrix& xstar, kernels::KernelKind kind,
                                   const kernels::KernelVars& kernel,
                                   const std::vector<Matrix>& eps, double jitter);

/// Gaussian log-likelihood summed over entries; row p of `y` and `yhat`
/// uses noise variance `noise_var(p)`.
ad::Var gaussian_loglik(const Matrix& y, const ad::Var& yhat, const ad::Var& noise_var);
double gaussian_loglik(const Matrix& y, const Matrix& yhat, const Vector& noise_var);

// Plain-value conveniences (evaluated on a private tape).

struct PredictiveValue {
  Matrix mean;
  Matrix cov;
};

std::vector<PredictiveValue> predictive(const VariationalDist& q, const InducingSet& z,
                                        const Matrix& xstar, kernels::KernelKind kind,
                                        const kernels::KernelParams& kernel, double jitter);
double kl_to_prior(const VariationalDist& q, const InducingSet& z, kernels::KernelKind kind,
                   const kernels::KernelParams& kernel, double jitter);
std::vector<Matrix> sample_forces(const VariationalDist& q, const InducingSet& z,
                                  const Matrix& xstar, kernels::KernelKind kind,
                                  const kernels::KernelParams& kernel,
                                  const std::vector<Matrix>& eps, double jitter);

/// Owns the raw (unconstrained) variational and kernel parameters of a GP
/// prior over L forces inside a ParamSet. Positive quantities are stored
/// through softplus.
class VariationalGp {
 public:
  VariationalGp(kernels::KernelKind kind, InducingSet inducing, Index num_forces,
                const kernels::KernelParams& init, double jitter);

  /// Adds this GP's parameters to `params` (mean 0, Cholesky factor 0.1 I).
  void register_params(ParamSet& params);

  struct Bound {
    VariationalVars q;
    kernels::KernelVars kernel;
  };
  /// Maps bound raw leaves (from ParamSet::bind) to constrained nodes.
  Bound bind(const std::vector<ad::Var>& leaves) const;

  /// Current constrained values from raw parameters.
  VariationalDist variational(const ParamSet& params) const;
  kernels::KernelParams kernel_params(const ParamSet& params) const;

  kernels::KernelKind kind() const { return kind_; }
  const InducingSet& inducing() const { return inducing_; }
  Index num_forces() const { return num_forces_; }
  double jitter() const { return jitter_; }

 private:
  kernels::KernelKind kind_;
  InducingSet inducing_;
  Index num_forces_;
  kernels::KernelParams init_;
  double jitter_;
  int mean_idx_ = -1;
  std::vector<int> chol_idx_;
  int lengthscale_idx_ = -1;
  int variance_idx_ = -1;
  int period_idx_ = -1;
};

}  // namespace lft::svgp
