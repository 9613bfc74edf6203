#include "lft/svgp.hpp"

#include <cmath>
#include <numbers>

#include "lft/errors.hpp"

namespace lft::svgp {

using ad::Var;

InducingSet uniform_grid(const std::vector<double>& lo, const std::vector<double>& hi,
                         const std::vector<Index>& counts) {
  const std::size_t dims = counts.size();
  if (lo.size() != dims || hi.size() != dims || dims == 0) {
    throw DimensionMismatch("uniform_grid: range and count dimensions differ");
  }
  Index total = 1;
  for (Index c : counts) {
    if (c < 1) throw std::invalid_argument("uniform_grid: counts must be positive");
    total *= c;
  }
  Matrix z(total, static_cast<Index>(dims));
  for (Index row = 0; row < total; ++row) {
    Index rem = row;
    for (std::size_t d = dims; d-- > 0;) {
      const Index c = counts[d];
      const Index k = rem % c;
      rem /= c;
      z(row, static_cast<Index>(d)) =
          c == 1 ? 0.5 * (lo[d] + hi[d]) : lo[d] + (hi[d] - lo[d]) * static_cast<double>(k) / static_cast<double>(c - 1);
    }
  }
  return InducingSet{std::move(z)};
}

namespace {

struct SharedTerms {
  Var lk;  // chol(KMM + jitter I)
  Var a;   // Lk^{-1} KM*
};

SharedTerms shared_terms(const InducingSet& z, const Matrix& xstar, kernels::KernelKind kind,
                         const kernels::KernelVars& kernel, double jitter) {
  Var kmm = kernels::kernel_matrix(z.locations, z.locations, kind, kernel);
  Var lk = ad::cholesky(kmm, jitter);
  Var kms = kernels::kernel_matrix(z.locations, xstar, kind, kernel);
  return {lk, ad::solve_lower(lk, kms)};
}

void check_q(const VariationalVars& q, const InducingSet& z) {
  if (q.mean.rows() != z.size() || static_cast<std::size_t>(q.mean.cols()) != q.chol.size()) {
    throw DimensionMismatch("svgp: variational mean must be M x L with one factor per force");
  }
  for (const Var& c : q.chol) {
    if (c.rows() != z.size() || c.cols() != z.size()) {
      throw DimensionMismatch("svgp: variational factor must be M x M");
    }
  }
}

std::vector<Predictive> predictive_with(const SharedTerms& s, const VariationalVars& q,
                                        const Matrix& xstar, kernels::KernelKind kind,
                                        const kernels::KernelVars& kernel) {
  Var kss = kernels::kernel_matrix(xstar, xstar, kind, kernel);
  Var at = ad::transpose(s.a);
  Var prior_part = kss - ad::matmul(at, s.a);
  std::vector<Predictive> out;
  for (std::size_t i = 0; i < q.chol.size(); ++i) {
    Var mi = ad::col(q.mean, static_cast<Index>(i));
    Var mean = ad::matmul(at, ad::solve_lower(s.lk, mi));
    Var ab = ad::matmul(at, ad::solve_lower(s.lk, q.chol[i]));
    Var cov = prior_part + ad::matmul(ab, ad::transpose(ab));
    out.push_back({mean, cov});
  }
  return out;
}

}  // namespace

std::vector<Predictive> predictive(const VariationalVars& q, const InducingSet& z,
                                   const Matrix& xstar, kernels::KernelKind kind,
                                   const kernels::KernelVars& kernel, double jitter) {
  check_q(q, z);
  if (xstar.cols() != z.dims()) throw DimensionMismatch("predictive: query dimension differs");
  const SharedTerms s = shared_terms(z, xstar, kind, kernel, jitter);
  return predictive_with(s, q, xstar, kind, kernel);
}

Var kl_to_prior(const VariationalVars& q, const InducingSet& z, kernels::KernelKind kind,
                const kernels::KernelVars& kernel, double jitter) {
  check_q(q, z);
  Var kmm = kernels::kernel_matrix(z.locations, z.locations, kind, kernel);
  Var lk = ad::cholesky(kmm, jitter);
  const double m = static_cast<double>(z.size());
  Var logdet_k = 2.0 * ad::sum(ad::log(ad::diagonal(lk)));
  Var total;
  for (std::size_t i = 0; i < q.chol.size(); ++i) {
    Var trace = ad::sum_squares(ad::solve_lower(lk, q.chol[i]));
    Var maha = ad::sum_squares(ad::solve_lower(lk, ad::col(q.mean, static_cast<Index>(i))));
    Var logdet_c = 2.0 * ad::sum(ad::log(ad::diagonal(q.chol[i])));
    Var kl = 0.5 * (trace + maha + logdet_k - logdet_c - m);
    total = total.valid() ? total + kl : kl;
  }
  return total;
}

std::vector<Var> sample_forces(const VariationalVars& q, const InducingSet& z,
                               const Matrix& xstar, kernels::KernelKind kind,
                               const kernels::KernelVars& kernel, const std::vector<Matrix>& eps,
                               double jitter) {
  if (eps.size() != q.chol.size()) throw DimensionMismatch("sample_forces: one eps block per force");
  const std::vector<Predictive> pred = predictive(q, z, xstar, kind, kernel, jitter);
  std::vector<Var> out;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (eps[i].rows() != xstar.rows()) throw DimensionMismatch("sample_forces: eps rows != N*");
    Var ls = ad::cholesky(pred[i].cov, jitter);
    out.push_back(ad::add_col(ad::matmul(ls, pred[i].mean.tape().constant(eps[i])), pred[i].mean));
  }
  return out;
}

Var gaussian_loglik(const Matrix& y, const Var& yhat, const Var& noise_var) {
  if (y.rows() != yhat.rows() || y.cols() != yhat.cols() || noise_var.rows() != y.rows() ||
      noise_var.cols() != 1) {
    throw DimensionMismatch("gaussian_loglik: shape mismatch");
  }
  const Vector var = noise_var.value().col(0);
  if (!(var.array() > 0.0).all()) throw DomainError("gaussian_loglik: variance must be positive");
  const double k = static_cast<double>(y.cols());
  const Matrix resid = y - yhat.value();
  const Vector rss = resid.rowwise().squaredNorm();
  double value = 0.0;
  for (Index p = 0; p < y.rows(); ++p) {
    value += -0.5 * k * std::log(2.0 * std::numbers::pi * var(p)) - rss(p) / (2.0 * var(p));
  }
  return yhat.tape().record(Matrix::Constant(1, 1, value), {yhat, noise_var},
                            [resid, rss, k, yhat, noise_var](ad::Tape& t, int self) {
                              const double g = t.grad_buffer(self)(0, 0);
                              const Vector var = t.value(noise_var.id()).col(0);
                              if (yhat.requires_grad()) {
                                t.grad_buffer(yhat.id()) +=
                                    g * (var.array().inverse().matrix().asDiagonal() * resid);
                              }
                              if (noise_var.requires_grad()) {
                                Matrix& vg = t.grad_buffer(noise_var.id());
                                for (Index p = 0; p < var.size(); ++p) {
                                  vg(p, 0) += g * (-0.5 * k / var(p) +
                                                   rss(p) / (2.0 * var(p) * var(p)));
                                }
                              }
                            });
}

double gaussian_loglik(const Matrix& y, const Matrix& yhat, const Vector& noise_var) {
  ad::Tape tape;
  return gaussian_loglik(y, tape.constant(yhat), tape.constant(Matrix(noise_var))).scalar();
}

namespace {

struct PlainBinding {
  VariationalVars q;
  kernels::KernelVars k;
};

PlainBinding bind_plain(ad::Tape& tape, const VariationalDist& q, const kernels::KernelParams& kp) {
  PlainBinding b;
  b.q.mean = tape.constant(q.mean);
  for (const Matrix& c : q.chol) b.q.chol.push_back(tape.constant(c));
  b.k.lengthscales = tape.constant(Matrix(kp.lengthscales));
  b.k.variance = tape.constant(kp.variance);
  b.k.period = tape.constant(kp.period);
  return b;
}

}  // namespace

std::vector<PredictiveValue> predictive(const VariationalDist& q, const InducingSet& z,
                                        const Matrix& xstar, kernels::KernelKind kind,
                                        const kernels::KernelParams& kernel, double jitter) {
  ad::Tape tape;
  const PlainBinding b = bind_plain(tape, q, kernel);
  std::vector<PredictiveValue> out;
  for (const Predictive& p : predictive(b.q, z, xstar, kind, b.k, jitter)) {
    out.push_back({p.mean.value(), p.cov.value()});
  }
  return out;
}

double kl_to_prior(const VariationalDist& q, const InducingSet& z, kernels::KernelKind kind,
                   const kernels::KernelParams& kernel, double jitter) {
  ad::Tape tape;
  const PlainBinding b = bind_plain(tape, q, kernel);
  return kl_to_prior(b.q, z, kind, b.k, jitter).scalar();
}

std::vector<Matrix> sample_forces(const VariationalDist& q, const InducingSet& z,
                                  const Matrix& xstar, kernels::KernelKind kind,
                                  const kernels::KernelParams& kernel,
                                  const std::vector<Matrix>& eps, double jitter) {
  ad::Tape tape;
  const PlainBinding b = bind_plain(tape, q, kernel);
  std::vector<Matrix> out;
  for (const Var& f : sample_forces(b.q, z, xstar, kind, b.k, eps, jitter)) out.push_back(f.value());
  return out;
}

VariationalGp::VariationalGp(kernels::KernelKind kind, InducingSet inducing, Index num_forces,
                             const kernels::KernelParams& init, double jitter)
    : kind_(kind),
      inducing_(std::move(inducing)),
      num_forces_(num_forces),
      init_(init),
      jitter_(jitter) {
  if (inducing_.size() < 2) throw std::invalid_argument("VariationalGp: need at least 2 inducing points");
  if (num_forces_ < 1) throw std::invalid_argument("VariationalGp: need at least one force");
  const Index want = kind_ == kernels::KernelKind::periodic ? 1 : inducing_.dims();
  if (init_.lengthscales.size() != want) {
    throw DimensionMismatch("VariationalGp: lengthscale count does not match input dimension");
  }
}

void VariationalGp::register_params(ParamSet& params) {
  const Index m = inducing_.size();
  mean_idx_ = params.add("q_mean", Matrix::Zero(m, num_forces_));
  chol_idx_.clear();
  Matrix raw = Matrix::Zero(m, m);
  raw.diagonal().setConstant(inverse_softplus(0.1));
  for (Index i = 0; i < num_forces_; ++i) {
    chol_idx_.push_back(params.add("q_chol_" + std::to_string(i), raw));
  }
  lengthscale_idx_ = params.add("kernel_lengthscale", init_.lengthscales.unaryExpr(
                                                          [](double v) { return inverse_softplus(v); }));
  variance_idx_ = params.add("kernel_variance", Matrix::Constant(1, 1, inverse_softplus(init_.variance)));
  if (kind_ == kernels::KernelKind::periodic) {
    period_idx_ = params.add("kernel_period", Matrix::Constant(1, 1, inverse_softplus(init_.period)));
  }
}

VariationalGp::Bound VariationalGp::bind(const std::vector<Var>& leaves) const {
  Bound b;
  b.q.mean = leaves.at(static_cast<std::size_t>(mean_idx_));
  for (int idx : chol_idx_) b.q.chol.push_back(ad::tril_softplus_diag(leaves.at(static_cast<std::size_t>(idx))));
  b.kernel.lengthscales = ad::softplus(leaves.at(static_cast<std::size_t>(lengthscale_idx_)));
  b.kernel.variance = ad::softplus(leaves.at(static_cast<std::size_t>(variance_idx_)));
  if (period_idx_ >= 0) b.kernel.period = ad::softplus(leaves.at(static_cast<std::size_t>(period_idx_)));
  return b;
}

VariationalDist VariationalGp::variational(const ParamSet& params) const {
  VariationalDist q;
  q.mean = params[mean_idx_].value;
  for (int idx : chol_idx_) {
    const Matrix& raw = params[idx].value;
    Matrix l = raw.triangularView<Eigen::StrictlyLower>();
    for (Index i = 0; i < l.rows(); ++i) l(i, i) = softplus(raw(i, i));
    q.chol.push_back(std::move(l));
  }
  return q;
}

kernels::KernelParams VariationalGp::kernel_params(const ParamSet& params) const {
  kernels::KernelParams k;
  k.lengthscales = params[lengthscale_idx_].value.col(0).unaryExpr([](double v) { return softplus(v); });
  k.variance = softplus(params[variance_idx_].value(0, 0));
  k.period = period_idx_ >= 0 ? softplus(params[period_idx_].value(0, 0)) : 1.0;
  return k;
}

}  // namespace lft::svgp
