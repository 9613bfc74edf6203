#include "lft/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "lft/errors.hpp"

namespace lft::kernels {

namespace {

constexpr double kPi = std::numbers::pi;

void require_dims(Index x_dims, Index xp_dims, Index lengthscales, KernelKind kind) {
  if (x_dims != xp_dims) throw DimensionMismatch("kernel: input dimensions differ");
  if (kind == KernelKind::periodic) {
    if (x_dims != 1 || lengthscales != 1) {
      throw DimensionMismatch("periodic kernel: inputs must be one-dimensional");
    }
  } else if (x_dims != lengthscales) {
    throw DimensionMismatch("rbf kernel: lengthscale count " + std::to_string(lengthscales) +
                            " differs from input dimension " + std::to_string(x_dims));
  }
}

void require_positive(const KernelParams& p, KernelKind kind) {
  if (!(p.variance > 0.0) || !(p.lengthscales.array() > 0.0).all() ||
      (kind == KernelKind::periodic && !(p.period > 0.0))) {
    throw DomainError("kernel: hyperparameters must be strictly positive");
  }
}

// Gram matrix and the pieces the backward rule reuses.
Matrix gram(const Matrix& x, const Matrix& xp, KernelKind kind, const Vector& ls, double variance,
            double period) {
  const Index n = x.rows();
  const Index m = xp.rows();
  Matrix k(n, m);
  if (kind == KernelKind::rbf) {
    const Vector inv_ls2 = ls.array().square().inverse();
    for (Index j = 0; j < m; ++j) {
      for (Index i = 0; i < n; ++i) {
        double q = 0.0;
        for (Index d = 0; d < x.cols(); ++d) {
          const double r = x(i, d) - xp(j, d);
          q += r * r * inv_ls2(d);
        }
        k(i, j) = variance * std::exp(-0.5 * q);
      }
    }
  } else {
    const double inv_ls2 = 1.0 / (ls(0) * ls(0));
    for (Index j = 0; j < m; ++j) {
      for (Index i = 0; i < n; ++i) {
        const double s = std::sin(kPi * std::abs(x(i, 0) - xp(j, 0)) / period);
        k(i, j) = variance * std::exp(-2.0 * s * s * inv_ls2);
      }
    }
  }
  return k;
}

}  // namespace

KernelKind parse_kernel_kind(const std::string& name) {
  if (name == "rbf") return KernelKind::rbf;
  if (name == "periodic") return KernelKind::periodic;
  throw ConfigError("unknown kernel '" + name + "' (expected rbf or periodic)");
}

std::string to_string(KernelKind kind) { return kind == KernelKind::rbf ? "rbf" : "periodic"; }

double rbf(std::span<const double> x, std::span<const double> xp, const KernelParams& params) {
  require_dims(static_cast<Index>(x.size()), static_cast<Index>(xp.size()),
               params.lengthscales.size(), KernelKind::rbf);
  require_positive(params, KernelKind::rbf);
  double q = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double r = (x[d] - xp[d]) / params.lengthscales(static_cast<Index>(d));
    q += r * r;
  }
  return params.variance * std::exp(-0.5 * q);
}

double periodic(double t, double tp, const KernelParams& params) {
  require_dims(1, 1, params.lengthscales.size(), KernelKind::periodic);
  require_positive(params, KernelKind::periodic);
  const double s = std::sin(kPi * std::abs(t - tp) / params.period);
  const double l = params.lengthscales(0);
  return params.variance * std::exp(-2.0 * s * s / (l * l));
}

Matrix kernel_matrix(const Matrix& x, const Matrix& xp, KernelKind kind,
                     const KernelParams& params) {
  require_dims(x.cols(), xp.cols(), params.lengthscales.size(), kind);
  require_positive(params, kind);
  return gram(x, xp, kind, params.lengthscales, params.variance, params.period);
}

KernelParams initial_params(KernelKind kind, const Matrix& x) {
  KernelParams p;
  p.lengthscales = Vector::Ones(x.cols());
  for (Index d = 0; d < x.cols(); ++d) {
    std::vector<double> values(x.col(d).data(), x.col(d).data() + x.rows());
    std::sort(values.begin(), values.end());
    double smallest = 0.0;
    for (std::size_t i = 1; i < values.size(); ++i) {
      const double gap = values[i] - values[i - 1];
      if (gap > 1e-12 && (smallest == 0.0 || gap < smallest)) smallest = gap;
    }
    if (smallest > 0.0) p.lengthscales(d) = smallest;
  }
  p.variance = 1.0;
  const double span = x.rows() > 0 ? x.col(0).maxCoeff() - x.col(0).minCoeff() : 0.0;
  p.period = span > 0.0 ? 0.5 * span : 1.0;
  if (kind == KernelKind::periodic) p.lengthscales.conservativeResize(1);
  return p;
}

ad::Var kernel_matrix(const Matrix& x, const Matrix& xp, KernelKind kind,
                      const KernelVars& params) {
  const Vector ls = params.lengthscales.value().col(0);
  const double variance = params.variance.scalar();
  const double period = kind == KernelKind::periodic ? params.period.scalar() : 1.0;
  require_dims(x.cols(), xp.cols(), ls.size(), kind);
  if (!(variance > 0.0) || !(ls.array() > 0.0).all() || !(period > 0.0)) {
    throw DomainError("kernel: hyperparameters must be strictly positive");
  }
  Matrix k = gram(x, xp, kind, ls, variance, period);
  std::vector<ad::Var> inputs{params.lengthscales, params.variance};
  if (kind == KernelKind::periodic) inputs.push_back(params.period);
  ad::Tape& tape = params.variance.tape();
  return tape.record(std::move(k), inputs, [x, xp, kind, params](ad::Tape& t, int self) {
    const Matrix& g = t.grad_buffer(self);
    const Matrix& kv = t.value(self);
    const Matrix gk = g.cwiseProduct(kv);
    const double variance = t.value(params.variance.id())(0, 0);
    const Vector ls = t.value(params.lengthscales.id()).col(0);
    if (params.variance.requires_grad()) {
      t.grad_buffer(params.variance.id())(0, 0) += gk.sum() / variance;
    }
    if (kind == KernelKind::rbf) {
      if (!params.lengthscales.requires_grad()) return;
      Matrix& lg = t.grad_buffer(params.lengthscales.id());
      for (Index d = 0; d < x.cols(); ++d) {
        double acc = 0.0;
        for (Index j = 0; j < xp.rows(); ++j) {
          for (Index i = 0; i < x.rows(); ++i) {
            const double r = x(i, d) - xp(j, d);
            acc += gk(i, j) * r * r;
          }
        }
        lg(d, 0) += acc / (ls(d) * ls(d) * ls(d));
      }
      return;
    }
    const double l = ls(0);
    const double p = t.value(params.period.id())(0, 0);
    double acc_l = 0.0;
    double acc_p = 0.0;
    for (Index j = 0; j < xp.rows(); ++j) {
      for (Index i = 0; i < x.rows(); ++i) {
        const double r = std::abs(x(i, 0) - xp(j, 0));
        const double arg = kPi * r / p;
        const double s = std::sin(arg);
        acc_l += gk(i, j) * s * s;
        acc_p += gk(i, j) * r * std::sin(2.0 * arg);
      }
    }
    if (params.lengthscales.requires_grad()) {
      t.grad_buffer(params.lengthscales.id())(0, 0) += 4.0 * acc_l / (l * l * l);
    }
    if (params.period.requires_grad()) {
      t.grad_buffer(params.period.id())(0, 0) += 2.0 * kPi * acc_p / (l * l * p * p);
    }
  });
}

}  // namespace lft::kernels
