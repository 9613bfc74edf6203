#include "lft/numcore/params.hpp"

#include <cmath>

#include "lft/errors.hpp"

namespace lft {

int ParamSet::add(std::string name, Matrix value) {
  if (contains(name)) throw std::invalid_argument("ParamSet: duplicate parameter " + name);
  Matrix mask = Matrix::Ones(value.rows(), value.cols());
  params_.push_back(Parameter{std::move(name), std::move(value), std::move(mask)});
  return static_cast<int>(params_.size() - 1);
}

int ParamSet::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return static_cast<int>(i);
  }
  throw std::out_of_range("ParamSet: unknown parameter " + std::string(name));
}

bool ParamSet::contains(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return true;
  }
  return false;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParamSet::freeze(std::string_view name, Index row, Index col) {
  (*this)[name].mask(row, col) = 0.0;
}

std::vector<ad::Var> ParamSet::bind(ad::Tape& tape) const {
  std::vector<ad::Var> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(tape.variable(p.value));
  return out;
}

std::vector<Matrix> ParamSet::gradients(const ad::Tape& tape,
                                        const std::vector<ad::Var>& bound) const {
  std::vector<Matrix> out;
  out.reserve(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.push_back(tape.grad(bound[i]).cwiseProduct(params_[i].mask));
  }
  return out;
}

std::vector<double> ParamSet::flatten() const {
  std::vector<double> flat;
  flat.reserve(scalar_count());
  for (const auto& p : params_) {
    // row-major within each block
    for (Index r = 0; r < p.value.rows(); ++r) {
      for (Index c = 0; c < p.value.cols(); ++c) flat.push_back(p.value(r, c));
    }
  }
  return flat;
}

std::vector<double> ParamSet::flatten(const std::vector<Matrix>& blocks) {
  std::vector<double> flat;
  for (const auto& b : blocks) {
    for (Index r = 0; r < b.rows(); ++r) {
      for (Index c = 0; c < b.cols(); ++c) flat.push_back(b(r, c));
    }
  }
  return flat;
}

void ParamSet::assign(std::span<const double> flat) {
  if (flat.size() != scalar_count()) throw LengthMismatch("ParamSet::assign: length mismatch");
  std::size_t k = 0;
  for (auto& p : params_) {
    for (Index r = 0; r < p.value.rows(); ++r) {
      for (Index c = 0; c < p.value.cols(); ++c) p.value(r, c) = flat[k++];
    }
  }
}

Adam::Adam(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

void Adam::step(ParamSet& params, const std::vector<Matrix>& grads, bool ascend) {
  if (grads.size() != static_cast<std::size_t>(params.size())) {
    throw LengthMismatch("Adam::step: gradient count differs from parameter count");
  }
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const double sign = ascend ? 1.0 : -1.0;
  for (int i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    const Matrix& g = grads[static_cast<std::size_t>(i)];
    Matrix& m = m_[static_cast<std::size_t>(i)];
    Matrix& v = v_[static_cast<std::size_t>(i)];
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseAbs2();
    for (Index r = 0; r < p.value.rows(); ++r) {
      for (Index c = 0; c < p.value.cols(); ++c) {
        if (p.mask(r, c) == 0.0) continue;
        const double mhat = m(r, c) / bc1;
        const double vhat = v(r, c) / bc2;
        p.value(r, c) += sign * lr_ * mhat / (std::sqrt(vhat) + epsilon_);
      }
    }
  }
}

}  // namespace lft
