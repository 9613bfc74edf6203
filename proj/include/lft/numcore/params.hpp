#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lft/numcore/tape.hpp"

namespace lft {

/// A named block of unconstrained trainable values. Entries whose mask is
/// zero are frozen: they never receive optimizer updates.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix mask;
};

/// Ordered collection of parameters; the declaration order defines the
/// flattened layout used by checkpoints and gradient checks.
class ParamSet {
 public:
  int add(std::string name, Matrix value);
  int index_of(std::string_view name) const;
  bool contains(std::string_view name) const;

  Parameter& operator[](int i) { return params_.at(static_cast<std::size_t>(i)); }
  const Parameter& operator[](int i) const { return params_.at(static_cast<std::size_t>(i)); }
  Parameter& operator[](std::string_view name) { return (*this)[index_of(name)]; }
  const Parameter& operator[](std::string_view name) const { return (*this)[index_of(name)]; }

  int size() const { return static_cast<int>(params_.size()); }
  std::size_t scalar_count() const;

  void freeze(std::string_view name, Index row, Index col);

  /// Creates one gradient-tracking leaf per parameter.
  std::vector<ad::Var> bind(ad::Tape& tape) const;
  /// Gradients of the bound leaves with frozen entries zeroed.
  std::vector<Matrix> gradients(const ad::Tape& tape, const std::vector<ad::Var>& bound) const;

  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);
  static std::vector<double> flatten(const std::vector<Matrix>& blocks);

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Parameter> params_;
};

/// Adaptive-moment optimizer over a ParamSet.
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8);

  /// One update; `ascend` selects gradient ascent (maximisation).
  void step(ParamSet& params, const std::vector<Matrix>& grads, bool ascend);

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  long steps() const { return t_; }

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double epsilon_;
  long t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

}  // namespace lft
