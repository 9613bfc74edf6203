#pragma once

// Reverse-mode gradient recording over dense matrices.
//
// Every recorded node holds a matrix value; a scalar is a 1x1 matrix. A node
// that depends on at least one gradient-tracking leaf stores a backward rule
// which, given the node's accumulated gradient, adds its contribution to the
// gradients of its inputs. A tape belongs to one thread.

#include <cstddef>
#include <functional>
#include <vector>

#include "lft/numcore/linalg.hpp"

namespace lft::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape has not
/// been rewound past it.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  double scalar() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  bool requires_grad() const;

  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr && id_ >= 0; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf whose gradient is tracked.
  Var variable(Matrix value);
  Var variable(double value) { return variable(Matrix::Constant(1, 1, value)); }
  /// Leaf treated as a constant.
  Var constant(Matrix value);
  Var constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

  /// Records an operation result. The backward rule is kept only when one of
  /// `inputs` tracks gradients.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Matrix value, const std::vector<Var>& inputs, Backward backward);

  /// Propagates d(output)/d(node) to every node. `output` must be 1x1.
  void backward(const Var& output);

  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  /// Gradient accumulated at `v`; zeros when nothing reached it.
  Matrix grad(const Var& v) const;

  /// Gradient buffer of node `id` for use inside backward rules (allocated
  /// lazily as zeros).
  Matrix& grad_buffer(int id);
  /// Gradient of node `id` if one has been accumulated, else nullptr.
  const Matrix* grad_if_any(int id) const;

  std::size_t size() const { return nodes_.size(); }
  /// Drops every node recorded after `mark` (a previous `size()`).
  void rewind(std::size_t mark);
  void clear() { nodes_.clear(); }
  void zero_grad();

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

}  // namespace lft::ad
