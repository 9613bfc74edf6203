#include "lft/numcore/tape.hpp"

#include <stdexcept>

#include "lft/errors.hpp"

namespace lft::ad {

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw DimensionMismatch("Var::scalar on non-scalar node");
  return v(0, 0);
}

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), true, nullptr});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), false, nullptr});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (in.id() >= 0 && requires_grad(in.id())) needs = true;
  }
  nodes_.push_back(Node{std::move(value), Matrix(), needs, needs ? std::move(backward) : nullptr});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::record(Matrix value, const std::vector<Var>& inputs, Backward backward) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (in.id() >= 0 && requires_grad(in.id())) needs = true;
  }
  nodes_.push_back(Node{std::move(value), Matrix(), needs, needs ? std::move(backward) : nullptr});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

void Tape::backward(const Var& output) {
  if (output.rows() != 1 || output.cols() != 1) {
    throw DimensionMismatch("Tape::backward: output must be a scalar node");
  }
  zero_grad();
  grad_buffer(output.id())(0, 0) = 1.0;
  for (int id = output.id(); id >= 0; --id) {
    Node& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.backward || node.grad.size() == 0) continue;
    node.backward(*this, id);
  }
}

Matrix Tape::grad(const Var& v) const {
  const Node& node = nodes_[static_cast<std::size_t>(v.id())];
  if (node.grad.size() == 0) return Matrix::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

Matrix& Tape::grad_buffer(int id) {
  Node& node = nodes_[static_cast<std::size_t>(id)];
  if (node.grad.size() == 0) node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

const Matrix* Tape::grad_if_any(int id) const {
  const Node& node = nodes_[static_cast<std::size_t>(id)];
  return node.grad.size() == 0 ? nullptr : &node.grad;
}

void Tape::rewind(std::size_t mark) {
  if (mark < nodes_.size()) nodes_.resize(mark);
}

void Tape::zero_grad() {
  for (Node& node : nodes_) node.grad.resize(0, 0);
}

}  // namespace lft::ad
