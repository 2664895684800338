#pragma once

// Minimal reverse-mode autodiff over dense matrices.
//
// Nodes are appended in evaluation order, so every node's parents precede it
// and a single reverse sweep over the node list is a valid reverse
// topological order. A Tape is single-owner; do not share it across threads.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "featprior/linalg.hpp"

namespace featprior {

struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
  bool valid() const noexcept { return id != static_cast<std::size_t>(-1); }
};

class Tape {
 public:
  // Propagates the node's gradient into its parents' gradients.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Var constant(Matrix value);
  // Parameters are leaves whose gradients are collected by parameter_grads().
  Var parameter(Matrix value);
  Var push(Matrix value, std::vector<Var> parents, BackwardFn backward);

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
  const Matrix& grad(Var v) const { return nodes_.at(v.id).grad; }
  // Accumulates into a node's gradient; used by backward functions.
  Matrix& grad_mut(std::size_t id) { return nodes_[id].grad; }
  const Matrix& value_at(std::size_t id) const { return nodes_[id].value; }
  const std::vector<Var>& parents(std::size_t id) const { return nodes_[id].parents; }

  // Reverse sweep from a 1x1 node. Throws NotScalarLoss otherwise.
  void backward(Var loss);

  std::span<const Var> parameters() const noexcept { return params_; }
  // Gradients of the registered parameters in registration order; parameters
  // the loss does not reach get zeros.
  std::vector<Matrix> parameter_grads() const;

  std::size_t node_count() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<Var> parents;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::vector<Var> params_;
};

namespace ops {

Var matmul(Tape& t, Var a, Var b);
// x (n×m) plus row vector b (1×m) broadcast over rows.
Var add_row_bias(Tape& t, Var x, Var b);
Var add(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
Var hadamard(Tape& t, Var a, Var b);
Var relu(Tape& t, Var x);
Var tanh(Tape& t, Var x);
Var sum(Tape& t, Var x);

// Mean over rows of -log softmax(logits)[label], max-subtracted.
Var softmax_cross_entropy(Tape& t, Var logits, std::span<const std::size_t> labels);

}  // namespace ops

// Value-only version of ops::softmax_cross_entropy.
double softmax_cross_entropy(const Matrix& logits, std::span<const std::size_t> labels);

// Row-wise softmax of logits / temperature.
Matrix softmax_rows(const Matrix& logits, double temperature = 1.0);

}  // namespace featprior
