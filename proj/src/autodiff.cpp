#include "featprior/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "featprior/error.hpp"

namespace featprior {

Var Tape::constant(Matrix value) { return push(std::move(value), {}, nullptr); }

Var Tape::parameter(Matrix value) {
  Var v = push(std::move(value), {}, nullptr);
  params_.push_back(v);
  return v;
}

Var Tape::push(Matrix value, std::vector<Var> parents, BackwardFn backward) {
  Node node;
  node.grad = Matrix(value.rows(), value.cols());
  node.value = std::move(value);
  node.parents = std::move(parents);
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

void Tape::backward(Var loss) {
  const Matrix& lv = nodes_.at(loss.id).value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw Error(ErrorCode::NotScalarLoss,
                "loss node is " + std::to_string(lv.rows()) + "x" + std::to_string(lv.cols()));
  }
  for (auto& n : nodes_) std::fill(n.grad.values().begin(), n.grad.values().end(), 0.0);

  std::vector<char> reachable(nodes_.size(), 0);
  reachable[loss.id] = 1;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    if (!reachable[i]) continue;
    for (Var p : nodes_[i].parents) reachable[p.id] = 1;
  }

  nodes_[loss.id].grad(0, 0) = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    if (reachable[i] && nodes_[i].backward) nodes_[i].backward(*this, i);
  }
}

std::vector<Matrix> Tape::parameter_grads() const {
  std::vector<Matrix> out;
  out.reserve(params_.size());
  for (Var p : params_) out.push_back(nodes_[p.id].grad);
  return out;
}

namespace ops {

Var matmul(Tape& t, Var a, Var b) {
  return t.push(featprior::matmul(t.value(a), t.value(b)), {a, b}, [](Tape& tp, std::size_t self) {
    const auto& ps = tp.parents(self);
    const Matrix& g = tp.grad(Var{self});
    tp.grad_mut(ps[0].id) += matmul_nt(g, tp.value(ps[1]));
    tp.grad_mut(ps[1].id) += matmul_tn(tp.value(ps[0]), g);
  });
}

Var add_row_bias(Tape& t, Var x, Var b) {
  const Matrix& xv = t.value(x);
  const Matrix& bv = t.value(b);
  if (bv.rows() != 1 || bv.cols() != xv.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "bias must be 1 x cols");
  }
  Matrix out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < out.cols(); ++c) row[c] += bv(0, c);
  }
  return t.push(std::move(out), {x, b}, [](Tape& tp, std::size_t self) {
    const auto& ps = tp.parents(self);
    const Matrix& g = tp.grad(Var{self});
    tp.grad_mut(ps[0].id) += g;
    Matrix& gb = tp.grad_mut(ps[1].id);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) gb(0, c) += g(r, c);
  });
}

Var add(Tape& t, Var a, Var b) {
  return t.push(t.value(a) + t.value(b), {a, b}, [](Tape& tp, std::size_t self) {
    const auto& ps = tp.parents(self);
    const Matrix g = tp.grad(Var{self});
    tp.grad_mut(ps[0].id) += g;
    tp.grad_mut(ps[1].id) += g;
  });
}

Var scale(Tape& t, Var a, double s) {
  return t.push(t.value(a) * s, {a}, [s](Tape& tp, std::size_t self) {
    tp.grad_mut(tp.parents(self)[0].id) += tp.grad(Var{self}) * s;
  });
}

Var hadamard(Tape& t, Var a, Var b) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "hadamard operands");
  }
  Matrix out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] *= bv.values()[i];
  return t.push(std::move(out), {a, b}, [](Tape& tp, std::size_t self) {
    const auto& ps = tp.parents(self);
    const Matrix& g = tp.grad(Var{self});
    const Matrix av = tp.value(ps[0]);
    const Matrix bv = tp.value(ps[1]);
    Matrix& ga = tp.grad_mut(ps[0].id);
    for (std::size_t i = 0; i < g.size(); ++i) ga.values()[i] += g.values()[i] * bv.values()[i];
    Matrix& gb = tp.grad_mut(ps[1].id);
    for (std::size_t i = 0; i < g.size(); ++i) gb.values()[i] += g.values()[i] * av.values()[i];
  });
}

Var relu(Tape& t, Var x) {
  Matrix out = t.value(x);
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return t.push(std::move(out), {x}, [](Tape& tp, std::size_t self) {
    const Var in = tp.parents(self)[0];
    const Matrix& g = tp.grad(Var{self});
    const Matrix& xv = tp.value(in);
    Matrix& gx = tp.grad_mut(in.id);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv.values()[i] > 0.0) gx.values()[i] += g.values()[i];
  });
}

Var tanh(Tape& t, Var x) {
  Matrix out = t.value(x);
  for (double& v : out.values()) v = std::tanh(v);
  return t.push(std::move(out), {x}, [](Tape& tp, std::size_t self) {
    const Var in = tp.parents(self)[0];
    const Matrix& g = tp.grad(Var{self});
    const Matrix& y = tp.value(Var{self});
    Matrix& gx = tp.grad_mut(in.id);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double yi = y.values()[i];
      gx.values()[i] += g.values()[i] * (1.0 - yi * yi);
    }
  });
}

Var sum(Tape& t, Var x) {
  double s = 0.0;
  for (double v : t.value(x).values()) s += v;
  return t.push(Matrix(1, 1, s), {x}, [](Tape& tp, std::size_t self) {
    const double g = tp.grad(Var{self})(0, 0);
    for (double& v : tp.grad_mut(tp.parents(self)[0].id).values()) v += g;
  });
}

Var softmax_cross_entropy(Tape& t, Var logits, std::span<const std::size_t> labels) {
  const Matrix& lv = t.value(logits);
  const double loss = featprior::softmax_cross_entropy(lv, labels);
  std::vector<std::size_t> owned(labels.begin(), labels.end());
  return t.push(Matrix(1, 1, loss), {logits}, [owned = std::move(owned)](Tape& tp, std::size_t self) {
    const Var in = tp.parents(self)[0];
    const double g = tp.grad(Var{self})(0, 0);
    Matrix p = softmax_rows(tp.value(in));
    const double inv_n = 1.0 / static_cast<double>(p.rows());
    for (std::size_t r = 0; r < p.rows(); ++r) p(r, owned[r]) -= 1.0;
    tp.grad_mut(in.id) += p * (g * inv_n);
  });
}

}  // namespace ops

Matrix softmax_rows(const Matrix& logits, double temperature) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto in = logits.row(r);
    auto out = p.row(r);
    const double mx = *std::max_element(in.begin(), in.end()) / temperature;
    double z = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      out[c] = std::exp(in[c] / temperature - mx);
      z += out[c];
    }
    for (double& v : out) v /= z;
  }
  return p;
}

double softmax_cross_entropy(const Matrix& logits, std::span<const std::size_t> labels) {
  if (labels.size() != logits.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "label count does not match logit rows");
  }
  if (logits.rows() == 0) throw Error(ErrorCode::InvalidArgument, "empty batch");
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    if (labels[r] >= logits.cols()) {
      throw Error(ErrorCode::LabelOutOfRange,
                  "label " + std::to_string(labels[r]) + " with " + std::to_string(logits.cols()) + " classes");
    }
    auto row = logits.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    total += std::log(z) + mx - row[labels[r]];
  }
  return total / static_cast<double>(logits.rows());
}

}  // namespace featprior
