#include "featprior/optim.hpp"

#include <cmath>

#include "featprior/error.hpp"

namespace featprior {

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "sgd") return OptimizerKind::Sgd;
  throw Error(ErrorCode::InvalidArgument, "unknown optimizer '" + name + "'");
}

void Optimizer::step(std::span<Matrix* const> params, std::span<const Matrix> grads, std::span<const bool> trainable) {
  if (params.size() != grads.size() || (!trainable.empty() && trainable.size() != params.size())) {
    throw Error(ErrorCode::DimensionMismatch, "optimizer block counts differ");
  }
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b]->rows() != grads[b].rows() || params[b]->cols() != grads[b].cols()) {
      throw Error(ErrorCode::DimensionMismatch, "gradient block " + std::to_string(b) + " shape");
    }
    if (!grads[b].all_finite()) {
      throw Error(ErrorCode::NonFiniteGradient, "gradient block " + std::to_string(b));
    }
  }
  if (first_.empty()) {
    for (const Matrix& g : grads) {
      first_.emplace_back(g.rows(), g.cols());
      if (settings_.kind == OptimizerKind::Adam) second_.emplace_back(g.rows(), g.cols());
    }
  } else if (first_.size() != params.size()) {
    throw Error(ErrorCode::DimensionMismatch, "optimizer state built for a different parameter set");
  }

  ++t_;
  const double lr = settings_.learning_rate;
  const double bc1 = 1.0 - std::pow(settings_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(settings_.beta2, static_cast<double>(t_));
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (!trainable.empty() && !trainable[b]) continue;
    auto p = params[b]->values();
    auto g = grads[b].values();
    auto m = first_[b].values();
    if (settings_.kind == OptimizerKind::Sgd) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = settings_.momentum * m[i] + g[i];
        p[i] -= lr * m[i];
      }
    } else {
      auto v = second_[b].values();
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = settings_.beta1 * m[i] + (1.0 - settings_.beta1) * g[i];
        v[i] = settings_.beta2 * v[i] + (1.0 - settings_.beta2) * g[i] * g[i];
        p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + settings_.epsilon);
      }
    }
  }
}

}  // namespace featprior
