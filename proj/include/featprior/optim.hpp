#pragma once

#include <span>
#include <string>
#include <vector>

#include "featprior/linalg.hpp"

namespace featprior {

enum class OptimizerKind { Sgd, Adam };

OptimizerKind parse_optimizer(const std::string& name);

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double momentum = 0.0;  // SGD only
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Per-block optimizer state. `trainable` masks blocks the step may touch;
// masked-out blocks are not read or written.
class Optimizer {
 public:
  explicit Optimizer(OptimizerSettings settings) : settings_(settings) {}

  // Throws NonFiniteGradient before modifying anything.
  void step(std::span<Matrix* const> params, std::span<const Matrix> grads, std::span<const bool> trainable = {});

  const OptimizerSettings& settings() const noexcept { return settings_; }
  long steps_taken() const noexcept { return t_; }

 private:
  OptimizerSettings settings_;
  std::vector<Matrix> first_;   // momentum buffer (SGD) or first moment (Adam)
  std::vector<Matrix> second_;  // Adam only
  long t_ = 0;
};

}  // namespace featprior
