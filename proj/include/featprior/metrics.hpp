#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "featprior/data.hpp"
#include "featprior/linalg.hpp"
#include "featprior/network.hpp"

namespace featprior {

struct MetricsReport {
  double accuracy = 0.0;
  std::map<std::size_t, double> top_k;  // k -> accuracy
  double f1_micro = 0.0;
  double f1_macro = 0.0;

  // accuracy, top<k>..., f1_micro, f1_macro in that order.
  std::vector<std::pair<std::string, double>> named() const;
};

// Metrics from raw logits. Ties rank the lower class index first. Classes
// with no true or predicted examples count as F1 = 0 in the macro average.
MetricsReport metrics_from_logits(const Matrix& logits, std::span<const std::size_t> labels, std::size_t class_count,
                                  std::span<const std::size_t> ks);

MetricsReport evaluate(const Model& model, const Dataset& dataset, std::span<const std::size_t> ks = {});

struct SeedAggregate {
  double mean = 0.0;
  double std_error = 0.0;  // sample standard deviation / sqrt(n)
  std::size_t n = 0;
};

SeedAggregate aggregate(std::span<const double> per_seed);

}  // namespace featprior
