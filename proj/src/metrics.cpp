#include "featprior/metrics.hpp"

#include <cmath>

#include "featprior/error.hpp"

namespace featprior {

std::vector<std::pair<std::string, double>> MetricsReport::named() const {
  std::vector<std::pair<std::string, double>> out{{"accuracy", accuracy}};
  for (auto [k, v] : top_k) out.emplace_back("top" + std::to_string(k), v);
  out.emplace_back("f1_micro", f1_micro);
  out.emplace_back("f1_macro", f1_macro);
  return out;
}

MetricsReport metrics_from_logits(const Matrix& logits, std::span<const std::size_t> labels, std::size_t class_count,
                                  std::span<const std::size_t> ks) {
  if (logits.rows() != labels.size()) throw Error(ErrorCode::DimensionMismatch, "logit rows vs labels");
  if (logits.cols() != class_count) throw Error(ErrorCode::DimensionMismatch, "logit width vs class count");
  const std::size_t n = labels.size();
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "cannot evaluate an empty dataset");

  std::vector<std::size_t> tp(class_count, 0), fp(class_count, 0), fn(class_count, 0);
  std::map<std::size_t, std::size_t> hits;
  for (std::size_t k : ks) {
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "top-k needs k >= 1");
    hits[k] = 0;
  }
  std::size_t correct = 0;
  for (std::size_t r = 0; r < n; ++r) {
    auto row = logits.row(r);
    const std::size_t y = labels[r];
    if (y >= class_count) throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(y));
    std::size_t pred = 0;
    for (std::size_t c = 1; c < class_count; ++c)
      if (row[c] > row[pred]) pred = c;
    std::size_t rank = 0;
    for (std::size_t c = 0; c < class_count; ++c)
      if (row[c] > row[y] || (row[c] == row[y] && c < y)) ++rank;
    for (auto& [k, h] : hits)
      if (rank < k) ++h;
    if (pred == y) {
      ++correct;
      ++tp[y];
    } else {
      ++fp[pred];
      ++fn[y];
    }
  }

  auto f1 = [](double t, double f_pos, double f_neg) {
    const double p = t + f_pos > 0 ? t / (t + f_pos) : 0.0;
    const double r = t + f_neg > 0 ? t / (t + f_neg) : 0.0;
    return p + r > 0 ? 2.0 * p * r / (p + r) : 0.0;
  };

  MetricsReport m;
  const double dn = static_cast<double>(n);
  m.accuracy = static_cast<double>(correct) / dn;
  for (auto [k, h] : hits) m.top_k[k] = static_cast<double>(h) / dn;
  double macro = 0.0;
  double stp = 0, sfp = 0, sfn = 0;
  for (std::size_t c = 0; c < class_count; ++c) {
    macro += f1(static_cast<double>(tp[c]), static_cast<double>(fp[c]), static_cast<double>(fn[c]));
    stp += static_cast<double>(tp[c]);
    sfp += static_cast<double>(fp[c]);
    sfn += static_cast<double>(fn[c]);
  }
  m.f1_macro = macro / static_cast<double>(class_count);
  m.f1_micro = f1(stp, sfp, sfn);
  return m;
}

MetricsReport evaluate(const Model& model, const Dataset& dataset, std::span<const std::size_t> ks) {
  if (dataset.class_count != model.spec().classes) {
    throw Error(ErrorCode::DimensionMismatch, "dataset has " + std::to_string(dataset.class_count) +
                                                  " classes, model head has " + std::to_string(model.spec().classes));
  }
  return metrics_from_logits(forward(model, dataset.inputs).logits, dataset.labels, dataset.class_count, ks);
}

SeedAggregate aggregate(std::span<const double> per_seed) {
  SeedAggregate a;
  a.n = per_seed.size();
  if (a.n == 0) return a;
  for (double v : per_seed) a.mean += v;
  a.mean /= static_cast<double>(a.n);
  if (a.n > 1) {
    double ss = 0.0;
    for (double v : per_seed) ss += (v - a.mean) * (v - a.mean);
    a.std_error = std::sqrt(ss / static_cast<double>(a.n - 1)) / std::sqrt(static_cast<double>(a.n));
  }
  return a;
}

}  // namespace featprior
