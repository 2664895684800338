#include "featprior/gp_prior.hpp"

#include <cmath>
#include <string>

#include "featprior/error.hpp"

namespace featprior {

const char* distance_name(Distance d) noexcept {
  switch (d) {
    case Distance::GpKl: return "gp_kl";
    case Distance::Hinton: return "hinton";
    case Distance::L2: return "l2";
  }
  return "unknown";
}

Distance parse_distance(const std::string& name) {
  if (name == "gp_kl") return Distance::GpKl;
  if (name == "hinton") return Distance::Hinton;
  if (name == "l2") return Distance::L2;
  throw Error(ErrorCode::InvalidArgument, "unknown distance '" + name + "'");
}

void PriorConfig::validate() const {
  if (!(alpha > 0.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be > 0");
  if (!(jitter > 0.0)) throw Error(ErrorCode::InvalidArgument, "jitter must be > 0");
  if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be > 0");
}

FeatureMatrix::FeatureMatrix(Matrix values) : values_(std::move(values)) {
  if (values_.rows() == 0 || values_.cols() == 0) {
    throw Error(ErrorCode::InvalidArgument, "feature matrix needs at least one row and one column");
  }
  if (!values_.all_finite()) throw Error(ErrorCode::NonFiniteActivation, "non-finite features");
}

KernelMatrix KernelMatrix::from_base(Matrix base, double jitter) {
  for (std::size_t i = 0; i < base.rows() && i < base.cols(); ++i) base(i, i) += jitter;
  CholeskyFactor f = cholesky(base);
  return KernelMatrix(std::move(base), jitter, std::move(f));
}

KernelMatrix gram_kernel(const FeatureMatrix& phi, const PriorConfig& config) {
  Matrix base = matmul_nt(phi.values(), phi.values());
  if (config.normalize_by_width) base *= 1.0 / static_cast<double>(phi.width());

  double jitter = config.jitter;
  for (int attempt = 0; attempt < 2; ++attempt, jitter *= 10.0) {
    Matrix gram = base;
    for (std::size_t i = 0; i < gram.rows(); ++i) gram(i, i) += jitter;
    try {
      CholeskyFactor f = cholesky(gram);
      return KernelMatrix(std::move(gram), jitter, std::move(f));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NotPositiveDefinite) throw;
    }
  }
  throw Error(ErrorCode::FactorizationFailed,
              "Gram matrix not positive definite with jitter " + std::to_string(config.jitter) + " or x10");
}

double gp_kl(const KernelMatrix& k1, const KernelMatrix& k2) {
  if (k1.size() != k2.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "kernel sizes " + std::to_string(k1.size()) + " and " + std::to_string(k2.size()));
  }
  const double n = static_cast<double>(k1.size());
  return 0.5 * (trace_solve(k2.factor(), k1.gram()) - n + log_det(k2.factor()) - log_det(k1.factor()));
}

Matrix gp_kl_grad(const FeatureMatrix& phi_s, const KernelMatrix& k1, const KernelMatrix& k2,
                  const PriorConfig& config) {
  if (k1.size() != k2.size() || k1.size() != phi_s.batch()) {
    throw Error(ErrorCode::DimensionMismatch, "feature batch and kernel sizes differ");
  }
  const double c = config.normalize_by_width ? 1.0 / static_cast<double>(phi_s.width()) : 1.0;
  Matrix g = solve_spd(k2.factor(), phi_s.values());
  g -= solve_spd(k1.factor(), phi_s.values());
  g *= c;
  return g;
}

double prior_log_density(const FeatureMatrix& phi_s, const FeatureMatrix& phi_t, const PriorConfig& config) {
  config.validate();
  if (phi_s.batch() != phi_t.batch()) {
    throw Error(ErrorCode::BatchMismatch, "student batch " + std::to_string(phi_s.batch()) + " vs teacher batch " +
                                              std::to_string(phi_t.batch()));
  }
  return -config.alpha * gp_kl(gram_kernel(phi_s, config), gram_kernel(phi_t, config));
}

double hinton_soft_target(const Matrix& logits_s, const Matrix& logits_t, double temperature) {
  if (logits_s.rows() != logits_t.rows() || logits_s.cols() != logits_t.cols()) {
    throw Error(ErrorCode::DimensionMismatch,
                "soft targets need matching logits: student " + std::to_string(logits_s.rows()) + "x" +
                    std::to_string(logits_s.cols()) + ", teacher " + std::to_string(logits_t.rows()) + "x" +
                    std::to_string(logits_t.cols()));
  }
  if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be > 0");
  if (logits_s.rows() == 0) throw Error(ErrorCode::InvalidArgument, "empty batch");
  const Matrix p = softmax_rows(logits_t, temperature);
  double total = 0.0;
  for (std::size_t r = 0; r < logits_s.rows(); ++r) {
    auto row = logits_s.row(r);
    double mx = row[0] / temperature;
    for (double v : row) mx = std::max(mx, v / temperature);
    double z = 0.0;
    for (double v : row) z += std::exp(v / temperature - mx);
    const double log_z = std::log(z) + mx;
    for (std::size_t c = 0; c < row.size(); ++c) total -= p(r, c) * (row[c] / temperature - log_z);
  }
  return total / static_cast<double>(logits_s.rows());
}

double l2_feature_distance(const Matrix& phi_s, const Matrix& phi_t) {
  if (phi_s.rows() != phi_t.rows() || phi_s.cols() != phi_t.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "L2 feature distance needs equal shapes");
  }
  if (phi_s.empty()) throw Error(ErrorCode::InvalidArgument, "empty features");
  double s = 0.0;
  for (std::size_t i = 0; i < phi_s.size(); ++i) {
    const double d = phi_s.values()[i] - phi_t.values()[i];
    s += d * d;
  }
  return s / static_cast<double>(phi_s.size());
}

namespace ops {

Var gp_kl_prior(Tape& t, Var phi, const KernelMatrix& teacher, const PriorConfig& config, double weight) {
  FeatureMatrix features(t.value(phi));
  if (features.batch() != teacher.size()) {
    throw Error(ErrorCode::BatchMismatch, "student batch " + std::to_string(features.batch()) +
                                              " vs teacher kernel " + std::to_string(teacher.size()));
  }
  KernelMatrix student = gram_kernel(features, config);
  const double kl = gp_kl(student, teacher);
  Matrix grad = gp_kl_grad(features, student, teacher, config);
  grad *= weight;
  return t.push(Matrix(1, 1, weight * kl), {phi}, [grad = std::move(grad)](Tape& tp, std::size_t self) {
    tp.grad_mut(tp.parents(self)[0].id) += grad * tp.grad(Var{self})(0, 0);
  });
}

Var hinton_soft_target(Tape& t, Var logits_s, const Matrix& logits_t, double temperature, double weight) {
  const double value = featprior::hinton_soft_target(t.value(logits_s), logits_t, temperature);
  // d/ds of H(p, softmax(s/T)) per row is (q − p)/T.
  Matrix grad = softmax_rows(t.value(logits_s), temperature) - softmax_rows(logits_t, temperature);
  grad *= weight / (temperature * static_cast<double>(logits_t.rows()));
  return t.push(Matrix(1, 1, weight * value), {logits_s}, [grad = std::move(grad)](Tape& tp, std::size_t self) {
    tp.grad_mut(tp.parents(self)[0].id) += grad * tp.grad(Var{self})(0, 0);
  });
}

Var l2_feature_distance(Tape& t, Var phi_s, const Matrix& phi_t, double weight) {
  const Matrix& s = t.value(phi_s);
  const double value = featprior::l2_feature_distance(s, phi_t);
  Matrix grad = s - phi_t;
  grad *= 2.0 * weight / static_cast<double>(s.size());
  return t.push(Matrix(1, 1, weight * value), {phi_s}, [grad = std::move(grad)](Tape& tp, std::size_t self) {
    tp.grad_mut(tp.parents(self)[0].id) += grad * tp.grad(Var{self})(0, 0);
  });
}

}  // namespace ops

}  // namespace featprior
