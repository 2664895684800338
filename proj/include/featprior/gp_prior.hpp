#pragma once

// Gaussian-process feature priors.
//
// A batch of features Φ (n × p) induces the zero-mean GP with dot-product
// kernel K = ΦΦᵀ/p + εI over the batch inputs. Student and teacher are
// compared through the KL divergence between their induced GPs, so their
// feature widths never need to agree; only the batch rows must.

#include <string>

#include "featprior/autodiff.hpp"
#include "featprior/linalg.hpp"

namespace featprior {

enum class Distance { GpKl, Hinton, L2 };

const char* distance_name(Distance d) noexcept;
Distance parse_distance(const std::string& name);

struct PriorConfig {
  double alpha = 1.0;
  double jitter = 1e-4;
  bool normalize_by_width = true;
  double temperature = 4.0;
  Distance distance = Distance::GpKl;

  // alpha > 0, jitter > 0, temperature > 0.
  void validate() const;
};

class FeatureMatrix {
 public:
  explicit FeatureMatrix(Matrix values);

  const Matrix& values() const noexcept { return values_; }
  std::size_t batch() const noexcept { return values_.rows(); }
  std::size_t width() const noexcept { return values_.cols(); }

 private:
  Matrix values_;
};

// Jittered Gram matrix with its Cholesky factor cached at construction.
class KernelMatrix {
 public:
  // Factors `base + jitter·I` as given, no escalation.
  static KernelMatrix from_base(Matrix base, double jitter = 0.0);

  const Matrix& gram() const noexcept { return gram_; }
  double jitter() const noexcept { return jitter_; }
  const CholeskyFactor& factor() const noexcept { return factor_; }
  std::size_t size() const noexcept { return gram_.rows(); }

 private:
  KernelMatrix(Matrix gram, double jitter, CholeskyFactor factor)
      : gram_(std::move(gram)), jitter_(jitter), factor_(std::move(factor)) {}
  friend KernelMatrix gram_kernel(const FeatureMatrix&, const PriorConfig&);

  Matrix gram_;
  double jitter_;
  CholeskyFactor factor_;
};

// ΦΦᵀ/p + εI (or ΦΦᵀ + εI without width normalisation). If factoring fails the
// jitter is raised ×10 once; a second failure is FactorizationFailed.
KernelMatrix gram_kernel(const FeatureMatrix& phi, const PriorConfig& config);

// KL(GP(0,K1) ‖ GP(0,K2)) = ½(tr(K2⁻¹K1) − n + log|K2| − log|K1|).
double gp_kl(const KernelMatrix& k1, const KernelMatrix& k2);

// ∂ gp_kl / ∂Φ_s where k1 = gram_kernel(phi_s): c·(K2⁻¹ − K1⁻¹)·Φ_s with
// c = 1/p under width normalisation, else 1.
Matrix gp_kl_grad(const FeatureMatrix& phi_s, const KernelMatrix& k1, const KernelMatrix& k2,
                  const PriorConfig& config);

// −α·KL(student GP ‖ teacher GP), additive constant dropped.
double prior_log_density(const FeatureMatrix& phi_s, const FeatureMatrix& phi_t, const PriorConfig& config);

// Mean over rows of H(softmax(t/T), softmax(s/T)). Needs equal logit counts.
double hinton_soft_target(const Matrix& logits_s, const Matrix& logits_t, double temperature);

// Mean squared entrywise difference.
double l2_feature_distance(const Matrix& phi_s, const Matrix& phi_t);

namespace ops {

// weight·gp_kl(gram_kernel(phi), teacher). Backward uses gp_kl_grad rather
// than differentiating through the factorisation.
Var gp_kl_prior(Tape& t, Var phi, const KernelMatrix& teacher, const PriorConfig& config, double weight);

Var hinton_soft_target(Tape& t, Var logits_s, const Matrix& logits_t, double temperature, double weight);

Var l2_feature_distance(Tape& t, Var phi_s, const Matrix& phi_t, double weight);

}  // namespace ops

}  // namespace featprior
