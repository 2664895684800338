#pragma once

// Teacher-student training under GP feature priors.
//
// Phase 1 fits the student's mapped hidden layers so their batch Gram
// kernels match the teacher's (label free). Phase 2 freezes those layers and
// trains the rest on the task. Joint mode instead adds α·KL to the task loss,
// and the hinton / l2 baselines add logit-level distances.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "featprior/data.hpp"
#include "featprior/gp_prior.hpp"
#include "featprior/metrics.hpp"
#include "featprior/network.hpp"
#include "featprior/optim.hpp"

namespace featprior {

enum class TrainMode { TwoPhase, Joint, Naive, HintonBaseline, L2Baseline };

const char* mode_name(TrainMode m) noexcept;
TrainMode parse_mode(const std::string& name);
inline constexpr TrainMode kAllModes[] = {TrainMode::Naive, TrainMode::HintonBaseline, TrainMode::L2Baseline,
                                          TrainMode::TwoPhase, TrainMode::Joint};

struct LayerGroupEntry {
  std::size_t student_layer = 0;
  std::uint32_t teacher_group = 0;
};
using LayerGroupMapping = std::vector<LayerGroupEntry>;

struct TrainPlan {
  std::uint64_t seed = 0;
  std::size_t batch_size = 32;
  std::size_t teacher_epochs = 100;
  std::size_t phase1_epochs = 50;
  // Also the epoch budget of naive, joint and baseline runs.
  std::size_t phase2_epochs = 25;
  OptimizerSettings teacher_optimizer{};
  OptimizerSettings phase1_optimizer{};
  OptimizerSettings phase2_optimizer{};
  PriorConfig prior{};
  TrainMode mode = TrainMode::TwoPhase;

  void validate() const;
};

struct ExpertPrior {
  std::shared_ptr<const FeatureCache> cache;
  LayerGroupMapping mapping;
  double weight = 1.0;
};
using ExpertPriorSet = std::vector<ExpertPrior>;

struct LogRow {
  std::size_t epoch = 0;
  std::string phase;  // feature_fit, task_fit, joint, teacher
  std::optional<double> task_loss;
  std::optional<double> kl_loss;  // prior or baseline distance term, unweighted
  double test_accuracy = 0.0;
};

struct RunLog {
  std::vector<LogRow> rows;

  void append(const RunLog& other);
  // epoch,phase,task_loss,kl_loss,test_accuracy
  std::string to_csv() const;
};

struct TrainResult {
  Model model;
  RunLog log;
  // Mean per-batch phase-1 objective in the last phase-1 epoch.
  std::optional<double> final_kl;
};

// Deterministic stream derivation for per-run / per-epoch seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0);

// The student's initial parameters for a plan seed; shared by every mode so
// comparisons start from identical weights.
Model init_student(const NetworkSpec& spec, std::uint64_t seed);

TrainResult train_teacher(const Dataset& dataset, const Split& split, const NetworkSpec& spec, const TrainPlan& plan);

// Activations of the requested layers over the whole dataset, in dataset row
// order, rounded to the cache's f32 storage. Layer id hidden_count() selects
// the logits. Group ids equal layer ids.
FeatureCache extract_features(const Model& model, const Dataset& dataset, std::span<const std::size_t> layer_ids);
Fingerprint model_fingerprint(const Model& model);

// Σ_j weight_j Σ_entries gp_kl(student Gram, expert Gram) on one batch of
// dataset indices.
double phase1_objective(const Model& student, const Dataset& dataset, std::span<const std::size_t> batch,
                        const ExpertPriorSet& experts, const PriorConfig& config);

// Layers 0..max mapped index are frozen after phase 1; the head never is.
std::vector<bool> frozen_layers_for(const LayerGroupMapping& mapping, const NetworkSpec& spec);

TrainResult phase1_feature_fit(Model student, const Dataset& dataset, const Split& split, const FeatureCache& cache,
                               const LayerGroupMapping& mapping, const TrainPlan& plan);
TrainResult phase1_expert_fit(Model student, const Dataset& dataset, const Split& split,
                              const ExpertPriorSet& experts, const TrainPlan& plan);

// `frozen_layers` has one flag per model layer (hidden then head).
TrainResult phase2_task_fit(Model student, const Dataset& dataset, const Split& split, const TrainPlan& plan,
                            const std::vector<bool>& frozen_layers);

TrainResult naive_fit(Model student, const Dataset& dataset, const Split& split, const TrainPlan& plan);

// Cross-entropy + α·Σ gp_kl per batch; α = plan.prior.alpha and may be 0.
TrainResult joint_fit(Model student, const Dataset& dataset, const Split& split, const FeatureCache& cache,
                      const LayerGroupMapping& mapping, const TrainPlan& plan);

TrainResult two_phase_fit(Model student, const Dataset& dataset, const Split& split, const FeatureCache& cache,
                          const LayerGroupMapping& mapping, const TrainPlan& plan);

TrainResult combine_experts_fit(Model student, const Dataset& dataset, const Split& split,
                                const ExpertPriorSet& experts, const TrainPlan& plan);

// Cross-entropy + α·d(student logits, teacher logits) where d is the
// temperature-softened cross-entropy (scaled by T²) or the mean squared logit
// difference. Needs equal logit widths.
TrainResult baseline_fit(Model student, const Dataset& dataset, const Split& split, const FeatureCache& cache,
                         std::uint32_t logits_group, const TrainPlan& plan);

// Runs plan.mode.
TrainResult run_mode(Model student, const Dataset& dataset, const Split& split, const FeatureCache& cache,
                     const LayerGroupMapping& mapping, std::uint32_t logits_group, const TrainPlan& plan);

struct ComparisonSetup {
  const Dataset* dataset = nullptr;
  Split split;
  NetworkSpec teacher_spec;
  NetworkSpec student_spec;
  TrainPlan plan;  // mode ignored; seed replaced per run
  LayerGroupMapping mapping;
  std::vector<std::uint64_t> seeds;
  std::vector<std::size_t> ks{1, 2, 3};
  unsigned jobs = 1;
};

struct ComparisonRow {
  std::string method;
  std::string metric;
  SeedAggregate value;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;          // methods × metrics
  std::vector<ComparisonRow> teacher_rows;  // reference only, not part of the CSV
  // per_seed[method][seed index]
  std::vector<std::pair<std::string, std::vector<MetricsReport>>> per_seed;

  const ComparisonRow& find(const std::string& method, const std::string& metric) const;
  // method,metric,mean,std_error,n_seeds with 6 decimals.
  std::string to_csv() const;
  std::string summary() const;
};

ComparisonTable compare_methods(const ComparisonSetup& setup);

}  // namespace featprior
