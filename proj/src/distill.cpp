#include "featprior/distill.hpp"

#include <algorithm>
#include <array>
#include <memory>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <set>
#include <sstream>
#include <thread>

#include "featprior/error.hpp"

namespace featprior {

namespace {

enum Stream : std::uint64_t {
  kTeacherInit = 1,
  kStudentInit = 2,
  kTeacherBatches = 3,
  kFeatureBatches = 4,
  kTaskBatches = 5,
};

const std::vector<std::size_t> kDefaultKs{1, 2, 3};

// Computes an optional extra loss term for a batch; writes its unweighted
// value to `aux`.
using ExtraTerm = std::function<std::optional<Var>(Tape&, const TapedForward&, std::span<const std::size_t>, double& aux)>;

std::vector<bool> block_mask(const std::vector<bool>& trainable_layers) {
  std::vector<bool> mask;
  for (bool t : trainable_layers) {
    mask.push_back(t);
    mask.push_back(t);
  }
  return mask;
}

// std::vector<bool> has no contiguous storage; Optimizer wants a span<const bool>.
std::unique_ptr<bool[]> to_array(const std::vector<bool>& v) {
  auto out = std::make_unique<bool[]>(v.size());
  std::copy(v.begin(), v.end(), out.get());
  return out;
}

double test_accuracy(const Model& model, const Dataset& test) { return evaluate(model, test).accuracy; }

void optimizer_step(Optimizer& opt, Model& model, const Gradients& grads, const std::vector<bool>& mask) {
  auto blocks = model.parameter_blocks();
  auto arr = to_array(mask);
  opt.step(blocks, grads, std::span<const bool>(arr.get(), mask.size()));
  model.round_to_storage();
}

void require_finite_loss(double v, const char* phase, std::size_t epoch) {
  if (!std::isfinite(v)) {
    throw Error(ErrorCode::DivergedTraining,
                std::string(phase) + " loss became non-finite in epoch " + std::to_string(epoch));
  }
}

RunLog task_loop(Model& model, const Dataset& dataset, const Split& split, const TrainPlan& plan, std::size_t epochs,
                 const OptimizerSettings& settings, const std::vector<bool>& trainable_layers, const char* phase,
                 std::uint64_t stream, const ExtraTerm& extra) {
  RunLog log;
  if (epochs == 0) return log;
  const Dataset test = dataset.subset(split.test);
  const auto mask = block_mask(trainable_layers);
  Optimizer opt(settings);
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    const auto schedule = make_batches(split.train, plan.batch_size, derive_seed(plan.seed, stream, epoch));
    double task_total = 0.0;
    double aux_total = 0.0;
    bool has_aux = false;
    for (const auto& batch : schedule.batches) {
      const Matrix x = gather_rows(dataset.inputs, batch);
      std::vector<std::size_t> y;
      y.reserve(batch.size());
      for (std::size_t i : batch) y.push_back(dataset.labels[i]);

      Tape tape;
      const TapedForward fwd = forward(model, x, tape);
      Var loss = ops::softmax_cross_entropy(tape, fwd.logits, y);
      task_total += tape.value(loss)(0, 0);
      if (extra) {
        double aux = 0.0;
        if (auto term = extra(tape, fwd, batch, aux)) loss = ops::add(tape, loss, *term);
        aux_total += aux;
        has_aux = true;
      }
      require_finite_loss(tape.value(loss)(0, 0), phase, epoch);
      tape.backward(loss);
      optimizer_step(opt, model, tape.parameter_grads(), mask);
    }
    const double nb = static_cast<double>(schedule.batches.size());
    LogRow row{epoch, phase, task_total / nb, std::nullopt, test_accuracy(model, test)};
    if (has_aux) row.kl_loss = aux_total / nb;
    log.rows.push_back(row);
  }
  return log;
}

const FeatureGroup& mapped_group(const FeatureCache& cache, const Dataset& dataset, std::uint32_t id) {
  if (cache.rows() != dataset.size()) {
    throw Error(ErrorCode::BatchMismatch, "feature cache has " + std::to_string(cache.rows()) + " rows, dataset has " +
                                              std::to_string(dataset.size()));
  }
  return cache.group(id);
}

void validate_mapping(const LayerGroupMapping& mapping, const NetworkSpec& spec, const FeatureCache& cache,
                      const Dataset& dataset) {
  for (const auto& e : mapping) {
    if (e.student_layer >= spec.hidden_count()) {
      throw Error(ErrorCode::LayerOutOfRange, "student layer " + std::to_string(e.student_layer) + " of " +
                                                  std::to_string(spec.hidden_count()) + " hidden layers");
    }
    mapped_group(cache, dataset, e.teacher_group);
  }
}

std::vector<bool> all_trainable(const Model& m) { return std::vector<bool>(m.layers().size(), true); }

// Distance between a student feature batch and the teacher's rows for it.
// GP KL compares kernels, so widths may differ; the other two need equal widths.
double feature_distance(const Matrix& mine, const Matrix& teacher, const PriorConfig& config) {
  switch (config.distance) {
    case Distance::GpKl:
      return gp_kl(gram_kernel(FeatureMatrix(mine), config), gram_kernel(FeatureMatrix(teacher), config));
    case Distance::Hinton: return hinton_soft_target(mine, teacher, config.temperature);
    case Distance::L2: return l2_feature_distance(mine, teacher);
  }
  return 0.0;
}

Var feature_term(Tape& tape, Var mine, const Matrix& teacher, const PriorConfig& config, double weight) {
  switch (config.distance) {
    case Distance::GpKl:
      return ops::gp_kl_prior(tape, mine, gram_kernel(FeatureMatrix(teacher), config), config, weight);
    case Distance::Hinton: return ops::hinton_soft_target(tape, mine, teacher, config.temperature, weight);
    case Distance::L2: break;
  }
  return ops::l2_feature_distance(tape, mine, teacher, weight);
}

// Sum of weighted prior terms on the tape for one batch.
std::optional<Var> prior_terms(Tape& tape, const TapedForward& fwd, const Dataset& dataset,
                               std::span<const std::size_t> batch, const ExpertPriorSet& experts,
                               const PriorConfig& config, double& unweighted) {
  std::optional<Var> total;
  unweighted = 0.0;
  for (const auto& expert : experts) {
    for (const auto& e : expert.mapping) {
      const auto& group = mapped_group(*expert.cache, dataset, e.teacher_group);
      Var term = feature_term(tape, fwd.activations.at(e.student_layer), gather_rows(group.values, batch), config,
                              expert.weight);
      unweighted += expert.weight == 0.0 ? 0.0 : tape.value(term)(0, 0) / expert.weight;
      total = total ? ops::add(tape, *total, term) : term;
    }
  }
  return total;
}

ExpertPriorSet single_expert(const FeatureCache& cache, const LayerGroupMapping& mapping, double weight) {
  // Non-owning: the cache outlives the training call.
  return {ExpertPrior{std::shared_ptr<const FeatureCache>(&cache, [](const FeatureCache*) {}), mapping, weight}};
}

}  // namespace

const char* mode_name(TrainMode m) noexcept {
  switch (m) {
    case TrainMode::TwoPhase: return "two_phase";
    case TrainMode::Joint: return "joint";
    case TrainMode::Naive: return "naive";
    case TrainMode::HintonBaseline: return "hinton_baseline";
    case TrainMode::L2Baseline: return "l2_baseline";
  }
  return "unknown";
}

TrainMode parse_mode(const std::string& name) {
  for (TrainMode m : kAllModes)
    if (name == mode_name(m)) return m;
  throw Error(ErrorCode::InvalidArgument, "unknown mode '" + name + "'");
}

void TrainPlan::validate() const {
  if (batch_size < 2) throw Error(ErrorCode::BatchTooSmall, "batch size must be >= 2");
  if (!(prior.alpha >= 0.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be >= 0");
  if (!(prior.jitter > 0.0)) throw Error(ErrorCode::InvalidArgument, "jitter must be > 0");
  if (!(prior.temperature > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be > 0");
  for (const auto* o : {&teacher_optimizer, &phase1_optimizer, &phase2_optimizer}) {
    if (!(o->learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning rate must be > 0");
  }
}

void RunLog::append(const RunLog& other) { rows.insert(rows.end(), other.rows.begin(), other.rows.end()); }

std::string RunLog::to_csv() const {
  std::ostringstream out;
  out << "epoch,phase,task_loss,kl_loss,test_accuracy\n";
  char buf[64];
  auto num = [&](std::optional<double> v) -> std::string {
    if (!v) return "";
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return buf;
  };
  for (const auto& r : rows) {
    out << r.epoch << ',' << r.phase << ',' << num(r.task_loss) << ',' << num(r.kl_loss) << ','
        << num(r.test_accuracy) << '\n';
  }
  return out.str();
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ stream) ^ index);
}

Model init_student(const NetworkSpec& spec, std::uint64_t seed) {
  return init_params(spec, derive_seed(seed, kStudentInit));
}

TrainResult train_teacher(const Dataset& dataset, const Split& split, const NetworkSpec& spec, const TrainPlan& plan) {
  plan.validate();
  if (spec.classes != dataset.class_count) {
    throw Error(ErrorCode::DimensionMismatch, "teacher head has " + std::to_string(spec.classes) +
                                                  " outputs, dataset has " + std::to_string(dataset.class_count) +
                                                  " classes");
  }
  TrainResult r{init_params(spec, derive_seed(plan.seed, kTeacherInit)), {}, std::nullopt};
  r.log = task_loop(r.model, dataset, split, plan, plan.teacher_epochs, plan.teacher_optimizer, all_trainable(r.model),
                    "teacher", kTeacherBatches, {});
  return r;
}

FeatureCache extract_features(const Model& model, const Dataset& dataset, std::span<const std::size_t> layer_ids) {
  const std::size_t hidden = model.spec().hidden_count();
  for (std::size_t id : layer_ids) {
    if (id > hidden) {
      throw Error(ErrorCode::LayerOutOfRange,
                  "layer " + std::to_string(id) + " (model has " + std::to_string(hidden) + " hidden layers)");
    }
  }
  const ForwardRecord rec = forward(model, dataset.inputs);
  FeatureCache cache;
  cache.dataset_fingerprint = dataset_fingerprint(dataset);
  cache.teacher_fingerprint = model_fingerprint(model);
  for (std::size_t id : layer_ids) {
    FeatureGroup g{static_cast<std::uint32_t>(id), id == hidden ? rec.logits : rec.activations[id]};
    for (double& v : g.values.values()) v = static_cast<double>(static_cast<float>(v));
    cache.groups.push_back(std::move(g));
  }
  return cache;
}

Fingerprint model_fingerprint(const Model& model) { return sha256(serialize_model(model)); }

double phase1_objective(const Model& student, const Dataset& dataset, std::span<const std::size_t> batch,
                        const ExpertPriorSet& experts, const PriorConfig& config) {
  const ForwardRecord rec = forward(student, gather_rows(dataset.inputs, batch));
  double total = 0.0;
  for (const auto& expert : experts) {
    for (const auto& e : expert.mapping) {
      const auto& group = mapped_group(*expert.cache, dataset, e.teacher_group);
      total += expert.weight *
               feature_distance(rec.activations.at(e.student_layer), gather_rows(group.values, batch), config);
    }
  }
  return total;
}

std::vector<bool> frozen_layers_for(const LayerGroupMapping& mapping, const NetworkSpec& spec) {
  std::vector<bool> frozen(spec.hidden_count() + 1, false);
  for (const auto& e : mapping) {
    if (e.student_layer >= spec.hidden_count()) {
      throw Error(ErrorCode::LayerOutOfRange, "student layer " + std::to_string(e.student_layer));
    }
    for (std::size_t l = 0; l <= e.student_layer; ++l) frozen[l] = true;
  }
  return frozen;
}

TrainResult phase1_expert_fit(Model student, const Dataset& dataset, const Split& split,
                              const ExpertPriorSet& experts, const TrainPlan& plan) {
  plan.validate();
  if (experts.empty()) throw Error(ErrorCode::EmptyExpertSet, "no expert priors given");
  LayerGroupMapping all_entries;
  for (const auto& expert : experts) {
    if (!expert.cache) throw Error(ErrorCode::InvalidArgument, "expert without a feature cache");
    if (!(expert.weight > 0.0)) throw Error(ErrorCode::InvalidArgument, "expert weights must be > 0");
    validate_mapping(expert.mapping, student.spec(), *expert.cache, dataset);
    all_entries.insert(all_entries.end(), expert.mapping.begin(), expert.mapping.end());
  }

  TrainResult r{std::move(student), {}, std::nullopt};
  if (all_entries.empty()) return r;

  // Layers feeding any mapped layer are the ones phase 1 may move.
  const auto frozen_after = frozen_layers_for(all_entries, r.model.spec());
  const auto mask = block_mask(frozen_after);
  const Dataset test = dataset.subset(split.test);
  Optimizer opt(plan.phase1_optimizer);
  for (std::size_t epoch = 1; epoch <= plan.phase1_epochs; ++epoch) {
    const auto schedule = make_batches(split.train, plan.batch_size, derive_seed(plan.seed, kFeatureBatches, epoch));
    double total = 0.0;
    for (const auto& batch : schedule.batches) {
      Tape tape;
      const TapedForward fwd = forward(r.model, gather_rows(dataset.inputs, batch), tape);
      double unweighted = 0.0;
      const Var objective = *prior_terms(tape, fwd, dataset, batch, experts, plan.prior, unweighted);
      const double value = tape.value(objective)(0, 0);
      require_finite_loss(value, "feature_fit", epoch);
      total += value;
      tape.backward(objective);
      optimizer_step(opt, r.model, tape.parameter_grads(), mask);
    }
    const double mean = total / static_cast<double>(schedule.batches.size());
    r.log.rows.push_back({epoch, "feature_fit", std::nullopt, mean, test_accuracy(r.model, test)});
    r.final_kl = mean;
  }
  return r;
}

TrainResult phase1_feature_fit(Model student, const Dataset& dataset, const Split& split, const FeatureCache& cache,
                               const LayerGroupMapping& mapping, const TrainPlan& plan) {
  return phase1_expert_fit(std::move(student), dataset, split, single_expert(cache, mapping, 1.0), plan);
}

TrainResult phase2_task_fit(Model student, const Dataset& dataset, const Split& split, const TrainPlan& plan,
                            const std::vector<bool>& frozen_layers) {
  plan.validate();
  if (frozen_layers.size() != student.layers().size()) {
    throw Error(ErrorCode::DimensionMismatch, "frozen flags need one entry per layer including the head");
  }
  if (std::all_of(frozen_layers.begin(), frozen_layers.end(), [](bool f) { return f; })) {
    throw Error(ErrorCode::AllLayersFrozen, "phase 2 has nothing to train");
  }
  if (student.spec().classes != dataset.class_count) {
    throw Error(ErrorCode::DimensionMismatch, "student head does not match dataset classes");
  }
  std::vector<bool> trainable(frozen_layers.size());
  for (std::size_t i = 0; i < trainable.size(); ++i) trainable[i] = !frozen_layers[i];
  TrainResult r{std::move(student), {}, std::nullopt};
  r.log = task_loop(r.model, dataset, split, plan, plan.phase2_epochs, plan.phase2_optimizer, trainable, "task_fit",
                    kTaskBatches, {});
  return r;
}

TrainResult naive_fit(Model student, const Dataset& dataset, const Split& split, const TrainPlan& plan) {
  const std::vector<bool> none(student.layers().size(), false);
  return phase2_task_fit(std::move(student), dataset, split, plan, none);
}

TrainResult joint_fit(Model student, const Dataset& dataset, const Split& split, const FeatureCache& cache,
                      const LayerGroupMapping& mapping, const TrainPlan& plan) {
  plan.validate();
  validate_mapping(mapping, student.spec(), cache, dataset);
  if (student.spec().classes != dataset.class_count) {
    throw Error(ErrorCode::DimensionMismatch, "student head does not match dataset classes");
  }
  const double alpha = plan.prior.alpha;
  const auto experts = single_expert(cache, mapping, 1.0);
  ExtraTerm extra = [&](Tape& tape, const TapedForward& fwd, std::span<const std::size_t> batch,
                        double& aux) -> std::optional<Var> {
    if (mapping.empty()) return std::nullopt;
    if (alpha == 0.0) {
      // Same batches and updates as naive training; the KL is only logged.
      double kl = 0.0;
      for (const auto& e : mapping) {
        const auto& group = cache.group(e.teacher_group);
        kl += feature_distance(tape.value(fwd.activations.at(e.student_layer)), gather_rows(group.values, batch),
                               plan.prior);
      }
      aux = kl;
      return std::nullopt;
    }
    double unweighted = 0.0;
    auto terms = prior_terms(tape, fwd, dataset, batch, experts, plan.prior, unweighted);
    aux = unweighted;
    return ops::scale(tape, *terms, alpha);
  };
  TrainResult r{std::move(student), {}, std::nullopt};
  r.log = task_loop(r.model, dataset, split, plan, plan.phase2_epochs, plan.phase2_optimizer, all_trainable(r.model),
                    "joint", kTaskBatches, extra);
  return r;
}

TrainResult two_phase_fit(Model student, const Dataset& dataset, const Split& split, const FeatureCache& cache,
                          const LayerGroupMapping& mapping, const TrainPlan& plan) {
  TrainResult p1 = phase1_feature_fit(std::move(student), dataset, split, cache, mapping, plan);
  const auto frozen = frozen_layers_for(mapping, p1.model.spec());
  TrainResult p2 = phase2_task_fit(std::move(p1.model), dataset, split, plan, frozen);
  p1.log.append(p2.log);
  return {std::move(p2.model), std::move(p1.log), p1.final_kl};
}

TrainResult combine_experts_fit(Model student, const Dataset& dataset, const Split& split,
                                const ExpertPriorSet& experts, const TrainPlan& plan) {
  TrainResult p1 = phase1_expert_fit(std::move(student), dataset, split, experts, plan);
  LayerGroupMapping all_entries;
  for (const auto& e : experts) all_entries.insert(all_entries.end(), e.mapping.begin(), e.mapping.end());
  const auto frozen = frozen_layers_for(all_entries, p1.model.spec());
  TrainResult p2 = phase2_task_fit(std::move(p1.model), dataset, split, plan, frozen);
  p1.log.append(p2.log);
  return {std::move(p2.model), std::move(p1.log), p1.final_kl};
}

TrainResult baseline_fit(Model student, const Dataset& dataset, const Split& split, const FeatureCache& cache,
                         std::uint32_t logits_group, const TrainPlan& plan) {
  plan.validate();
  const auto& group = mapped_group(cache, dataset, logits_group);
  if (group.values.cols() != student.spec().classes) {
    throw Error(ErrorCode::DimensionMismatch, "teacher logits have width " + std::to_string(group.values.cols()) +
                                                  ", student head has " + std::to_string(student.spec().classes));
  }
  const bool hinton = plan.mode == TrainMode::HintonBaseline;
  if (!hinton && plan.mode != TrainMode::L2Baseline) {
    throw Error(ErrorCode::InvalidArgument, "baseline_fit needs a baseline mode");
  }
  const double alpha = plan.prior.alpha;
  const double t = plan.prior.temperature;
  ExtraTerm extra = [&](Tape& tape, const TapedForward& fwd, std::span<const std::size_t> batch,
                        double& aux) -> std::optional<Var> {
    const Matrix target = gather_rows(group.values, batch);
    Var raw = hinton ? ops::hinton_soft_target(tape, fwd.logits, target, t, 1.0)
                     : ops::l2_feature_distance(tape, fwd.logits, target, 1.0);
    aux = tape.value(raw)(0, 0);
    return ops::scale(tape, raw, hinton ? alpha * t * t : alpha);
  };
  TrainResult r{std::move(student), {}, std::nullopt};
  r.log = task_loop(r.model, dataset, split, plan, plan.phase2_epochs, plan.phase2_optimizer, all_trainable(r.model),
                    "task_fit", kTaskBatches, extra);
  return r;
}

TrainResult run_mode(Model student, const Dataset& dataset, const Split& split, const FeatureCache& cache,
                     const LayerGroupMapping& mapping, std::uint32_t logits_group, const TrainPlan& plan) {
  switch (plan.mode) {
    case TrainMode::TwoPhase: return two_phase_fit(std::move(student), dataset, split, cache, mapping, plan);
    case TrainMode::Joint: return joint_fit(std::move(student), dataset, split, cache, mapping, plan);
    case TrainMode::Naive: return naive_fit(std::move(student), dataset, split, plan);
    case TrainMode::HintonBaseline:
    case TrainMode::L2Baseline: return baseline_fit(std::move(student), dataset, split, cache, logits_group, plan);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown mode");
}

const ComparisonRow& ComparisonTable::find(const std::string& method, const std::string& metric) const {
  for (const auto* set : {&rows, &teacher_rows})
    for (const auto& r : *set)
      if (r.method == method && r.metric == metric) return r;
  throw Error(ErrorCode::InvalidArgument, "no comparison row " + method + "/" + metric);
}

std::string ComparisonTable::to_csv() const {
  std::ostringstream out;
  out << "method,metric,mean,std_error,n_seeds\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%zu", r.value.mean, r.value.std_error, r.value.n);
    out << r.method << ',' << r.metric << ',' << buf << '\n';
  }
  return out.str();
}

std::string ComparisonTable::summary() const {
  std::ostringstream out;
  char buf[160];
  for (const auto* set : {&teacher_rows, &rows}) {
    for (const auto& r : *set) {
      std::snprintf(buf, sizeof buf, "%-16s %-10s %8.4f +/- %.4f (n=%zu)\n", r.method.c_str(), r.metric.c_str(),
                    r.value.mean, r.value.std_error, r.value.n);
      out << buf;
    }
  }
  return out.str();
}

ComparisonTable compare_methods(const ComparisonSetup& setup) {
  if (!setup.dataset) throw Error(ErrorCode::InvalidArgument, "comparison without a dataset");
  if (setup.seeds.size() < 2) throw Error(ErrorCode::InvalidArgument, "comparison needs at least 2 seeds");
  if (std::set<std::uint64_t>(setup.seeds.begin(), setup.seeds.end()).size() != setup.seeds.size()) {
    throw Error(ErrorCode::InvalidArgument, "comparison seeds must be distinct");
  }
  setup.plan.validate();
  const Dataset& ds = *setup.dataset;
  const Dataset test = ds.subset(setup.split.test);
  const auto logits_group = static_cast<std::uint32_t>(setup.teacher_spec.hidden_count());
  std::vector<std::size_t> layer_ids;
  for (const auto& e : setup.mapping) layer_ids.push_back(e.teacher_group);
  layer_ids.push_back(logits_group);
  std::sort(layer_ids.begin(), layer_ids.end());
  layer_ids.erase(std::unique(layer_ids.begin(), layer_ids.end()), layer_ids.end());

  constexpr std::size_t kMethods = std::size(kAllModes);
  struct SeedResult {
    MetricsReport teacher;
    std::array<MetricsReport, kMethods> methods;
  };
  std::vector<std::uint64_t> seeds = setup.seeds;
  std::sort(seeds.begin(), seeds.end());
  std::vector<SeedResult> results(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());

  auto run_seed = [&](std::size_t i) {
    try {
      TrainPlan plan = setup.plan;
      plan.seed = seeds[i];
      const TrainResult teacher = train_teacher(ds, setup.split, setup.teacher_spec, plan);
      results[i].teacher = evaluate(teacher.model, test, setup.ks);
      const FeatureCache cache = extract_features(teacher.model, ds, layer_ids);
      for (std::size_t m = 0; m < kMethods; ++m) {
        plan.mode = kAllModes[m];
        TrainResult r = run_mode(init_student(setup.student_spec, plan.seed), ds, setup.split, cache, setup.mapping,
                                 logits_group, plan);
        results[i].methods[m] = evaluate(r.model, test, setup.ks);
      }
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  const unsigned jobs = std::max(1u, std::min<unsigned>(setup.jobs, static_cast<unsigned>(seeds.size())));
  if (jobs == 1) {
    for (std::size_t i = 0; i < seeds.size(); ++i) run_seed(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned j = 0; j < jobs; ++j) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < seeds.size(); i = next++) run_seed(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  ComparisonTable table;
  auto add_rows = [&](std::vector<ComparisonRow>& into, const std::string& method,
                      const std::vector<MetricsReport>& reports) {
    const auto names = reports.front().named();
    for (std::size_t k = 0; k < names.size(); ++k) {
      std::vector<double> vals;
      for (const auto& rep : reports) vals.push_back(rep.named()[k].second);
      into.push_back({method, names[k].first, aggregate(vals)});
    }
    table.per_seed.emplace_back(method, reports);
  };
  std::vector<MetricsReport> teacher_reports;
  for (const auto& r : results) teacher_reports.push_back(r.teacher);
  add_rows(table.teacher_rows, "teacher", teacher_reports);
  for (std::size_t m = 0; m < kMethods; ++m) {
    std::vector<MetricsReport> reports;
    for (const auto& r : results) reports.push_back(r.methods[m]);
    add_rows(table.rows, mode_name(kAllModes[m]), reports);
  }
  return table;
}

}  // namespace featprior
