#include "featprior/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "binio.hpp"
#include "featprior/error.hpp"
#include "json.hpp"

namespace featprior::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); }

// Object reader that rejects keys nobody asked for.
class Obj {
 public:
  Obj(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) config_error(where_ + " must be an object");
  }
  ~Obj() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) config_error("unknown key '" + it.key() + "' in " + where_);
    }
  }
  Obj(const Obj&) = delete;
  Obj& operator=(const Obj&) = delete;

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& at(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) config_error("missing key '" + key + "' in " + where_);
    return j_.at(key);
  }

  template <typename T>
  T get(const std::string& key) {
    const json& v = at(key);
    try {
      return v.get<T>();
    } catch (const json::exception&) {
      config_error("key '" + key + "' in " + where_ + " has the wrong type");
    }
  }

  template <typename T>
  T get_or(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return get<T>(key);
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

std::size_t get_count(Obj& o, const std::string& key) {
  const json& v = o.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    config_error(o.path(key) + " must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

std::size_t get_count_or(Obj& o, const std::string& key, std::size_t fallback) {
  return o.has(key) ? get_count(o, key) : fallback;
}

template <typename Fn>
auto wrap(Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidArgument) config_error(e.what());
    throw;
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

OptimizerSettings parse_optimizer_settings(const json& j, const std::string& where) {
  Obj o(j, where);
  OptimizerSettings s;
  s.kind = wrap([&] { return parse_optimizer(o.get_or<std::string>("kind", "adam")); });
  s.learning_rate = o.get_or("learning_rate", s.learning_rate);
  s.momentum = o.get_or("momentum", s.momentum);
  s.beta1 = o.get_or("beta1", s.beta1);
  s.beta2 = o.get_or("beta2", s.beta2);
  s.epsilon = o.get_or("epsilon", s.epsilon);
  if (!(s.learning_rate > 0.0)) config_error(where + ".learning_rate must be > 0");
  return s;
}

LayerGroupMapping parse_mapping(const json& j, const std::string& where) {
  if (!j.is_array()) config_error(where + " must be an array");
  LayerGroupMapping m;
  for (std::size_t i = 0; i < j.size(); ++i) {
    Obj o(j[i], where + "[" + std::to_string(i) + "]");
    m.push_back({get_count(o, "student_layer"), static_cast<std::uint32_t>(get_count(o, "teacher_group"))});
  }
  return m;
}

ModelShape parse_shape(const json& j, const std::string& where) {
  Obj o(j, where);
  ModelShape s;
  s.hidden = o.get<std::vector<std::size_t>>("hidden");
  s.activation = wrap([&] { return parse_activation(o.get_or<std::string>("activation", "relu")); });
  for (std::size_t w : s.hidden)
    if (w == 0) config_error(where + ".hidden widths must be >= 1");
  return s;
}

DatasetSource parse_dataset(const json& j, const fs::path& base) {
  Obj o(j, "dataset");
  DatasetSource d;
  const auto source = o.get<std::string>("source");
  if (source == "idx") {
    d.kind = DatasetSource::Kind::Idx;
    d.images = resolve(base, o.get<std::string>("images"));
    d.labels = resolve(base, o.get<std::string>("labels"));
  } else if (source == "csv") {
    d.kind = DatasetSource::Kind::Csv;
    d.csv = resolve(base, o.get<std::string>("path"));
    d.label_column = o.get_or<std::string>("label_column", d.label_column);
  } else if (source == "synthetic") {
    const auto gen = o.get<std::string>("generator");
    d.n_per_class = get_count(o, "n_per_class");
    d.classes = get_count(o, "classes");
    d.seed = o.get_or<std::uint64_t>("seed", 0);
    if (d.n_per_class == 0 || d.classes == 0) config_error("dataset.n_per_class and dataset.classes must be >= 1");
    if (gen == "rings") {
      d.kind = DatasetSource::Kind::Rings;
      d.noise = o.get_or("noise", 0.0);
      if (!(d.noise >= 0.0)) config_error("dataset.noise must be >= 0");
    } else if (gen == "blobs") {
      d.kind = DatasetSource::Kind::Blobs;
      d.dim = get_count_or(o, "dim", 2);
      d.separation = o.get_or("separation", 1.0);
      if (!(d.separation > 0.0)) config_error("dataset.separation must be > 0");
      if (d.dim == 0) config_error("dataset.dim must be >= 1");
    } else {
      config_error("unknown generator '" + gen + "'");
    }
  } else {
    config_error("unknown dataset source '" + source + "'");
  }
  return d;
}

TrainPlan parse_plan(const json& j) {
  Obj o(j, "plan");
  TrainPlan p;
  p.seed = o.get_or<std::uint64_t>("seed", p.seed);
  p.batch_size = get_count_or(o, "batch_size", p.batch_size);
  p.teacher_epochs = get_count_or(o, "teacher_epochs", p.teacher_epochs);
  p.phase1_epochs = get_count_or(o, "phase1_epochs", p.phase1_epochs);
  p.phase2_epochs = get_count_or(o, "phase2_epochs", p.phase2_epochs);
  if (o.has("teacher_optimizer")) p.teacher_optimizer = parse_optimizer_settings(o.at("teacher_optimizer"), "plan.teacher_optimizer");
  if (o.has("phase1_optimizer")) p.phase1_optimizer = parse_optimizer_settings(o.at("phase1_optimizer"), "plan.phase1_optimizer");
  if (o.has("phase2_optimizer")) p.phase2_optimizer = parse_optimizer_settings(o.at("phase2_optimizer"), "plan.phase2_optimizer");
  if (o.has("prior")) {
    Obj pr(o.at("prior"), "plan.prior");
    p.prior.alpha = pr.get_or("alpha", p.prior.alpha);
    p.prior.jitter = pr.get_or("jitter", p.prior.jitter);
    p.prior.normalize_by_width = pr.get_or("normalize_by_width", p.prior.normalize_by_width);
    p.prior.temperature = pr.get_or("temperature", p.prior.temperature);
    p.prior.distance = wrap([&] { return parse_distance(pr.get_or<std::string>("distance", "gp_kl")); });
  }
  p.mode = wrap([&] { return parse_mode(o.get_or<std::string>("mode", "two_phase")); });
  try {
    p.validate();
  } catch (const Error& e) {
    config_error(std::string("plan: ") + e.what());
  }
  return p;
}

std::string metrics_csv(const MetricsReport& m) {
  std::ostringstream out;
  out << "metric,value\n";
  char buf[64];
  for (const auto& [name, v] : m.named()) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    out << name << ',' << buf << '\n';
  }
  return out.str();
}

void say(const CommandOptions& opt, const std::string& line) {
  if (opt.log) opt.log(line);
}

fs::path teacher_model_path(const ExperimentConfig& c, const fs::path& out) {
  return c.teacher_model ? *c.teacher_model : out / "teacher.fpnn";
}

fs::path cache_path(const ExperimentConfig& c, const fs::path& out) {
  return c.feature_cache ? *c.feature_cache : out / "features.fpfc";
}

// Teacher training data restricted to `teacher_classes`, relabelled in the
// order given. Split membership is inherited from the full split.
PreparedData teacher_view(const PreparedData& data, const std::vector<std::size_t>& classes) {
  if (classes.empty()) return data;
  std::vector<std::size_t> relabel(data.dataset.class_count, static_cast<std::size_t>(-1));
  for (std::size_t i = 0; i < classes.size(); ++i) relabel[classes[i]] = i;
  std::vector<std::size_t> keep;
  std::vector<std::size_t> new_index(data.dataset.size(), static_cast<std::size_t>(-1));
  for (std::size_t i = 0; i < data.dataset.size(); ++i) {
    if (relabel[data.dataset.labels[i]] != static_cast<std::size_t>(-1)) {
      new_index[i] = keep.size();
      keep.push_back(i);
    }
  }
  PreparedData out;
  out.dataset = data.dataset.subset(keep);
  for (auto& y : out.dataset.labels) y = relabel[y];
  out.dataset.class_count = classes.size();
  for (std::size_t i : data.split.train)
    if (new_index[i] != static_cast<std::size_t>(-1)) out.split.train.push_back(new_index[i]);
  for (std::size_t i : data.split.test)
    if (new_index[i] != static_cast<std::size_t>(-1)) out.split.test.push_back(new_index[i]);
  if (out.split.train.size() < 2 || out.split.test.empty()) {
    config_error("teacher_classes leave too few examples in the split");
  }
  return out;
}

void cmd_train_teacher(const ExperimentConfig& c, const PreparedData& data, const CommandOptions& opt) {
  const PreparedData view = teacher_view(data, c.teacher_classes);
  const NetworkSpec spec = teacher_spec(c, data.dataset);
  TrainResult r = train_teacher(view.dataset, view.split, spec, c.plan);
  const MetricsReport m = evaluate(r.model, view.dataset.subset(view.split.test), c.ks);
  save_model(r.model, opt.out / "teacher.fpnn");
  binio::write_text_atomic(opt.out / "teacher_metrics.csv", metrics_csv(m));
  binio::write_text_atomic(opt.out / "teacher_log.csv", r.log.to_csv());
  char buf[96];
  std::snprintf(buf, sizeof buf, "teacher test accuracy %.4f", m.accuracy);
  say(opt, buf);
}

void cmd_extract(const ExperimentConfig& c, const PreparedData& data, const CommandOptions& opt) {
  const fs::path model_path = teacher_model_path(c, opt.out);
  const Model teacher = load_model(model_path);
  if (teacher.spec().input_width != data.dataset.dims()) {
    throw Error(ErrorCode::DimensionMismatch, model_path.string() + " expects " +
                                                  std::to_string(teacher.spec().input_width) + " inputs");
  }
  const auto layers = c.feature_layers.empty()
                          ? [&] {
                              std::set<std::size_t> ids;
                              for (const auto& e : c.mapping) ids.insert(e.teacher_group);
                              ids.insert(teacher.spec().hidden_count());
                              return std::vector<std::size_t>(ids.begin(), ids.end());
                            }()
                          : c.feature_layers;
  const FeatureCache cache = extract_features(teacher, data.dataset, layers);
  const fs::path out = cache_path(c, opt.out);
  write_cache(out, cache);
  say(opt, "wrote " + std::to_string(cache.groups.size()) + " feature groups to " + out.string());
}

void cmd_distill(const ExperimentConfig& c, const PreparedData& data, const CommandOptions& opt) {
  const NetworkSpec sspec = student_spec(c, data.dataset);
  const Model student = init_student(sspec, c.plan.seed);
  const Fingerprint dataset_fp = dataset_fingerprint(data.dataset);
  TrainResult r;
  if (!c.experts.empty()) {
    ExpertPriorSet experts;
    for (const auto& e : c.experts) {
      const Fingerprint teacher_fp = model_fingerprint(load_model(e.model));
      auto cache = std::make_shared<const FeatureCache>(read_cache(e.cache, dataset_fp, teacher_fp));
      experts.push_back({std::move(cache), e.mapping, e.weight});
    }
    r = combine_experts_fit(student, data.dataset, data.split, experts, c.plan);
  } else if (c.plan.mode == TrainMode::Naive) {
    r = naive_fit(student, data.dataset, data.split, c.plan);
  } else {
    const Model teacher = load_model(teacher_model_path(c, opt.out));
    const FeatureCache cache = read_cache(cache_path(c, opt.out), dataset_fp, model_fingerprint(teacher));
    r = run_mode(student, data.dataset, data.split, cache, c.mapping,
                 static_cast<std::uint32_t>(teacher.spec().hidden_count()), c.plan);
  }
  const MetricsReport m = evaluate(r.model, data.dataset.subset(data.split.test), c.ks);
  save_model(r.model, opt.out / "student.fpnn");
  binio::write_text_atomic(opt.out / "run_log.csv", r.log.to_csv());
  binio::write_text_atomic(opt.out / "student_metrics.csv", metrics_csv(m));
  char buf[128];
  std::snprintf(buf, sizeof buf, "%s student test accuracy %.4f",
                c.experts.empty() ? mode_name(c.plan.mode) : "combined_experts", m.accuracy);
  say(opt, buf);
}

void cmd_evaluate(const ExperimentConfig& c, const PreparedData& data, const CommandOptions& opt) {
  const fs::path path = opt.model ? *opt.model : c.model ? *c.model : opt.out / "student.fpnn";
  const Model model = load_model(path);
  const MetricsReport m = evaluate(model, data.dataset.subset(data.split.test), c.ks);
  binio::write_text_atomic(opt.out / "evaluation.csv", metrics_csv(m));
  for (const auto& [name, v] : m.named()) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%-10s %.6f", name.c_str(), v);
    say(opt, buf);
  }
}

void cmd_compare(const ExperimentConfig& c, const PreparedData& data, const CommandOptions& opt) {
  ComparisonSetup setup;
  setup.dataset = &data.dataset;
  setup.split = data.split;
  setup.teacher_spec = teacher_spec(c, data.dataset);
  setup.student_spec = student_spec(c, data.dataset);
  setup.plan = c.plan;
  setup.mapping = c.mapping;
  setup.seeds = c.seeds;
  setup.ks = c.ks;
  setup.jobs = opt.jobs;
  const ComparisonTable table = compare_methods(setup);
  binio::write_text_atomic(opt.out / "comparison.csv", table.to_csv());
  const std::string summary = table.summary();
  binio::write_text_atomic(opt.out / "summary.txt", summary);
  std::istringstream lines(summary);
  for (std::string line; std::getline(lines, line);) say(opt, line);
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    config_error(std::string("invalid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Obj o(j, "config");
  c.dataset = parse_dataset(o.at("dataset"), base_dir);
  if (o.has("split")) {
    Obj s(o.at("split"), "split");
    c.test_fraction = s.get_or("test_fraction", c.test_fraction);
    c.split_seed = s.get_or<std::uint64_t>("seed", c.split_seed);
    if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) config_error("split.test_fraction must be in (0, 1)");
  }
  if (o.has("teacher")) c.teacher = parse_shape(o.at("teacher"), "teacher");
  if (o.has("student")) c.student = parse_shape(o.at("student"), "student");
  if (o.has("plan")) c.plan = parse_plan(o.at("plan"));
  if (o.has("mapping")) c.mapping = parse_mapping(o.at("mapping"), "mapping");
  if (o.has("experts")) {
    const json& ex = o.at("experts");
    if (!ex.is_array()) config_error("experts must be an array");
    for (std::size_t i = 0; i < ex.size(); ++i) {
      const std::string where = "experts[" + std::to_string(i) + "]";
      Obj e(ex[i], where);
      ExpertEntry entry;
      entry.model = resolve(base_dir, e.get<std::string>("model"));
      entry.cache = resolve(base_dir, e.get<std::string>("cache"));
      entry.mapping = parse_mapping(e.at("mapping"), where + ".mapping");
      entry.weight = e.get_or("weight", 1.0);
      if (!(entry.weight > 0.0)) config_error(where + ".weight must be > 0");
      c.experts.push_back(std::move(entry));
    }
  }
  c.teacher_classes = o.get_or("teacher_classes", c.teacher_classes);
  c.feature_layers = o.get_or("feature_layers", c.feature_layers);
  if (o.has("teacher_model")) c.teacher_model = resolve(base_dir, o.get<std::string>("teacher_model"));
  if (o.has("feature_cache")) c.feature_cache = resolve(base_dir, o.get<std::string>("feature_cache"));
  if (o.has("model")) c.model = resolve(base_dir, o.get<std::string>("model"));
  c.seeds = o.get_or("seeds", c.seeds);
  c.ks = o.get_or("ks", c.ks);
  for (std::size_t k : c.ks)
    if (k == 0) config_error("ks entries must be >= 1");
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

PreparedData prepare_data(const ExperimentConfig& c) {
  PreparedData p;
  const auto& d = c.dataset;
  switch (d.kind) {
    case DatasetSource::Kind::Idx: p.dataset = load_idx(d.images, d.labels); break;
    case DatasetSource::Kind::Csv: p.dataset = load_csv(d.csv, d.label_column); break;
    case DatasetSource::Kind::Rings: p.dataset = synth_rings(d.n_per_class, d.classes, d.noise, d.seed); break;
    case DatasetSource::Kind::Blobs:
      p.dataset = synth_blobs(d.n_per_class, d.classes, d.dim, d.separation, d.seed);
      break;
  }
  p.split = split_and_batch(p.dataset, c.test_fraction, c.plan.batch_size, c.split_seed).split;
  return p;
}

NetworkSpec teacher_spec(const ExperimentConfig& c, const Dataset& dataset) {
  const std::size_t classes = c.teacher_classes.empty() ? dataset.class_count : c.teacher_classes.size();
  return NetworkSpec::dense(dataset.dims(), c.teacher.hidden, c.teacher.activation, classes);
}

NetworkSpec student_spec(const ExperimentConfig& c, const Dataset& dataset) {
  return NetworkSpec::dense(dataset.dims(), c.student.hidden, c.student.activation, dataset.class_count);
}

void validate(const ExperimentConfig& c, const std::string& command, const Dataset& dataset) {
  if (std::find(std::begin(kCommands), std::end(kCommands), command) == std::end(kCommands)) {
    config_error("unknown command '" + command + "'");
  }
  const std::size_t teacher_hidden = c.teacher.hidden.size();
  const std::size_t student_hidden = c.student.hidden.size();

  std::set<std::size_t> seen_classes;
  for (std::size_t k : c.teacher_classes) {
    if (k >= dataset.class_count) config_error("teacher_classes entry " + std::to_string(k) + " is not a class");
    if (!seen_classes.insert(k).second) config_error("teacher_classes entries must be distinct");
  }
  for (std::size_t id : c.feature_layers) {
    if (id > teacher_hidden) config_error("feature_layers entry " + std::to_string(id) + " exceeds teacher depth");
  }
  auto check_mapping = [&](const LayerGroupMapping& m, const std::string& where, bool check_teacher) {
    for (const auto& e : m) {
      if (e.student_layer >= student_hidden) {
        config_error(where + ": student_layer " + std::to_string(e.student_layer) + " but student has " +
                     std::to_string(student_hidden) + " hidden layers");
      }
      if (check_teacher && e.teacher_group > teacher_hidden) {
        config_error(where + ": teacher_group " + std::to_string(e.teacher_group) + " but teacher has " +
                     std::to_string(teacher_hidden) + " hidden layers");
      }
    }
  };
  check_mapping(c.mapping, "mapping", true);
  for (std::size_t i = 0; i < c.experts.size(); ++i) {
    check_mapping(c.experts[i].mapping, "experts[" + std::to_string(i) + "].mapping", false);
  }

  const bool needs_teacher = command == "train-teacher" || command == "extract-features" || command == "compare";
  const bool needs_student = command == "distill" || command == "compare";
  if (needs_teacher && c.teacher.hidden.empty() && command != "extract-features") {
    config_error("teacher.hidden must list at least one layer");
  }
  if (needs_student && c.student.hidden.empty() && c.plan.mode != TrainMode::Naive) {
    config_error("student.hidden must list at least one layer for feature priors");
  }
  if (command == "distill" && c.experts.empty()) {
    const bool prior_mode = c.plan.mode == TrainMode::TwoPhase || c.plan.mode == TrainMode::Joint;
    if (prior_mode && c.mapping.empty()) config_error("mode needs a non-empty mapping");
    const bool baseline = c.plan.mode == TrainMode::HintonBaseline || c.plan.mode == TrainMode::L2Baseline;
    if (baseline && !c.teacher_classes.empty() && c.teacher_classes.size() != dataset.class_count) {
      config_error("logit baselines need the teacher to cover every class");
    }
  }
  if (command == "compare") {
    if (c.seeds.size() < 2) config_error("compare needs at least 2 seeds");
    if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size()) {
      config_error("seeds must be distinct");
    }
    if (!c.teacher_classes.empty()) config_error("compare trains full-task teachers; drop teacher_classes");
    if (c.mapping.empty()) config_error("compare needs a mapping for the prior modes");
  }
  // Shapes must build.
  if (!c.teacher.hidden.empty()) {
    try {
      teacher_spec(c, dataset);
    } catch (const Error& e) {
      config_error(std::string("teacher: ") + e.what());
    }
  }
  try {
    student_spec(c, dataset);
  } catch (const Error& e) {
    config_error(std::string("student: ") + e.what());
  }
}

void run_command(const CommandOptions& options) {
  ExperimentConfig c = load_config(options.config);
  if (options.seed_override) c.plan.seed = *options.seed_override;
  if (std::find(std::begin(kCommands), std::end(kCommands), options.command) == std::end(kCommands)) {
    config_error("unknown command '" + options.command + "'");
  }
  const PreparedData data = prepare_data(c);
  validate(c, options.command, data.dataset);

  std::error_code ec;
  fs::create_directories(options.out, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + options.out.string() + ": " + ec.message());

  if (options.command == "train-teacher") cmd_train_teacher(c, data, options);
  else if (options.command == "extract-features") cmd_extract(c, data, options);
  else if (options.command == "distill") cmd_distill(c, data, options);
  else if (options.command == "evaluate") cmd_evaluate(c, data, options);
  else cmd_compare(c, data, options);
}

}  // namespace featprior::harness
