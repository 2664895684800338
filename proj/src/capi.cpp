#include "featprior/featprior.h"

#include <cstring>
#include <exception>
#include <new>
#include <string>
#include <vector>

#include "featprior/data.hpp"
#include "featprior/distill.hpp"
#include "featprior/error.hpp"
#include "featprior/gp_prior.hpp"
#include "featprior/harness.hpp"
#include "featprior/metrics.hpp"
#include "featprior/network.hpp"

struct fp_dataset {
  featprior::Dataset value;
};
struct fp_model {
  featprior::Model value;
};
struct fp_feature_cache {
  featprior::FeatureCache value;
};

namespace {

thread_local std::string last_error;

// ErrorCode and fp_status list the same codes in the same order, offset by FP_OK.
fp_status to_status(featprior::ErrorCode code) { return static_cast<fp_status>(static_cast<int>(code) + 1); }

template <typename Fn>
fp_status guarded(Fn&& fn) {
  try {
    fn();
    last_error.clear();
    return FP_OK;
  } catch (const featprior::Error& e) {
    last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return FP_INTERNAL_ERROR;
  } catch (const std::exception& e) {
    last_error = e.what();
    return FP_INTERNAL_ERROR;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw featprior::Error(featprior::ErrorCode::InvalidArgument, what);
}

featprior::Matrix copy_matrix(const double* data, std::size_t rows, std::size_t cols) {
  require(data != nullptr, "null matrix data");
  return featprior::Matrix(rows, cols, std::vector<double>(data, data + rows * cols));
}

featprior::PriorConfig to_config(const fp_prior_options* o) {
  featprior::PriorConfig c;
  if (o) {
    c.alpha = o->alpha;
    c.jitter = o->jitter;
    c.normalize_by_width = o->normalize_by_width != 0;
    c.temperature = o->temperature;
  }
  c.validate();
  return c;
}

}  // namespace

extern "C" {

const char* fp_version(void) { return "0.1.0"; }

const char* fp_status_name(fp_status status) {
  if (status == FP_OK) return "Ok";
  if (status == FP_INTERNAL_ERROR) return "InternalError";
  if (status < FP_OK || status > FP_INTERNAL_ERROR) return "Unknown";
  return featprior::error_code_name(static_cast<featprior::ErrorCode>(static_cast<int>(status) - 1));
}

const char* fp_last_error(void) { return last_error.c_str(); }

int fp_exit_code(fp_status status) {
  if (status == FP_OK) return 0;
  if (status > FP_OK && status < FP_INTERNAL_ERROR &&
      featprior::is_numerical_failure(static_cast<featprior::ErrorCode>(static_cast<int>(status) - 1))) {
    return 2;
  }
  return 1;
}

fp_status fp_dataset_load_idx(const char* images_path, const char* labels_path, fp_dataset** out) {
  return guarded([&] {
    require(images_path && labels_path && out, "null argument");
    *out = new fp_dataset{featprior::load_idx(images_path, labels_path)};
  });
}

fp_status fp_dataset_load_csv(const char* path, const char* label_column, fp_dataset** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new fp_dataset{featprior::load_csv(path, label_column ? label_column : "label")};
  });
}

fp_status fp_dataset_synth_rings(size_t n_per_class, size_t classes, double noise, uint64_t seed, fp_dataset** out) {
  return guarded([&] {
    require(out, "null argument");
    *out = new fp_dataset{featprior::synth_rings(n_per_class, classes, noise, seed)};
  });
}

fp_status fp_dataset_synth_blobs(size_t n_per_class, size_t classes, size_t dim, double separation, uint64_t seed,
                                 fp_dataset** out) {
  return guarded([&] {
    require(out, "null argument");
    *out = new fp_dataset{featprior::synth_blobs(n_per_class, classes, dim, separation, seed)};
  });
}

fp_status fp_dataset_from_arrays(const double* inputs, const size_t* labels, size_t n, size_t dims,
                                 size_t class_count, fp_dataset** out) {
  return guarded([&] {
    require(labels && out, "null argument");
    featprior::Dataset ds;
    ds.inputs = copy_matrix(inputs, n, dims);
    ds.labels.assign(labels, labels + n);
    ds.class_count = class_count;
    ds.validate();
    *out = new fp_dataset{std::move(ds)};
  });
}

size_t fp_dataset_size(const fp_dataset* ds) { return ds ? ds->value.size() : 0; }
size_t fp_dataset_dims(const fp_dataset* ds) { return ds ? ds->value.dims() : 0; }
size_t fp_dataset_classes(const fp_dataset* ds) { return ds ? ds->value.class_count : 0; }

fp_status fp_dataset_fingerprint(const fp_dataset* ds, char* out, size_t out_size) {
  return guarded([&] {
    require(ds && out, "null argument");
    require(out_size >= 65, "fingerprint buffer needs 65 bytes");
    const std::string hex = featprior::to_hex(featprior::dataset_fingerprint(ds->value));
    std::memcpy(out, hex.c_str(), hex.size() + 1);
  });
}

void fp_dataset_free(fp_dataset* ds) { delete ds; }

fp_status fp_model_init(size_t input_width, const size_t* hidden_widths, size_t hidden_count, const char* activation,
                        size_t classes, uint64_t seed, fp_model** out) {
  return guarded([&] {
    require(out && (hidden_widths || hidden_count == 0), "null argument");
    const std::vector<std::size_t> widths(hidden_widths, hidden_widths + hidden_count);
    const auto act = featprior::parse_activation(activation ? activation : "relu");
    const auto spec = featprior::NetworkSpec::dense(input_width, widths, act, classes);
    *out = new fp_model{featprior::init_params(spec, seed)};
  });
}

fp_status fp_model_load(const char* path, fp_model** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new fp_model{featprior::load_model(path)};
  });
}

fp_status fp_model_save(const fp_model* model, const char* path) {
  return guarded([&] {
    require(model && path, "null argument");
    featprior::save_model(model->value, path);
  });
}

size_t fp_model_input_width(const fp_model* model) { return model ? model->value.spec().input_width : 0; }
size_t fp_model_hidden_count(const fp_model* model) { return model ? model->value.spec().hidden_count() : 0; }
size_t fp_model_classes(const fp_model* model) { return model ? model->value.spec().classes : 0; }

size_t fp_model_layer_width(const fp_model* model, size_t layer) {
  if (!model) return 0;
  const auto& spec = model->value.spec();
  if (layer < spec.hidden_count()) return spec.hidden[layer].output_width;
  return layer == spec.hidden_count() ? spec.classes : 0;
}

fp_status fp_model_forward(const fp_model* model, const double* inputs, size_t n, size_t dims, double* logits,
                           size_t logits_len) {
  return guarded([&] {
    require(model && logits, "null argument");
    const auto record = featprior::forward(model->value, copy_matrix(inputs, n, dims));
    const auto values = record.logits.values();
    if (logits_len < values.size()) {
      throw featprior::Error(featprior::ErrorCode::DimensionMismatch,
                             "logits buffer holds " + std::to_string(logits_len) + " but " +
                                 std::to_string(values.size()) + " are needed");
    }
    std::memcpy(logits, values.data(), values.size() * sizeof(double));
  });
}

void fp_model_free(fp_model* model) { delete model; }

fp_status fp_evaluate(const fp_model* model, const fp_dataset* ds, size_t k, fp_metrics* out) {
  return guarded([&] {
    require(model && ds && out, "null argument");
    require(k >= 1, "k must be >= 1");
    const std::size_t ks[] = {k};
    const auto report = featprior::evaluate(model->value, ds->value, ks);
    *out = fp_metrics{report.accuracy, report.top_k.at(k), report.f1_micro, report.f1_macro};
  });
}

fp_status fp_extract_features(const fp_model* teacher, const fp_dataset* ds, const size_t* layers, size_t layer_count,
                              fp_feature_cache** out) {
  return guarded([&] {
    require(teacher && ds && out && (layers || layer_count == 0), "null argument");
    const std::vector<std::size_t> ids(layers, layers + layer_count);
    *out = new fp_feature_cache{featprior::extract_features(teacher->value, ds->value, ids)};
  });
}

fp_status fp_cache_write(const fp_feature_cache* cache, const char* path) {
  return guarded([&] {
    require(cache && path, "null argument");
    featprior::write_cache(path, cache->value);
  });
}

fp_status fp_cache_read(const char* path, const fp_dataset* expect_dataset, const fp_model* expect_teacher,
                        fp_feature_cache** out) {
  return guarded([&] {
    require(path && out, "null argument");
    std::optional<featprior::Fingerprint> dfp, tfp;
    if (expect_dataset) dfp = featprior::dataset_fingerprint(expect_dataset->value);
    if (expect_teacher) tfp = featprior::model_fingerprint(expect_teacher->value);
    *out = new fp_feature_cache{featprior::read_cache(path, dfp, tfp)};
  });
}

size_t fp_cache_group_count(const fp_feature_cache* cache) { return cache ? cache->value.groups.size() : 0; }
size_t fp_cache_rows(const fp_feature_cache* cache) { return cache ? cache->value.rows() : 0; }
void fp_cache_free(fp_feature_cache* cache) { delete cache; }

fp_prior_options fp_prior_options_default(void) {
  const featprior::PriorConfig c;
  return fp_prior_options{c.alpha, c.jitter, c.normalize_by_width ? 1 : 0, c.temperature};
}

fp_status fp_gp_kl(const double* student, size_t n, size_t p_student, const double* teacher, size_t p_teacher,
                   const fp_prior_options* options, double* out) {
  return guarded([&] {
    require(out, "null argument");
    const auto config = to_config(options);
    const featprior::FeatureMatrix s(copy_matrix(student, n, p_student));
    const featprior::FeatureMatrix t(copy_matrix(teacher, n, p_teacher));
    *out = featprior::gp_kl(featprior::gram_kernel(s, config), featprior::gram_kernel(t, config));
  });
}

fp_status fp_prior_log_density(const double* student, size_t n, size_t p_student, const double* teacher,
                               size_t p_teacher, const fp_prior_options* options, double* out) {
  return guarded([&] {
    require(out, "null argument");
    const auto config = to_config(options);
    const featprior::FeatureMatrix s(copy_matrix(student, n, p_student));
    const featprior::FeatureMatrix t(copy_matrix(teacher, n, p_teacher));
    *out = featprior::prior_log_density(s, t, config);
  });
}

fp_status fp_hinton_soft_target(const double* logits_student, const double* logits_teacher, size_t n, size_t classes,
                                double temperature, double* out) {
  return guarded([&] {
    require(out, "null argument");
    *out = featprior::hinton_soft_target(copy_matrix(logits_student, n, classes),
                                         copy_matrix(logits_teacher, n, classes), temperature);
  });
}

fp_status fp_run_command(const fp_command_options* options) {
  return guarded([&] {
    require(options && options->command && options->config_path, "command and config_path are required");
    featprior::harness::CommandOptions o;
    o.command = options->command;
    o.config = options->config_path;
    o.out = options->out_dir ? options->out_dir : ".";
    if (options->model_path) o.model = std::filesystem::path(options->model_path);
    if (options->has_seed_override) o.seed_override = options->seed_override;
    o.jobs = options->jobs == 0 ? 1 : options->jobs;
    if (options->log) {
      const fp_log_fn fn = options->log;
      void* user = options->log_user;
      o.log = [fn, user](const std::string& line) { fn(line.c_str(), user); };
    }
    featprior::harness::run_command(o);
  });
}

}  // extern "C"
