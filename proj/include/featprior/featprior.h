/* C interface to featprior. Every call returns an fp_status; on failure the
 * message is available from fp_last_error() on the same thread. Handles are
 * opaque and owned by the caller until passed to the matching *_free. */
#ifndef FEATPRIOR_FEATPRIOR_H
#define FEATPRIOR_FEATPRIOR_H

#include <stddef.h>
#include <stdint.h>

#if defined(FEATPRIOR_BUILDING_LIBRARY)
#define FP_API __attribute__((visibility("default")))
#else
#define FP_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fp_status {
  FP_OK = 0,
  FP_INVALID_ARGUMENT,
  FP_DIMENSION_MISMATCH,
  FP_NOT_SYMMETRIC,
  FP_NOT_POSITIVE_DEFINITE,
  FP_FACTORIZATION_FAILED,
  FP_LABEL_OUT_OF_RANGE,
  FP_NOT_SCALAR_LOSS,
  FP_NON_FINITE_ACTIVATION,
  FP_NON_FINITE_GRADIENT,
  FP_DIVERGED_TRAINING,
  FP_BATCH_MISMATCH,
  FP_BATCH_TOO_SMALL,
  FP_LAYER_OUT_OF_RANGE,
  FP_ALL_LAYERS_FROZEN,
  FP_EMPTY_EXPERT_SET,
  FP_BAD_MAGIC,
  FP_TRUNCATED_FILE,
  FP_COUNT_MISMATCH,
  FP_RAGGED_ROWS,
  FP_NON_NUMERIC_CELL,
  FP_UNKNOWN_LABEL_COLUMN,
  FP_FINGERPRINT_MISMATCH,
  FP_CORRUPT_FILE,
  FP_IO_ERROR,
  FP_CONFIG_ERROR,
  FP_INTERNAL_ERROR
} fp_status;

typedef struct fp_dataset fp_dataset;
typedef struct fp_model fp_model;
typedef struct fp_feature_cache fp_feature_cache;

FP_API const char* fp_version(void);
FP_API const char* fp_status_name(fp_status status);
/* Message of the last failed call on this thread, "" if none. */
FP_API const char* fp_last_error(void);
/* 0 success, 1 user or config error, 2 numerical failure. */
FP_API int fp_exit_code(fp_status status);

/* Datasets. Inputs are row-major n x dims doubles. */
FP_API fp_status fp_dataset_load_idx(const char* images_path, const char* labels_path, fp_dataset** out);
FP_API fp_status fp_dataset_load_csv(const char* path, const char* label_column, fp_dataset** out);
FP_API fp_status fp_dataset_synth_rings(size_t n_per_class, size_t classes, double noise, uint64_t seed,
                                        fp_dataset** out);
FP_API fp_status fp_dataset_synth_blobs(size_t n_per_class, size_t classes, size_t dim, double separation,
                                        uint64_t seed, fp_dataset** out);
FP_API fp_status fp_dataset_from_arrays(const double* inputs, const size_t* labels, size_t n, size_t dims,
                                        size_t class_count, fp_dataset** out);
FP_API size_t fp_dataset_size(const fp_dataset* ds);
FP_API size_t fp_dataset_dims(const fp_dataset* ds);
FP_API size_t fp_dataset_classes(const fp_dataset* ds);
/* Hex SHA-256 of the dataset contents; `out` must hold 65 bytes. */
FP_API fp_status fp_dataset_fingerprint(const fp_dataset* ds, char* out, size_t out_size);
FP_API void fp_dataset_free(fp_dataset* ds);

/* Models. */
FP_API fp_status fp_model_init(size_t input_width, const size_t* hidden_widths, size_t hidden_count,
                               const char* activation, size_t classes, uint64_t seed, fp_model** out);
FP_API fp_status fp_model_load(const char* path, fp_model** out);
FP_API fp_status fp_model_save(const fp_model* model, const char* path);
FP_API size_t fp_model_input_width(const fp_model* model);
FP_API size_t fp_model_hidden_count(const fp_model* model);
FP_API size_t fp_model_classes(const fp_model* model);
/* Width of hidden layer `layer`; layer == hidden_count gives the class count. */
FP_API size_t fp_model_layer_width(const fp_model* model, size_t layer);
/* Writes n x classes logits into `logits`, which must hold `logits_len` doubles. */
FP_API fp_status fp_model_forward(const fp_model* model, const double* inputs, size_t n, size_t dims,
                                  double* logits, size_t logits_len);
FP_API void fp_model_free(fp_model* model);

typedef struct fp_metrics {
  double accuracy;
  double top_k; /* at the requested k */
  double f1_micro;
  double f1_macro;
} fp_metrics;

FP_API fp_status fp_evaluate(const fp_model* model, const fp_dataset* ds, size_t k, fp_metrics* out);

/* Feature caches. */
FP_API fp_status fp_extract_features(const fp_model* teacher, const fp_dataset* ds, const size_t* layers,
                                     size_t layer_count, fp_feature_cache** out);
FP_API fp_status fp_cache_write(const fp_feature_cache* cache, const char* path);
/* Fingerprint checks are skipped when the matching pointer is NULL. */
FP_API fp_status fp_cache_read(const char* path, const fp_dataset* expect_dataset, const fp_model* expect_teacher,
                               fp_feature_cache** out);
FP_API size_t fp_cache_group_count(const fp_feature_cache* cache);
FP_API size_t fp_cache_rows(const fp_feature_cache* cache);
FP_API void fp_cache_free(fp_feature_cache* cache);

/* Kernel distances on raw n x p feature matrices (row-major). */
typedef struct fp_prior_options {
  double alpha;
  double jitter;
  int normalize_by_width;
  double temperature;
} fp_prior_options;

FP_API fp_prior_options fp_prior_options_default(void);
FP_API fp_status fp_gp_kl(const double* student, size_t n, size_t p_student, const double* teacher, size_t p_teacher,
                          const fp_prior_options* options, double* out);
FP_API fp_status fp_prior_log_density(const double* student, size_t n, size_t p_student, const double* teacher,
                                      size_t p_teacher, const fp_prior_options* options, double* out);
FP_API fp_status fp_hinton_soft_target(const double* logits_student, const double* logits_teacher, size_t n,
                                       size_t classes, double temperature, double* out);

/* Experiment commands: train-teacher, extract-features, distill, evaluate, compare. */
typedef void (*fp_log_fn)(const char* line, void* user);

typedef struct fp_command_options {
  const char* command;
  const char* config_path;
  const char* out_dir;    /* NULL means "." */
  const char* model_path; /* evaluate only; may be NULL */
  int has_seed_override;
  uint64_t seed_override;
  size_t jobs; /* 0 treated as 1 */
  fp_log_fn log;
  void* log_user;
} fp_command_options;

FP_API fp_status fp_run_command(const fp_command_options* options);

#ifdef __cplusplus
}
#endif

#endif
