#ifndef NANOFLOW_H
#define NANOFLOW_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define NF_API __declspec(dllexport)
#else
#define NF_API __attribute__((visibility("default")))
#endif

/* Status codes. Non-zero values double as CLI exit codes. */
typedef enum nf_status {
  NF_OK = 0,
  NF_ERR_INTERNAL = 1,
  NF_ERR_CONFIG = 2,
  NF_ERR_NUMERICAL = 3,
  NF_ERR_IO = 4
} nf_status;

typedef enum nf_log_level {
  NF_LOG_QUIET = 0,
  NF_LOG_WARN = 1,
  NF_LOG_INFO = 2,
  NF_LOG_DEBUG = 3
} nf_log_level;

/* Holds the run configuration, settings and the last error message. Not
 * thread safe; use one context per thread. */
typedef struct nf_context nf_context;

/* A loaded set of fold checkpoints. */
typedef struct nf_ensemble nf_ensemble;

NF_API const char* nf_version(void);

NF_API nf_status nf_context_create(nf_context** out);
NF_API void nf_context_destroy(nf_context* ctx);

/* Message of the most recent failure on this context, "" after success. */
NF_API const char* nf_last_error(const nf_context* ctx);

/* Worker threads for every later call; <= 0 selects the hardware count. */
NF_API nf_status nf_set_threads(nf_context* ctx, int threads);
NF_API nf_status nf_set_log_level(nf_context* ctx, nf_log_level level);

/* Replaces the configuration with a JSON file or string. Relative paths in a
 * file are resolved against its directory. */
NF_API nf_status nf_config_load_file(nf_context* ctx, const char* path);
NF_API nf_status nf_config_load_string(nf_context* ctx, const char* json);

/* Sets one dotted key, e.g. ("training.epochs", "10"). The value is parsed as
 * JSON when possible and used as a string otherwise. */
NF_API nf_status nf_config_set(nf_context* ctx, const char* key, const char* value);

/* Validates the current configuration without running anything. */
NF_API nf_status nf_config_validate(nf_context* ctx);

/* Bulk optical properties of the configured distribution; writes
 * optical_properties.csv style output to out_csv. */
NF_API nf_status nf_run_mie(nf_context* ctx, const char* out_csv);

/* Monte Carlo spectrum of the configured slab; writes outputs.csv style
 * output. Uses paths.optical_properties when set, Mie otherwise. */
NF_API nf_status nf_run_simulate(nf_context* ctx, const char* out_csv);

typedef struct nf_generate_summary {
  size_t generated;
  size_t skipped;
  size_t failed;
} nf_generate_summary;

/* Generates (or resumes) the configured sweep into dataset_dir. summary may
 * be NULL. Returns NF_ERR_NUMERICAL when any record failed. */
NF_API nf_status nf_run_gen_data(nf_context* ctx, const char* dataset_dir, nf_generate_summary* summary);

/* Cross-validated training. Writes fold_k.ckpt.json, fold_k.trace.csv,
 * baseline.ckpt.json and cv_summary.json into checkpoint_dir. */
NF_API nf_status nf_run_train(nf_context* ctx, const char* dataset_dir, const char* checkpoint_dir);

/* Ensemble prediction for a record folder. Writes prediction.csv and, when
 * enabled, plot_{R,A,T}.svg/.csv into out_dir. */
NF_API nf_status nf_run_predict(nf_context* ctx, const char* checkpoint_dir, const char* record_dir,
                                const char* out_dir);

/* Out-of-fold validation NLL, baseline comparison and interval coverage;
 * writes metrics.json. */
NF_API nf_status nf_run_evaluate(nf_context* ctx, const char* checkpoint_dir, const char* dataset_dir,
                                 const char* metrics_path);

/* Lorenz-Mie efficiencies of one sphere: out = {q_ext, q_sca, q_abs, g}. */
NF_API nf_status nf_mie_single(nf_context* ctx, double size_parameter, double m_re, double m_im, double out[4]);

NF_API nf_status nf_ensemble_load(nf_context* ctx, const char* checkpoint_dir, nf_ensemble** out);
NF_API void nf_ensemble_destroy(nf_ensemble* ensemble);
NF_API size_t nf_ensemble_fold_count(const nf_ensemble* ensemble);
NF_API size_t nf_ensemble_feature_dim(const nf_ensemble* ensemble);
NF_API size_t nf_ensemble_target_dim(const nf_ensemble* ensemble);

/* Pooled posterior for one raw feature vector of length feature_dim. Each
 * output array has target_dim entries; ci_low/ci_high may be NULL. */
NF_API nf_status nf_ensemble_predict(nf_context* ctx, const nf_ensemble* ensemble, const double* features,
                                     size_t feature_count, size_t samples_per_model, uint64_t seed, double* mean,
                                     double* std, double* ci_low, double* ci_high);

#ifdef __cplusplus
}
#endif

#endif
