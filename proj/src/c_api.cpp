#include "nanoflow/nanoflow.h"

#include <exception>
#include <memory>
#include <new>
#include <string>

#include "io.hpp"
#include "nanoflow/commands.hpp"
#include "nanoflow/config.hpp"
#include "nanoflow/ensemble.hpp"
#include "nanoflow/error.hpp"
#include "nanoflow/log.hpp"
#include "nanoflow/mie.hpp"
#include "nanoflow/parallel.hpp"

#ifndef NANOFLOW_VERSION
#define NANOFLOW_VERSION "0.0.0"
#endif

struct nf_context {
  std::string config_text = "{}";
  std::filesystem::path base_dir;
  std::filesystem::path source;
  int threads = 0;
  nf_log_level level = NF_LOG_INFO;
  std::string last_error;
};

struct nf_ensemble {
  std::vector<nanoflow::training::Checkpoint> checkpoints;
};

namespace {

using namespace nanoflow;

nf_status to_status(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config: return NF_ERR_CONFIG;
    case ErrorKind::Numerical: return NF_ERR_NUMERICAL;
    case ErrorKind::Io: return NF_ERR_IO;
  }
  return NF_ERR_INTERNAL;
}

/// Runs `body` with the context's process settings applied and converts
/// exceptions into a status plus message.
template <class F>
nf_status guarded(nf_context* ctx, F&& body) {
  if (ctx == nullptr) return NF_ERR_CONFIG;
  ctx->last_error.clear();
  try {
    set_default_threads(ctx->threads);
    log::set_level(static_cast<log::Level>(ctx->level));
    return body();
  } catch (const Error& e) {
    ctx->last_error = e.what();
    return to_status(e.kind());
  } catch (const std::bad_alloc&) {
    ctx->last_error = "out of memory";
    return NF_ERR_INTERNAL;
  } catch (const std::exception& e) {
    ctx->last_error = e.what();
    return NF_ERR_INTERNAL;
  }
}

config::RunConfig current(const nf_context* ctx) {
  config::RunConfig rc = config::parse(ctx->config_text, ctx->base_dir);
  rc.source = ctx->source;
  return rc;
}

std::filesystem::path path_or(const char* p, const std::filesystem::path& fallback) {
  return p != nullptr && *p != '\0' ? std::filesystem::path(p) : fallback;
}

}  // namespace

extern "C" {

const char* nf_version(void) { return NANOFLOW_VERSION; }

nf_status nf_context_create(nf_context** out) {
  if (out == nullptr) return NF_ERR_CONFIG;
  *out = new (std::nothrow) nf_context();
  return *out != nullptr ? NF_OK : NF_ERR_INTERNAL;
}

void nf_context_destroy(nf_context* ctx) { delete ctx; }

const char* nf_last_error(const nf_context* ctx) { return ctx != nullptr ? ctx->last_error.c_str() : "null context"; }

nf_status nf_set_threads(nf_context* ctx, int threads) {
  return guarded(ctx, [&] {
    ctx->threads = threads;
    return NF_OK;
  });
}

nf_status nf_set_log_level(nf_context* ctx, nf_log_level level) {
  return guarded(ctx, [&] {
    if (level < NF_LOG_QUIET || level > NF_LOG_DEBUG) throw domain_error("log level out of range");
    ctx->level = level;
    return NF_OK;
  });
}

nf_status nf_config_load_file(nf_context* ctx, const char* path) {
  return guarded(ctx, [&] {
    if (path == nullptr) throw domain_error("config path is null");
    std::string text;
    try {
      text = io::read_text(path);
    } catch (const Error&) {
      throw domain_error(std::string("config: cannot read ") + path);
    }
    config::parse(text, std::filesystem::path(path).parent_path());
    ctx->config_text = std::move(text);
    ctx->source = path;
    ctx->base_dir = std::filesystem::path(path).parent_path();
    return NF_OK;
  });
}

nf_status nf_config_load_string(nf_context* ctx, const char* json) {
  return guarded(ctx, [&] {
    if (json == nullptr) throw domain_error("config text is null");
    config::parse(json);
    ctx->config_text = json;
    ctx->source.clear();
    ctx->base_dir.clear();
    return NF_OK;
  });
}

nf_status nf_config_set(nf_context* ctx, const char* key, const char* value) {
  return guarded(ctx, [&] {
    if (key == nullptr || value == nullptr) throw domain_error("override key or value is null");
    ctx->config_text = config::with_override(ctx->config_text, key, value);
    return NF_OK;
  });
}

nf_status nf_config_validate(nf_context* ctx) {
  return guarded(ctx, [&] {
    current(ctx);
    return NF_OK;
  });
}

nf_status nf_run_mie(nf_context* ctx, const char* out_csv) {
  return guarded(ctx, [&] {
    const config::RunConfig rc = current(ctx);
    commands::run_mie(rc, path_or(out_csv, rc.paths.output));
    return NF_OK;
  });
}

nf_status nf_run_simulate(nf_context* ctx, const char* out_csv) {
  return guarded(ctx, [&] {
    const config::RunConfig rc = current(ctx);
    commands::run_simulate(rc, path_or(out_csv, rc.paths.output));
    return NF_OK;
  });
}

nf_status nf_run_gen_data(nf_context* ctx, const char* dataset_dir, nf_generate_summary* summary) {
  return guarded(ctx, [&] {
    const config::RunConfig rc = current(ctx);
    const dataset::GenerateSummary s = commands::run_gen_data(rc, path_or(dataset_dir, rc.paths.dataset));
    if (summary != nullptr) *summary = {s.generated, s.skipped, s.failed};
    if (s.failed > 0) {
      throw numerical_error(std::to_string(s.failed) + " record(s) failed; rerun to retry them");
    }
    return NF_OK;
  });
}

nf_status nf_run_train(nf_context* ctx, const char* dataset_dir, const char* checkpoint_dir) {
  return guarded(ctx, [&] {
    const config::RunConfig rc = current(ctx);
    commands::run_train(rc, path_or(dataset_dir, rc.paths.dataset), path_or(checkpoint_dir, rc.paths.checkpoints));
    return NF_OK;
  });
}

nf_status nf_run_predict(nf_context* ctx, const char* checkpoint_dir, const char* record_dir, const char* out_dir) {
  return guarded(ctx, [&] {
    const config::RunConfig rc = current(ctx);
    commands::run_predict(rc, path_or(checkpoint_dir, rc.paths.checkpoints), path_or(record_dir, rc.paths.input),
                          path_or(out_dir, rc.paths.output));
    return NF_OK;
  });
}

nf_status nf_run_evaluate(nf_context* ctx, const char* checkpoint_dir, const char* dataset_dir,
                          const char* metrics_path) {
  return guarded(ctx, [&] {
    const config::RunConfig rc = current(ctx);
    commands::run_evaluate(rc, path_or(checkpoint_dir, rc.paths.checkpoints), path_or(dataset_dir, rc.paths.dataset),
                           path_or(metrics_path, rc.paths.output));
    return NF_OK;
  });
}

nf_status nf_mie_single(nf_context* ctx, double x, double m_re, double m_im, double out[4]) {
  return guarded(ctx, [&] {
    if (out == nullptr) throw domain_error("output array is null");
    const mie::MieEfficiencies e = mie::mie_single(x, {m_re, m_im});
    out[0] = e.q_ext;
    out[1] = e.q_sca;
    out[2] = e.q_abs;
    out[3] = e.asymmetry_g;
    return NF_OK;
  });
}

nf_status nf_ensemble_load(nf_context* ctx, const char* checkpoint_dir, nf_ensemble** out) {
  return guarded(ctx, [&] {
    if (out == nullptr || checkpoint_dir == nullptr) throw domain_error("null argument");
    *out = nullptr;
    auto e = std::make_unique<nf_ensemble>();
    e->checkpoints = training::load_checkpoint_dir(checkpoint_dir);
    ensemble::check_compatible(e->checkpoints);
    *out = e.release();
    return NF_OK;
  });
}

void nf_ensemble_destroy(nf_ensemble* e) { delete e; }

size_t nf_ensemble_fold_count(const nf_ensemble* e) { return e != nullptr ? e->checkpoints.size() : 0; }

size_t nf_ensemble_feature_dim(const nf_ensemble* e) {
  return e != nullptr ? static_cast<size_t>(e->checkpoints.front().feature_dim()) : 0;
}

size_t nf_ensemble_target_dim(const nf_ensemble* e) {
  return e != nullptr ? static_cast<size_t>(e->checkpoints.front().target_dim()) : 0;
}

nf_status nf_ensemble_predict(nf_context* ctx, const nf_ensemble* e, const double* features, size_t feature_count,
                              size_t samples_per_model, uint64_t seed, double* mean, double* std, double* ci_low,
                              double* ci_high) {
  return guarded(ctx, [&] {
    if (e == nullptr || features == nullptr || mean == nullptr || std == nullptr) {
      throw domain_error("null argument");
    }
    const ensemble::PosteriorSummary p =
        ensemble::predict(e->checkpoints, std::span<const double>(features, feature_count), samples_per_model, seed);
    for (Eigen::Index j = 0; j < p.dim(); ++j) {
      mean[j] = p.mean(j);
      std[j] = p.std(j);
      if (ci_low != nullptr) ci_low[j] = p.ci_low(j);
      if (ci_high != nullptr) ci_high[j] = p.ci_high(j);
    }
    return NF_OK;
  });
}

}  // extern "C"
