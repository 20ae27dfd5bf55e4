// Command-line front end. Talks to the library only through nanoflow.h.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nanoflow/nanoflow.h"

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<int> threads;
  bool quiet = false;
  bool verbose = false;
};

/// Overrides collected from subcommand flags, applied after the config file
/// and --set entries so that flags win.
using Overrides = std::vector<std::pair<std::string, std::string>>;

std::optional<nf_log_level> parse_level(const std::string& s) {
  if (s == "quiet" || s == "0") return NF_LOG_QUIET;
  if (s == "warn" || s == "1") return NF_LOG_WARN;
  if (s == "info" || s == "2") return NF_LOG_INFO;
  if (s == "debug" || s == "3") return NF_LOG_DEBUG;
  return std::nullopt;
}

class Session {
 public:
  Session() {
    if (nf_context_create(&ctx_) != NF_OK) {
      std::fprintf(stderr, "error: cannot create library context\n");
      std::exit(1);
    }
  }
  ~Session() { nf_context_destroy(ctx_); }
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  nf_context* get() const { return ctx_; }

  /// Prints the library's message on failure and returns the status.
  int check(nf_status s) const {
    if (s != NF_OK) std::fprintf(stderr, "error: %s\n", nf_last_error(ctx_));
    return static_cast<int>(s);
  }

 private:
  nf_context* ctx_ = nullptr;
};

int configure(Session& session, const Common& common, const Overrides& flags) {
  nf_context* ctx = session.get();

  nf_log_level level = NF_LOG_INFO;
  if (const char* env = std::getenv("NANOFLOW_LOG_LEVEL")) {
    const auto parsed = parse_level(env);
    if (!parsed) {
      std::fprintf(stderr, "error: NANOFLOW_LOG_LEVEL must be quiet, warn, info or debug\n");
      return NF_ERR_CONFIG;
    }
    level = *parsed;
  }
  if (common.quiet) level = NF_LOG_QUIET;
  if (common.verbose) level = NF_LOG_DEBUG;
  if (int rc = session.check(nf_set_log_level(ctx, level))) return rc;

  int threads = 0;
  if (const char* env = std::getenv("NANOFLOW_THREADS")) {
    try {
      threads = std::stoi(env);
    } catch (const std::exception&) {
      std::fprintf(stderr, "error: NANOFLOW_THREADS must be an integer\n");
      return NF_ERR_CONFIG;
    }
  }
  if (common.threads) threads = *common.threads;
  if (int rc = session.check(nf_set_threads(ctx, threads))) return rc;

  if (!common.config.empty()) {
    if (int rc = session.check(nf_config_load_file(ctx, common.config.c_str()))) return rc;
  }
  for (const std::string& kv : common.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::fprintf(stderr, "error: --set expects KEY=VALUE, got '%s'\n", kv.c_str());
      return NF_ERR_CONFIG;
    }
    if (int rc = session.check(nf_config_set(ctx, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()))) return rc;
  }
  for (const auto& [k, v] : flags) {
    if (int rc = session.check(nf_config_set(ctx, k.c_str(), v.c_str()))) return rc;
  }
  return session.check(nf_config_validate(ctx));
}

template <class T>
void flag_override(Overrides& out, const std::optional<T>& v, const char* key) {
  if (v) out.emplace_back(key, std::to_string(*v));
}

const char* c_or_null(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

/// JSON string literal for an override value.
std::string json_string(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

std::string real_text(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mie + Monte Carlo spectral simulation and conditional normalizing-flow surrogate training"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(nf_version()));

  Common common;
  app.add_option("-c,--config", common.config, "Run configuration file (JSON)")->check(CLI::ExistingFile);
  app.add_option("--set", common.sets, "Override a configuration key, KEY=VALUE with a dotted key (repeatable)");
  app.add_option("--threads", common.threads,
                 "Worker threads (default: NANOFLOW_THREADS or all cores); results do not depend on it");
  auto* quiet = app.add_flag("-q,--quiet", common.quiet, "Only print errors");
  app.add_flag("-v,--verbose", common.verbose, "Print debug log lines")->excludes(quiet);
  app.fallthrough();

  Overrides flags;
  std::string out, input, dataset_dir, checkpoints, optics;
  std::optional<std::uint64_t> photons, seed, samples;
  std::optional<int> epochs, folds, batch_size, log_every;
  std::optional<double> lr;
  bool no_plots = false;

  auto* mie = app.add_subcommand("mie", "Bulk optical properties (mu_a, mu_s, g) of the configured particles");
  mie->add_option("-o,--out", out, "Output CSV (default: paths.output)");

  auto* sim = app.add_subcommand("simulate", "Monte Carlo reflectance, absorbance and transmittance spectrum");
  sim->add_option("-o,--out", out, "Output CSV (default: paths.output)");
  sim->add_option("--optics", optics, "Optical properties CSV to use instead of Mie")->check(CLI::ExistingFile);
  sim->add_option("--photons", photons, "Photons per wavelength");
  sim->add_option("--seed", seed, "Base random seed");

  auto* gen = app.add_subcommand("gen-data", "Generate or resume the configured parameter sweep");
  gen->add_option("-o,--out", dataset_dir, "Dataset directory (default: paths.dataset)");
  gen->add_option("--photons", photons, "Photons per wavelength");
  gen->add_option("--seed", seed, "Base random seed");

  auto* train = app.add_subcommand("train", "K-fold cross-validated training of the flow and the baseline");
  train->add_option("-d,--dataset", dataset_dir, "Dataset directory (default: paths.dataset)");
  train->add_option("-o,--out", checkpoints, "Checkpoint directory (default: paths.checkpoints)");
  train->add_option("--epochs", epochs, "Training epochs per fold");
  train->add_option("--folds", folds, "Number of cross-validation folds");
  train->add_option("--lr", lr, "Adam learning rate");
  train->add_option("--batch-size", batch_size, "Mini-batch size");
  train->add_option("--log-every", log_every, "Epochs between validation log lines");
  train->add_option("--seed", seed, "Training seed");

  auto* predict = app.add_subcommand("predict", "Ensemble posterior for a record folder or a whole dataset");
  predict->add_option("-m,--checkpoints", checkpoints, "Checkpoint directory (default: paths.checkpoints)");
  predict->add_option("-i,--input", input, "Record folder or dataset directory (default: paths.input)");
  predict->add_option("-o,--out", out, "Output directory (default: paths.output)");
  predict->add_option("--samples", samples, "Samples drawn per fold model");
  predict->add_option("--seed", seed, "Sampling seed");
  predict->add_flag("--no-plots", no_plots, "Skip the SVG plots");

  auto* eval = app.add_subcommand("evaluate", "Validation NLL per fold, baseline comparison and interval coverage");
  eval->add_option("-m,--checkpoints", checkpoints, "Checkpoint directory (default: paths.checkpoints)");
  eval->add_option("-d,--dataset", dataset_dir, "Dataset the checkpoints were trained on (default: paths.dataset)");
  eval->add_option("-o,--out", out, "metrics.json path (default: paths.output)");
  eval->add_option("--samples", samples, "Samples per fold model for the coverage estimate");
  eval->add_option("--seed", seed, "Sampling seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return NF_ERR_CONFIG;
  }

  if (*sim || *gen) {
    flag_override(flags, photons, "simulation.n_photons");
    flag_override(flags, seed, "simulation.seed");
  }
  if (!optics.empty()) {
    flags.emplace_back("paths.optical_properties", json_string(std::filesystem::absolute(optics).string()));
  }
  if (*train) {
    flag_override(flags, epochs, "training.epochs");
    flag_override(flags, folds, "training.folds");
    flag_override(flags, batch_size, "training.batch_size");
    flag_override(flags, log_every, "training.log_every");
    flag_override(flags, seed, "training.seed");
    if (lr) flags.emplace_back("training.learning_rate", real_text(*lr));
  }
  if (*predict) {
    flag_override(flags, samples, "predict.samples_per_model");
    flag_override(flags, seed, "predict.seed");
    if (no_plots) flags.emplace_back("predict.plots", "false");
  }
  if (*eval) {
    flag_override(flags, samples, "evaluate.samples_per_model");
    flag_override(flags, seed, "evaluate.seed");
  }

  Session session;
  nf_context* ctx = session.get();
  if (int rc = configure(session, common, flags)) return rc;

  if (*mie) return session.check(nf_run_mie(ctx, c_or_null(out)));
  if (*sim) return session.check(nf_run_simulate(ctx, c_or_null(out)));
  if (*gen) {
    nf_generate_summary summary{};
    const int rc = session.check(nf_run_gen_data(ctx, c_or_null(dataset_dir), &summary));
    if (!common.quiet) {
      std::fprintf(stderr, "generated=%zu skipped=%zu failed=%zu\n", summary.generated, summary.skipped,
                   summary.failed);
    }
    return rc;
  }
  if (*train) return session.check(nf_run_train(ctx, c_or_null(dataset_dir), c_or_null(checkpoints)));
  if (*predict) return session.check(nf_run_predict(ctx, c_or_null(checkpoints), c_or_null(input), c_or_null(out)));
  if (*eval) return session.check(nf_run_evaluate(ctx, c_or_null(checkpoints), c_or_null(dataset_dir), c_or_null(out)));
  return NF_ERR_CONFIG;
}
