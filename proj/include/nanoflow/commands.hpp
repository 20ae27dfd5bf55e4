#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "nanoflow/config.hpp"
#include "nanoflow/dataset.hpp"
#include "nanoflow/ensemble.hpp"

// Whole-pipeline steps behind the command-line subcommands.
namespace nanoflow::commands {

/// Writes optical_properties.csv for the configured distribution and grid.
mie::BulkOpticalProperties run_mie(const config::RunConfig& rc, const std::filesystem::path& out_csv);

/// Writes outputs.csv for the configured slab.
transport::SpectralResponse run_simulate(const config::RunConfig& rc, const std::filesystem::path& out_csv);

dataset::GenerateSummary run_gen_data(const config::RunConfig& rc, const std::filesystem::path& dataset_dir);

struct TrainSummary {
  std::vector<double> val_nll;
  std::vector<double> val_nll_raw;
  double baseline_val_mse = 0.0;
};

/// Cross-validation plus the fold-0 baseline; writes cv_summary.json.
TrainSummary run_train(const config::RunConfig& rc, const std::filesystem::path& dataset_dir,
                       const std::filesystem::path& checkpoint_dir);

struct PredictResult {
  std::string id;
  ensemble::SpectralSummary spectra;
  std::optional<dataset::SpectralTriplet> truth;
  std::array<double, 3> rmse{};  ///< per channel, NaN without truth
  double ci_hit_fraction = 0.0;  ///< over all (channel, wavelength) points, NaN without truth
};

/// `input` is a record folder or a dataset root. A record writes
/// prediction.csv, summary.json and plots into out_dir; a dataset writes one
/// such folder per record under out_dir.
std::vector<PredictResult> run_predict(const config::RunConfig& rc, const std::filesystem::path& checkpoint_dir,
                                       const std::filesystem::path& input, const std::filesystem::path& out_dir);

/// Writes metrics.json and returns its text.
std::string run_evaluate(const config::RunConfig& rc, const std::filesystem::path& checkpoint_dir,
                         const std::filesystem::path& dataset_dir, const std::filesystem::path& metrics_path);

}  // namespace nanoflow::commands
