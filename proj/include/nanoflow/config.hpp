#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nanoflow/dataset.hpp"
#include "nanoflow/mie.hpp"
#include "nanoflow/training.hpp"
#include "nanoflow/transport.hpp"

namespace nanoflow::config {

struct PredictSettings {
  std::size_t samples_per_model = 10000;
  std::uint64_t seed = 1;
  bool plots = true;
};

struct EvaluateSettings {
  std::size_t samples_per_model = 1000;  ///< per record, for the coverage estimate
  std::uint64_t seed = 1;
};

/// Optional default locations; relative entries are resolved against the
/// directory of the configuration file.
struct Paths {
  std::filesystem::path dataset;
  std::filesystem::path checkpoints;
  std::filesystem::path output;
  std::filesystem::path optical_properties;  ///< CSV used by `simulate` instead of Mie
  std::filesystem::path input;               ///< record folder or feature CSV for `predict`
};

/// One run-configuration file. Every section is optional; commands check
/// for the parts they need.
struct RunConfig {
  std::filesystem::path source;  ///< file the configuration came from, if any
  mie::Materials materials;
  std::vector<double> wavelengths;  ///< [m]
  std::optional<mie::ParticleSizeDistribution> distribution;
  transport::SlabGeometry slab;
  transport::SimulationConfig simulation;
  std::optional<dataset::SweepConfig> sweep;
  training::TrainConfig training;
  PredictSettings predict;
  EvaluateSettings evaluate;
  Paths paths;

  const std::vector<double>& require_wavelengths() const;
  const mie::ParticleSizeDistribution& require_distribution() const;
  const dataset::SweepConfig& require_sweep() const;
};

/// Parses a configuration document. Unknown keys anywhere are rejected with
/// their dotted path. `base_dir` anchors relative paths.
RunConfig parse(const std::string& json_text, const std::filesystem::path& base_dir = {});
RunConfig load(const std::filesystem::path& path);

/// Sets `dotted.key` in a JSON document to `value`, which is parsed as JSON
/// when possible and taken as a string otherwise. Intermediate objects are
/// created as needed.
std::string with_override(const std::string& json_text, const std::string& dotted_key, const std::string& value);

}  // namespace nanoflow::config
