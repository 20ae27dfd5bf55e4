#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "nanoflow/mie.hpp"
#include "nanoflow/transport.hpp"

namespace nanoflow::dataset {

inline constexpr int kFormatVersion = 1;

struct RecordMeta {
  std::uint64_t seed = 0;
  std::uint64_t n_photons = 0;
  std::string timestamp;
};

/// One simulation folder: the physical inputs, the Monte Carlo spectra and
/// provenance. `parameters` holds the sweep coordinates that produced it.
struct SimulationRecord {
  std::string id;
  mie::BulkOpticalProperties optics;
  mie::ParticleSizeDistribution distribution;
  transport::SlabGeometry geometry;
  std::map<std::string, double> parameters;
  transport::SpectralResponse outputs;
  RecordMeta meta;

  std::size_t n_wavelengths() const { return optics.size(); }
  std::size_t n_rho() const { return distribution.size(); }
  /// Same wavelength grid in inputs and outputs, valid arrays, non-empty id.
  void validate() const;
};

/// CSV bodies of optical_properties.csv and outputs.csv.
std::string optics_csv(const mie::BulkOpticalProperties& optics);
std::string outputs_csv(const transport::SpectralResponse& outputs);
mie::BulkOpticalProperties read_optics_csv(const std::filesystem::path& path);
transport::SpectralResponse read_outputs_csv(const std::filesystem::path& path);

std::filesystem::path write_record(const SimulationRecord& record, const std::filesystem::path& root);
SimulationRecord read_record(const std::filesystem::path& folder);

/// [mu_a(l1..ln) | mu_s(l1..ln) | g(l1..ln) | rho(bin1..bink)], length 3n + k.
std::vector<double> assemble_features(const SimulationRecord& record);
/// [R_total(l1..ln) | A(l1..ln) | T(l1..ln)], length 3n.
std::vector<double> assemble_targets(const SimulationRecord& record);

struct SpectralTriplet {
  std::vector<double> r_total;
  std::vector<double> absorbance;
  std::vector<double> transmittance;
};

/// Inverse of the target stacking.
SpectralTriplet split_targets(std::span<const double> targets, std::size_t n_wavelengths);

/// `dataset.json` at the dataset root.
struct Manifest {
  int format_version = kFormatVersion;
  std::vector<double> wavelengths;
  std::size_t n_rho = 0;
  std::size_t record_count = 0;
  std::vector<std::string> record_ids;

  std::size_t feature_dim() const { return 3 * wavelengths.size() + n_rho; }
  std::size_t target_dim() const { return 3 * wavelengths.size(); }
};

void write_manifest(const Manifest& manifest, const std::filesystem::path& root);
Manifest read_manifest(const std::filesystem::path& root);

struct Dataset {
  Manifest manifest;
  std::vector<SimulationRecord> records;  ///< ordered as manifest.record_ids

  /// Row-per-record matrices.
  Eigen::MatrixXd features() const;
  Eigen::MatrixXd targets() const;
};

/// Loads every record named in the manifest; all records must share the
/// manifest's wavelength grid and bin count.
Dataset load_dataset(const std::filesystem::path& root);

/// Parameter sweep: the cartesian product of the axis lists, enumerated with
/// the last axis varying fastest (median radius, sigma, volume fraction,
/// thickness).
struct SweepConfig {
  mie::Materials materials;
  std::vector<double> wavelengths;
  std::vector<double> bin_edges;  ///< fixed radius bins [m] shared by every record
  std::vector<double> median_radius;
  std::vector<double> sigma_ln;
  std::vector<double> volume_fraction;
  std::vector<double> thickness;
  transport::SlabGeometry geometry;  ///< indices; thickness is overridden per combination
  transport::SimulationConfig simulation;
  std::string id_prefix = "sim";
  std::string timestamp = "1970-01-01T00:00:00Z";

  std::size_t combinations() const;
  void validate() const;
};

/// Builds one record for combination `index` of the sweep (runs Mie and the
/// Monte Carlo).
SimulationRecord simulate_combination(const SweepConfig& sweep, std::size_t index);

struct GenerateSummary {
  std::size_t generated = 0;
  std::size_t skipped = 0;  ///< already present and valid
  std::size_t failed = 0;
};

/// One folder per combination. Existing valid folders are kept, so an
/// interrupted sweep resumes. The manifest is rewritten to list every valid
/// record of the sweep.
GenerateSummary generate_dataset(const SweepConfig& sweep, const std::filesystem::path& root);

/// Per-column z-score statistics. Columns with zero spread get std = 1.
struct NormalizationStats {
  Eigen::VectorXd feature_mean;
  Eigen::VectorXd feature_std;
  Eigen::VectorXd target_mean;
  Eigen::VectorXd target_std;

  /// Rows are samples; requires at least two rows.
  static NormalizationStats fit(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets);

  Eigen::MatrixXd apply_features(const Eigen::MatrixXd& features) const;
  Eigen::MatrixXd invert_features(const Eigen::MatrixXd& normalized) const;
  Eigen::MatrixXd apply_targets(const Eigen::MatrixXd& targets) const;
  Eigen::MatrixXd invert_targets(const Eigen::MatrixXd& normalized) const;
  /// Sum of log(target_std): the raw-space NLL offset.
  double log_target_scale() const;
};

struct FoldSplit {
  int k = 5;
  std::vector<int> assignments;  ///< sample index -> fold

  std::vector<std::size_t> validation_indices(int fold) const;
  std::vector<std::size_t> training_indices(int fold) const;
};

/// Seeded shuffle followed by a contiguous partition; the first n % k folds
/// get one extra sample.
FoldSplit kfold_split(std::size_t n_samples, int k, std::uint64_t seed);

/// Rows of `m` selected by `rows`, in order.
Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, std::span<const std::size_t> rows);

}  // namespace nanoflow::dataset
