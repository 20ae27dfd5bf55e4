#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nanoflow/training.hpp"

namespace nanoflow::ensemble {

inline constexpr double kZ95 = 1.96;

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

/// mean -/+ 1.96 std, unclamped.
Interval confidence_interval(double mean, double std);
/// The same interval clipped to the physical range [0, 1].
Interval clamp_unit(Interval raw);

struct PosteriorSummary {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
  Eigen::VectorXd ci_low;
  Eigen::VectorXd ci_high;
  Eigen::VectorXd ci_low_clamped;
  Eigen::VectorXd ci_high_clamped;
  std::size_t n_total_samples = 0;

  Eigen::Index dim() const { return mean.size(); }
};

/// Mean, sample standard deviation and intervals of the rows of `samples`.
PosteriorSummary summarize(const Eigen::MatrixXd& samples);

/// Throws unless every checkpoint is a flow model on the same grid and shapes.
void check_compatible(const std::vector<training::Checkpoint>& checkpoints);

/// Draws `samples_per_model` samples from every fold for one raw feature
/// vector, maps them to physical units and summarizes the pooled set. Fold k
/// uses the sub-seed derive_seed(seed, k).
PosteriorSummary predict(const std::vector<training::Checkpoint>& checkpoints, std::span<const double> features,
                         std::size_t samples_per_model = 10000, std::uint64_t seed = 1, int threads = 0);

/// Pooled draws in physical units, fold blocks stacked in fold order.
Eigen::MatrixXd pooled_samples(const std::vector<training::Checkpoint>& checkpoints,
                               std::span<const double> features, std::size_t samples_per_model,
                               std::uint64_t seed, int threads = 0);

struct NllResult {
  double normalized = 0.0;
  double raw = 0.0;
  std::size_t count = 0;
};

/// Mean -log p over the rows; raw adds the log-Jacobian of de-normalization.
NllResult evaluate_nll(const training::Checkpoint& checkpoint, const Eigen::MatrixXd& features,
                       const Eigen::MatrixXd& targets);

struct ChannelSeries {
  std::string name;  ///< "R", "A" or "T"
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<double> ci_low;
  std::vector<double> ci_high;
  std::vector<double> ci_low_clamped;
  std::vector<double> ci_high_clamped;
};

struct SpectralSummary {
  std::vector<double> wavelengths;
  std::array<ChannelSeries, 3> channels;  ///< R, A, T
  /// mean R + mean A + mean T - 1 per wavelength; diagnostic only.
  std::vector<double> closure_deviation;
};

SpectralSummary split_spectra(const PosteriorSummary& summary, std::span<const double> wavelengths);

/// Header: wavelength,channel,mean,std,ci_low,ci_high,ci_low_clamped,ci_high_clamped
std::string prediction_csv(const SpectralSummary& spectra);
void write_prediction(const SpectralSummary& spectra, const std::filesystem::path& path);

struct CalibrationOptions {
  std::size_t samples_per_model = 10000;
  std::uint64_t seed = 1;
  int threads = 0;
  double interval_scale = 1.0;  ///< multiplies the half-width 1.96 std
};

struct CalibrationReport {
  std::size_t records = 0;
  std::size_t pairs = 0;
  std::size_t covered = 0;
  double coverage = 0.0;
};

inline constexpr std::size_t kMinCalibrationRecords = 20;

/// Fraction of (record, channel) pairs whose true value lies inside the
/// pooled interval. Record i is predicted with seed derive_seed(seed, i).
CalibrationReport calibration_report(const std::vector<training::Checkpoint>& checkpoints,
                                     const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets,
                                     const CalibrationOptions& options = {});

}  // namespace nanoflow::ensemble
