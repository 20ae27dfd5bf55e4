#include "nanoflow/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "io.hpp"
#include "nanoflow/error.hpp"
#include "nanoflow/parallel.hpp"
#include "nanoflow/rng.hpp"

namespace nanoflow::ensemble {

using training::Checkpoint;

Interval confidence_interval(double mean, double std) {
  if (!(std >= 0.0)) throw domain_error("confidence_interval: std must be >= 0, got " + std::to_string(std));
  return {mean - kZ95 * std, mean + kZ95 * std};
}

Interval clamp_unit(Interval raw) {
  return {std::clamp(raw.low, 0.0, 1.0), std::clamp(raw.high, 0.0, 1.0)};
}

PosteriorSummary summarize(const Eigen::MatrixXd& samples) {
  if (samples.rows() < 2) throw domain_error("summarize: need at least two samples");
  const Eigen::Index d = samples.cols();
  PosteriorSummary s;
  s.n_total_samples = static_cast<std::size_t>(samples.rows());
  s.mean = samples.colwise().mean().transpose();
  const Eigen::MatrixXd centered = samples.rowwise() - s.mean.transpose();
  s.std = (centered.colwise().squaredNorm().transpose() / static_cast<double>(samples.rows() - 1)).cwiseSqrt();
  s.ci_low.resize(d);
  s.ci_high.resize(d);
  s.ci_low_clamped.resize(d);
  s.ci_high_clamped.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    if (!std::isfinite(s.mean(j)) || !std::isfinite(s.std(j))) {
      throw numerical_error("summarize: non-finite posterior moment in channel " + std::to_string(j));
    }
    const Interval raw = confidence_interval(s.mean(j), s.std(j));
    const Interval clamped = clamp_unit(raw);
    s.ci_low(j) = raw.low;
    s.ci_high(j) = raw.high;
    s.ci_low_clamped(j) = clamped.low;
    s.ci_high_clamped(j) = clamped.high;
  }
  return s;
}

void check_compatible(const std::vector<Checkpoint>& cks) {
  if (cks.empty()) throw domain_error("ensemble: no checkpoints");
  const Checkpoint& first = cks.front();
  for (std::size_t k = 0; k < cks.size(); ++k) {
    const Checkpoint& c = cks[k];
    const std::string who = "ensemble: checkpoint " + std::to_string(k);
    if (c.kind != training::ModelKind::Flow) throw domain_error(who + " is not a flow model");
    if (c.feature_dim() != first.feature_dim() || c.target_dim() != first.target_dim()) {
      throw domain_error(who + " has dimensions " + std::to_string(c.feature_dim()) + "->" +
                         std::to_string(c.target_dim()) + ", expected " + std::to_string(first.feature_dim()) +
                         "->" + std::to_string(first.target_dim()));
    }
    if (c.n_rho != first.n_rho) throw domain_error(who + " has a different n_rho");
    if (c.wavelengths != first.wavelengths) throw domain_error(who + " has a different wavelength grid");
  }
}

namespace {

Eigen::MatrixXd fold_samples(const Checkpoint& c, std::span<const double> features, std::size_t n,
                             std::uint64_t seed) {
  const Eigen::RowVectorXd raw = Eigen::Map<const Eigen::RowVectorXd>(features.data(),
                                                                      static_cast<Eigen::Index>(features.size()));
  const Eigen::RowVectorXd y = c.stats.apply_features(raw);
  const Eigen::MatrixXd z = flow::sample(c.model, std::span<const double>(y.data(), static_cast<std::size_t>(y.size())),
                                         n, seed);
  return c.stats.invert_targets(z);
}

}  // namespace

Eigen::MatrixXd pooled_samples(const std::vector<Checkpoint>& cks, std::span<const double> features,
                               std::size_t samples_per_model, std::uint64_t seed, int threads) {
  check_compatible(cks);
  if (samples_per_model < 1) throw domain_error("predict: samples_per_model must be >= 1");
  if (static_cast<int>(features.size()) != cks.front().feature_dim()) {
    throw domain_error("predict: expected " + std::to_string(cks.front().feature_dim()) + " features, got " +
                       std::to_string(features.size()));
  }
  const Eigen::Index n = static_cast<Eigen::Index>(samples_per_model);
  Eigen::MatrixXd pooled(n * static_cast<Eigen::Index>(cks.size()), cks.front().target_dim());
  parallel_for(cks.size(), threads, [&](std::size_t k) {
    pooled.middleRows(static_cast<Eigen::Index>(k) * n, n) = fold_samples(cks[k], features, samples_per_model,
                                                                          derive_seed(seed, k));
  });
  return pooled;
}

PosteriorSummary predict(const std::vector<Checkpoint>& cks, std::span<const double> features,
                         std::size_t samples_per_model, std::uint64_t seed, int threads) {
  if (samples_per_model * cks.size() < 2) throw domain_error("predict: need at least two pooled samples");
  return summarize(pooled_samples(cks, features, samples_per_model, seed, threads));
}

NllResult evaluate_nll(const Checkpoint& c, const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets) {
  if (features.rows() == 0) throw domain_error("evaluate_nll: empty validation set");
  if (features.rows() != targets.rows()) throw domain_error("evaluate_nll: feature/target row mismatch");
  if (features.cols() != c.feature_dim() || targets.cols() != c.target_dim()) {
    throw domain_error("evaluate_nll: data shape does not match the checkpoint");
  }
  NllResult r;
  r.count = static_cast<std::size_t>(features.rows());
  r.normalized = flow::nll_loss(c.model, c.stats.apply_features(features), c.stats.apply_targets(targets));
  r.raw = r.normalized + c.stats.log_target_scale();
  return r;
}

SpectralSummary split_spectra(const PosteriorSummary& s, std::span<const double> wavelengths) {
  const std::size_t n = wavelengths.size();
  if (n == 0 || static_cast<std::size_t>(s.dim()) != 3 * n) {
    throw domain_error("split_spectra: summary has " + std::to_string(s.dim()) + " channels, expected 3 x " +
                       std::to_string(n));
  }
  SpectralSummary out;
  out.wavelengths.assign(wavelengths.begin(), wavelengths.end());
  static constexpr const char* kNames[3] = {"R", "A", "T"};
  for (std::size_t b = 0; b < 3; ++b) {
    ChannelSeries& ch = out.channels[b];
    ch.name = kNames[b];
    const auto block = [&](const Eigen::VectorXd& v) {
      return std::vector<double>(v.data() + b * n, v.data() + (b + 1) * n);
    };
    ch.mean = block(s.mean);
    ch.std = block(s.std);
    ch.ci_low = block(s.ci_low);
    ch.ci_high = block(s.ci_high);
    ch.ci_low_clamped = block(s.ci_low_clamped);
    ch.ci_high_clamped = block(s.ci_high_clamped);
  }
  out.closure_deviation.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.closure_deviation[i] = out.channels[0].mean[i] + out.channels[1].mean[i] + out.channels[2].mean[i] - 1.0;
  }
  return out;
}

std::string prediction_csv(const SpectralSummary& sp) {
  std::ostringstream out;
  out << "wavelength,channel,mean,std,ci_low,ci_high,ci_low_clamped,ci_high_clamped\n";
  for (const ChannelSeries& ch : sp.channels) {
    for (std::size_t i = 0; i < sp.wavelengths.size(); ++i) {
      out << io::format_real(sp.wavelengths[i]) << ',' << ch.name << ',' << io::format_real(ch.mean[i]) << ','
          << io::format_real(ch.std[i]) << ',' << io::format_real(ch.ci_low[i]) << ','
          << io::format_real(ch.ci_high[i]) << ',' << io::format_real(ch.ci_low_clamped[i]) << ','
          << io::format_real(ch.ci_high_clamped[i]) << '\n';
    }
  }
  return out.str();
}

void write_prediction(const SpectralSummary& spectra, const std::filesystem::path& path) {
  io::write_text_atomic(path, prediction_csv(spectra));
}

CalibrationReport calibration_report(const std::vector<Checkpoint>& cks, const Eigen::MatrixXd& features,
                                     const Eigen::MatrixXd& targets, const CalibrationOptions& opt) {
  check_compatible(cks);
  const std::size_t n = static_cast<std::size_t>(features.rows());
  if (n < kMinCalibrationRecords) {
    throw domain_error("calibration_report: need at least " + std::to_string(kMinCalibrationRecords) +
                       " held-out records, got " + std::to_string(n));
  }
  if (targets.rows() != features.rows() || targets.cols() != cks.front().target_dim()) {
    throw domain_error("calibration_report: target shape does not match");
  }
  if (!(opt.interval_scale >= 0.0)) throw domain_error("calibration_report: interval_scale must be >= 0");

  std::vector<std::size_t> hits(n, 0);
  parallel_for(n, opt.threads, [&](std::size_t i) {
    const Eigen::RowVectorXd y = features.row(static_cast<Eigen::Index>(i));
    const PosteriorSummary s =
        predict(cks, std::span<const double>(y.data(), static_cast<std::size_t>(y.size())), opt.samples_per_model,
                derive_seed(opt.seed, i), 1);
    std::size_t c = 0;
    for (Eigen::Index j = 0; j < s.dim(); ++j) {
      const double half = opt.interval_scale * kZ95 * s.std(j);
      const double x = targets(static_cast<Eigen::Index>(i), j);
      if (x >= s.mean(j) - half && x <= s.mean(j) + half) ++c;
    }
    hits[i] = c;
  });

  CalibrationReport r;
  r.records = n;
  r.pairs = n * static_cast<std::size_t>(targets.cols());
  for (std::size_t h : hits) r.covered += h;
  r.coverage = static_cast<double>(r.covered) / static_cast<double>(r.pairs);
  return r;
}

}  // namespace nanoflow::ensemble
