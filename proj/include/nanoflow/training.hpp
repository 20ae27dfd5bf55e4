#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nanoflow/dataset.hpp"
#include "nanoflow/flow.hpp"

namespace nanoflow::training {

inline constexpr int kCheckpointVersion = 1;

struct TrainConfig {
  int epochs = 20000;
  int batch_size = 32;
  double lr = 1e-4;
  int folds = 5;
  std::uint64_t seed = 1;
  int log_every = 100;  ///< epochs between validation evaluations and log lines
  flow::FlowArchitecture architecture;

  void validate() const;
};

struct TraceRow {
  int epoch = 0;
  double train_nll = 0.0;  ///< mean over the epoch's mini-batches, weighted by batch size
  double val_nll = 0.0;    ///< NaN when not evaluated at this epoch
};

struct TrainingTrace {
  std::vector<TraceRow> rows;
};

enum class ModelKind { Flow, Baseline };

/// Everything needed to reuse a trained fold model.
struct Checkpoint {
  int format_version = kCheckpointVersion;
  ModelKind kind = ModelKind::Flow;
  flow::FlowModel model;
  dataset::NormalizationStats stats;
  int fold_index = 0;
  int fold_count = 1;
  double train_nll = 0.0;   ///< final-epoch training loss (MSE for baselines)
  double val_nll = 0.0;     ///< normalized space; NaN without validation data
  double val_nll_raw = 0.0; ///< physical units
  std::uint64_t steps = 0;  ///< optimizer steps taken
  TrainConfig config;
  std::vector<double> wavelengths;
  std::size_t n_rho = 0;
  std::vector<std::string> validation_ids;

  int feature_dim() const { return model.feature_dim(); }
  int target_dim() const { return model.target_dim(); }
};

struct FoldResult {
  Checkpoint checkpoint;
  TrainingTrace trace;
};

/// Algorithm: fit fold-local normalization on the training rows, then for each
/// epoch shuffle, split into mini-batches (last one may be smaller) and take
/// one Adam step per batch on the batch-mean NLL. Rows of the matrices are
/// samples in physical units. Deterministic in (config.seed, fold_index).
FoldResult train_fold(const Eigen::MatrixXd& train_features, const Eigen::MatrixXd& train_targets,
                      const Eigen::MatrixXd& val_features, const Eigen::MatrixXd& val_targets,
                      const TrainConfig& config, int fold_index = 0);

/// Same loop with a mean-squared-error loss on the shift head only; the model
/// predicts t(y).
FoldResult train_baseline(const Eigen::MatrixXd& train_features, const Eigen::MatrixXd& train_targets,
                          const Eigen::MatrixXd& val_features, const Eigen::MatrixXd& val_targets,
                          const TrainConfig& config, int fold_index = 0);

/// Point prediction of a baseline (or the flow's mean) in physical units,
/// rows = samples.
Eigen::MatrixXd predict_shift(const Checkpoint& checkpoint, const Eigen::MatrixXd& features);

/// Input to cross-validation: raw rows plus optional record ids and grid.
struct TrainingSet {
  Eigen::MatrixXd features;
  Eigen::MatrixXd targets;
  std::vector<std::string> ids;
  std::vector<double> wavelengths;
  std::size_t n_rho = 0;

  static TrainingSet from_dataset(const dataset::Dataset& ds);
};

struct CrossValidationResult {
  dataset::FoldSplit split;
  std::vector<Checkpoint> checkpoints;
  std::vector<TrainingTrace> traces;  ///< empty for folds restored from disk
  std::vector<double> val_nll() const;
};

/// K-fold cross-validation. When `out_dir` is non-empty every fold writes
/// fold_{k}.ckpt.json and fold_{k}.trace.csv as soon as it finishes, and
/// folds whose checkpoint already exists with the same configuration and
/// validation set are loaded instead of retrained. Folds run on up to
/// `threads` workers; results do not depend on the count.
CrossValidationResult cross_validate(const TrainingSet& data, const TrainConfig& config,
                                     const std::filesystem::path& out_dir = {}, int threads = 0);

/// Deterministic point-prediction baseline trained on the given fold of
/// `split`. With a non-empty `out_dir` it is written to baseline.ckpt.json
/// and an up-to-date file is restored instead of retrained.
Checkpoint baseline_on_fold(const TrainingSet& data, const TrainConfig& config, const dataset::FoldSplit& split,
                            int fold = 0, const std::filesystem::path& out_dir = {});

std::string checkpoint_file_name(int fold_index);
std::string baseline_file_name();
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Loads fold_0.ckpt.json ... in fold order. Throws a Config error when the
/// directory holds none.
std::vector<Checkpoint> load_checkpoint_dir(const std::filesystem::path& dir);

void write_trace(const TrainingTrace& trace, const std::filesystem::path& path);

}  // namespace nanoflow::training
