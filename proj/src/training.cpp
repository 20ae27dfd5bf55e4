#include "nanoflow/training.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "io.hpp"
#include "nanoflow/error.hpp"
#include "nanoflow/log.hpp"
#include "nanoflow/parallel.hpp"
#include "nanoflow/rng.hpp"

namespace nanoflow::training {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t fold_seed(const TrainConfig& c, int fold) {
  return derive_seed(c.seed, static_cast<std::uint64_t>(fold) + 1);
}

std::vector<std::size_t> epoch_order(std::uint64_t shuffle_seed, int epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  RandomStream rng(shuffle_seed, static_cast<std::uint64_t>(epoch));
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_u64() % (i + 1));
    std::swap(order[i], order[j]);
  }
  return order;
}

void check_shapes(const Eigen::MatrixXd& tf, const Eigen::MatrixXd& tt, const Eigen::MatrixXd& vf,
                  const Eigen::MatrixXd& vt) {
  if (tf.rows() == 0) throw domain_error("training: empty training set");
  if (tf.rows() != tt.rows() || vf.rows() != vt.rows()) throw domain_error("training: feature/target row mismatch");
  if (vf.rows() > 0 && (vf.cols() != tf.cols() || vt.cols() != tt.cols())) {
    throw domain_error("training: validation columns differ from training columns");
  }
  if (tf.cols() == 0 || tt.cols() == 0) throw domain_error("training: need at least one feature and one target");
}

double mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& x) {
  return (pred - x).squaredNorm() / static_cast<double>(x.size());
}

/// Batch loss and gradient of the baseline: mean squared error of the shift
/// head.
double baseline_step_loss(const flow::FlowModel& model, const Eigen::MatrixXd& y, const Eigen::MatrixXd& x,
                          flow::GradientSet* grads) {
  flow::MlpCache cache;
  const Eigen::MatrixXd raw = flow::mlp_forward(model.conditioner, y, &cache);
  const Eigen::Index d = model.target_dim();
  const Eigen::MatrixXd diff = raw.leftCols(d) - x;
  const double loss = diff.squaredNorm() / static_cast<double>(diff.size());
  if (!std::isfinite(loss)) throw numerical_error("baseline: non-finite loss");
  if (grads) {
    Eigen::MatrixXd d_out = Eigen::MatrixXd::Zero(raw.rows(), raw.cols());
    d_out.leftCols(d) = 2.0 * diff / static_cast<double>(diff.size());
    *grads = flow::GradientSet::zeros_like(model);
    grads->conditioner = flow::mlp_backward(model.conditioner, cache, d_out);
  }
  return loss;
}

FoldResult run_training(const Eigen::MatrixXd& train_features, const Eigen::MatrixXd& train_targets,
                        const Eigen::MatrixXd& val_features, const Eigen::MatrixXd& val_targets,
                        const TrainConfig& config, int fold_index, ModelKind kind) {
  config.validate();
  check_shapes(train_features, train_targets, val_features, val_targets);
  const bool flow_kind = kind == ModelKind::Flow;
  const char* component = flow_kind ? "train" : "baseline";

  FoldResult out;
  Checkpoint& ck = out.checkpoint;
  ck.kind = kind;
  ck.fold_index = fold_index;
  ck.fold_count = config.folds;
  ck.config = config;
  ck.stats = dataset::NormalizationStats::fit(train_features, train_targets);

  const Eigen::MatrixXd ty = ck.stats.apply_features(train_features);
  const Eigen::MatrixXd tx = ck.stats.apply_targets(train_targets);
  const bool has_val = val_features.rows() > 0;
  const Eigen::MatrixXd vy = has_val ? ck.stats.apply_features(val_features) : Eigen::MatrixXd();
  const Eigen::MatrixXd vx = has_val ? ck.stats.apply_targets(val_targets) : Eigen::MatrixXd();

  const std::uint64_t seed = fold_seed(config, fold_index);
  ck.model = flow::make_flow(static_cast<int>(ty.cols()), static_cast<int>(tx.cols()), config.architecture,
                             derive_seed(seed, 0));
  flow::AdamState adam = flow::AdamState::for_model(ck.model, config.lr);
  const std::uint64_t shuffle_seed = derive_seed(seed, 1);

  auto evaluate = [&](const Eigen::MatrixXd& y, const Eigen::MatrixXd& x) {
    return flow_kind ? flow::nll_loss(ck.model, y, x) : baseline_step_loss(ck.model, y, x, nullptr);
  };

  const std::size_t n = static_cast<std::size_t>(ty.rows());
  const std::size_t b = static_cast<std::size_t>(config.batch_size);
  out.trace.rows.reserve(static_cast<std::size_t>(config.epochs));
  flow::LossCache cache;
  flow::GradientSet grads;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const std::vector<std::size_t> order = epoch_order(shuffle_seed, epoch, n);
    double weighted = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += b, ++batch_index) {
      const std::size_t len = std::min(b, n - start);
      const std::span<const std::size_t> rows(order.data() + start, len);
      const Eigen::MatrixXd by = dataset::select_rows(ty, rows);
      const Eigen::MatrixXd bx = dataset::select_rows(tx, rows);
      double loss = 0.0;
      try {
        if (flow_kind) {
          loss = flow::nll_forward(ck.model, by, bx, &cache);
          grads = flow::backward(ck.model, cache);
        } else {
          loss = baseline_step_loss(ck.model, by, bx, &grads);
        }
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Numerical) throw;
        throw numerical_error(std::string(component) + ": fold " + std::to_string(fold_index) + " epoch " +
                              std::to_string(epoch) + " batch " + std::to_string(batch_index) + ": " + e.what());
      }
      flow::adam_step(ck.model, grads, adam);
      weighted += loss * static_cast<double>(len);
    }
    TraceRow row{epoch, weighted / static_cast<double>(n), kNaN};
    const bool report = epoch % config.log_every == 0 || epoch == config.epochs || epoch == 1;
    if (report && has_val) row.val_nll = evaluate(vy, vx);
    out.trace.rows.push_back(row);
    if (report) {
      log::info(component, {{"fold", std::to_string(fold_index)},
                            {"epoch", std::to_string(epoch)},
                            {"train_loss", log::num(row.train_nll)},
                            {"val_loss", has_val ? log::num(row.val_nll) : "none"}});
    }
  }

  ck.steps = adam.step_count;
  ck.train_nll = evaluate(ty, tx);
  ck.val_nll = has_val ? evaluate(vy, vx) : kNaN;
  if (flow_kind) {
    ck.val_nll_raw = has_val ? ck.val_nll + ck.stats.log_target_scale() : kNaN;
  } else {
    ck.val_nll_raw = has_val ? mse(predict_shift(ck, val_features), val_targets) : kNaN;
  }
  return out;
}

json network_json(const flow::ConditionerParams& p) {
  json layers = json::array();
  for (const auto& l : p.layers) {
    json w = json::array();
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(l.weight.cols()));
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) row[c] = l.weight(r, c);
      w.push_back(row);
    }
    layers.push_back({{"weight", w}, {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  return {{"dims", p.dims}, {"activation", flow::activation_name(p.activation)}, {"layers", layers}};
}

flow::ConditionerParams network_from_json(const json& j, const fs::path& src) {
  const auto dims = j.at("dims").get<std::vector<int>>();
  flow::ConditionerParams p =
      flow::ConditionerParams::zeros(dims, flow::activation_from_name(j.at("activation").get<std::string>()));
  const json& layers = j.at("layers");
  if (!layers.is_array() || layers.size() != p.layers.size()) {
    throw io_error(src.string() + ": layer list does not match dims");
  }
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    auto& l = p.layers[i];
    const auto w = layers[i].at("weight").get<std::vector<std::vector<double>>>();
    const auto bias = layers[i].at("bias").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != l.weight.rows() ||
        static_cast<Eigen::Index>(bias.size()) != l.bias.size()) {
      throw io_error(src.string() + ": layer " + std::to_string(i) + " has the wrong shape");
    }
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      if (static_cast<Eigen::Index>(w[r].size()) != l.weight.cols()) {
        throw io_error(src.string() + ": layer " + std::to_string(i) + " has the wrong shape");
      }
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = w[r][c];
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = bias[r];
  }
  return p;
}

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// JSON has no NaN; absent metrics are written as null.
json maybe_number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double number_or_nan(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

json config_json(const TrainConfig& c) {
  const auto& a = c.architecture;
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"folds", c.folds},
          {"seed", c.seed},
          {"log_every", c.log_every},
          {"architecture",
           {{"hidden", a.hidden},
            {"activation", flow::activation_name(a.activation)},
            {"log_scale_min", a.clamp.lo},
            {"log_scale_max", a.clamp.hi},
            {"coupling_layers", a.coupling_layers},
            {"coupling_hidden", a.coupling_hidden},
            {"initial_log_scale", a.initial_log_scale}}}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.lr = j.at("lr").get<double>();
  c.folds = j.at("folds").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.log_every = j.at("log_every").get<int>();
  const json& a = j.at("architecture");
  c.architecture.hidden = a.at("hidden").get<std::vector<int>>();
  c.architecture.activation = flow::activation_from_name(a.at("activation").get<std::string>());
  c.architecture.clamp = {a.at("log_scale_min").get<double>(), a.at("log_scale_max").get<double>()};
  c.architecture.coupling_layers = a.at("coupling_layers").get<int>();
  c.architecture.coupling_hidden = a.at("coupling_hidden").get<std::vector<int>>();
  c.architecture.initial_log_scale = a.at("initial_log_scale").get<double>();
  return c;
}

bool same_training_setup(const Checkpoint& a, const Checkpoint& b) {
  return config_json(a.config) == config_json(b.config) && a.validation_ids == b.validation_ids &&
         a.fold_index == b.fold_index && a.fold_count == b.fold_count && a.wavelengths == b.wavelengths &&
         a.n_rho == b.n_rho;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw domain_error("train: epochs must be >= 1");
  if (batch_size < 1) throw domain_error("train: batch_size must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw domain_error("train: lr must be positive");
  if (folds < 2) throw domain_error("train: folds must be >= 2");
  if (log_every < 1) throw domain_error("train: log_every must be >= 1");
  for (int h : architecture.hidden) {
    if (h < 1) throw domain_error("train: hidden widths must be positive");
  }
  for (int h : architecture.coupling_hidden) {
    if (h < 1) throw domain_error("train: coupling widths must be positive");
  }
  if (architecture.coupling_layers < 0) throw domain_error("train: coupling_layers must be >= 0");
  architecture.clamp.validate();
}

FoldResult train_fold(const Eigen::MatrixXd& train_features, const Eigen::MatrixXd& train_targets,
                      const Eigen::MatrixXd& val_features, const Eigen::MatrixXd& val_targets,
                      const TrainConfig& config, int fold_index) {
  return run_training(train_features, train_targets, val_features, val_targets, config, fold_index, ModelKind::Flow);
}

FoldResult train_baseline(const Eigen::MatrixXd& train_features, const Eigen::MatrixXd& train_targets,
                          const Eigen::MatrixXd& val_features, const Eigen::MatrixXd& val_targets,
                          const TrainConfig& config, int fold_index) {
  TrainConfig c = config;
  c.architecture.coupling_layers = 0;
  return run_training(train_features, train_targets, val_features, val_targets, c, fold_index,
                      ModelKind::Baseline);
}

Eigen::MatrixXd predict_shift(const Checkpoint& ck, const Eigen::MatrixXd& features) {
  const Eigen::MatrixXd y = ck.stats.apply_features(features);
  const flow::ConditionerOutput o = flow::conditioner_forward(ck.model.conditioner, y, ck.model.clamp);
  return ck.stats.invert_targets(o.shift);
}

TrainingSet TrainingSet::from_dataset(const dataset::Dataset& ds) {
  TrainingSet t;
  t.features = ds.features();
  t.targets = ds.targets();
  t.ids = ds.manifest.record_ids;
  t.wavelengths = ds.manifest.wavelengths;
  t.n_rho = ds.manifest.n_rho;
  return t;
}

std::vector<double> CrossValidationResult::val_nll() const {
  std::vector<double> out;
  for (const auto& c : checkpoints) out.push_back(c.val_nll);
  return out;
}

std::string checkpoint_file_name(int fold_index) { return "fold_" + std::to_string(fold_index) + ".ckpt.json"; }

CrossValidationResult cross_validate(const TrainingSet& data, const TrainConfig& config, const fs::path& out_dir,
                                     int threads) {
  config.validate();
  const std::size_t n = static_cast<std::size_t>(data.features.rows());
  if (n != static_cast<std::size_t>(data.targets.rows())) throw domain_error("train: feature/target row mismatch");
  if (n < static_cast<std::size_t>(config.folds)) {
    throw domain_error("train: " + std::to_string(n) + " samples cannot fill " + std::to_string(config.folds) +
                       " folds");
  }
  std::vector<std::string> ids = data.ids;
  if (ids.empty()) {
    for (std::size_t i = 0; i < n; ++i) ids.push_back(std::to_string(i));
  }
  if (ids.size() != n) throw domain_error("train: id count does not match the sample count");

  CrossValidationResult result;
  result.split = dataset::kfold_split(n, config.folds, derive_seed(config.seed, 0));
  result.checkpoints.resize(config.folds);
  result.traces.resize(config.folds);
  if (!out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw io_error("cannot create " + out_dir.string() + ": " + ec.message());
  }

  parallel_for(static_cast<std::size_t>(config.folds), threads, [&](std::size_t k) {
    const int fold = static_cast<int>(k);
    const auto train_rows = result.split.training_indices(fold);
    const auto val_rows = result.split.validation_indices(fold);

    Checkpoint expected;
    expected.config = config;
    expected.fold_index = fold;
    expected.fold_count = config.folds;
    expected.wavelengths = data.wavelengths;
    expected.n_rho = data.n_rho;
    for (auto r : val_rows) expected.validation_ids.push_back(ids[r]);

    const fs::path ckpt_path = out_dir.empty() ? fs::path() : out_dir / checkpoint_file_name(fold);
    if (!out_dir.empty() && fs::is_regular_file(ckpt_path)) {
      try {
        Checkpoint existing = load_checkpoint(ckpt_path);
        if (existing.kind == ModelKind::Flow && same_training_setup(existing, expected)) {
          log::info("train", {{"fold", std::to_string(fold)}, {"event", "fold_restored"}});
          result.checkpoints[k] = std::move(existing);
          return;
        }
      } catch (const Error&) {
        // unreadable or stale: retrain
      }
    }

    FoldResult fr = train_fold(dataset::select_rows(data.features, train_rows),
                               dataset::select_rows(data.targets, train_rows),
                               dataset::select_rows(data.features, val_rows),
                               dataset::select_rows(data.targets, val_rows), config, fold);
    fr.checkpoint.wavelengths = data.wavelengths;
    fr.checkpoint.n_rho = data.n_rho;
    fr.checkpoint.validation_ids = expected.validation_ids;
    if (!out_dir.empty()) {
      write_trace(fr.trace, out_dir / ("fold_" + std::to_string(fold) + ".trace.csv"));
      save_checkpoint(fr.checkpoint, ckpt_path);
    }
    log::info("train", {{"fold", std::to_string(fold)},
                        {"event", "fold_done"},
                        {"val_nll", log::num(fr.checkpoint.val_nll)}});
    result.checkpoints[k] = std::move(fr.checkpoint);
    result.traces[k] = std::move(fr.trace);
  });
  return result;
}

std::string baseline_file_name() { return "baseline.ckpt.json"; }

Checkpoint baseline_on_fold(const TrainingSet& data, const TrainConfig& config, const dataset::FoldSplit& split,
                            int fold, const fs::path& out_dir) {
  config.validate();
  if (fold < 0 || fold >= split.k) throw domain_error("baseline: fold index out of range");
  const auto train_rows = split.training_indices(fold);
  const auto val_rows = split.validation_indices(fold);
  Checkpoint expected;
  expected.config = config;
  expected.fold_index = fold;
  expected.fold_count = split.k;
  expected.wavelengths = data.wavelengths;
  expected.n_rho = data.n_rho;
  for (auto r : val_rows) expected.validation_ids.push_back(data.ids.empty() ? std::to_string(r) : data.ids[r]);

  const fs::path path = out_dir.empty() ? fs::path() : out_dir / baseline_file_name();
  if (!path.empty() && fs::is_regular_file(path)) {
    try {
      Checkpoint existing = load_checkpoint(path);
      if (existing.kind == ModelKind::Baseline && same_training_setup(existing, expected)) {
        log::info("baseline", {{"event", "restored"}});
        return existing;
      }
    } catch (const Error&) {
      // stale or unreadable: retrain
    }
  }
  FoldResult fr = train_baseline(dataset::select_rows(data.features, train_rows),
                                 dataset::select_rows(data.targets, train_rows),
                                 dataset::select_rows(data.features, val_rows),
                                 dataset::select_rows(data.targets, val_rows), config, fold);
  fr.checkpoint.fold_count = split.k;
  fr.checkpoint.wavelengths = data.wavelengths;
  fr.checkpoint.n_rho = data.n_rho;
  fr.checkpoint.validation_ids = expected.validation_ids;
  if (!path.empty()) save_checkpoint(fr.checkpoint, path);
  log::info("baseline", {{"event", "done"}, {"val_mse", log::num(fr.checkpoint.val_nll_raw)}});
  return fr.checkpoint;
}

void save_checkpoint(const Checkpoint& c, const fs::path& path) {
  json model = {{"log_scale_min", c.model.clamp.lo},
                {"log_scale_max", c.model.clamp.hi},
                {"conditioner", network_json(c.model.conditioner)},
                {"couplings", json::array()}};
  for (const auto& cl : c.model.couplings) {
    model["couplings"].push_back({{"parity", cl.parity}, {"net", network_json(cl.net)}});
  }
  json j = {{"format_version", c.format_version},
            {"kind", c.kind == ModelKind::Flow ? "flow" : "baseline"},
            {"fold_index", c.fold_index},
            {"fold_count", c.fold_count},
            {"train_loss", maybe_number(c.train_nll)},
            {"val_nll", maybe_number(c.val_nll)},
            {"val_nll_raw", maybe_number(c.val_nll_raw)},
            {"steps", c.steps},
            {"config", config_json(c.config)},
            {"wavelengths", c.wavelengths},
            {"n_rho", c.n_rho},
            {"feature_dim", c.feature_dim()},
            {"target_dim", c.target_dim()},
            {"validation_ids", c.validation_ids},
            {"normalization",
             {{"feature_mean", to_vec(c.stats.feature_mean)},
              {"feature_std", to_vec(c.stats.feature_std)},
              {"target_mean", to_vec(c.stats.target_mean)},
              {"target_std", to_vec(c.stats.target_std)}}},
            {"model", model}};
  io::write_text_atomic(path, j.dump(1) + "\n");
}

Checkpoint load_checkpoint(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw io_error("checkpoint not found: " + path.string());
  const json j = io::read_json(path);
  const int version = io::field<int>(j, "format_version", path);
  if (version != kCheckpointVersion) {
    throw io_error(path.string() + ": checkpoint format_version " + std::to_string(version) +
                   " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint c;
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind != "flow" && kind != "baseline") throw io_error(path.string() + ": unknown model kind '" + kind + "'");
    c.kind = kind == "flow" ? ModelKind::Flow : ModelKind::Baseline;
    c.fold_index = j.at("fold_index").get<int>();
    c.fold_count = j.at("fold_count").get<int>();
    c.train_nll = number_or_nan(j.at("train_loss"));
    c.val_nll = number_or_nan(j.at("val_nll"));
    c.val_nll_raw = number_or_nan(j.at("val_nll_raw"));
    c.steps = j.at("steps").get<std::uint64_t>();
    c.config = config_from_json(j.at("config"));
    c.wavelengths = j.at("wavelengths").get<std::vector<double>>();
    c.n_rho = j.at("n_rho").get<std::size_t>();
    c.validation_ids = j.at("validation_ids").get<std::vector<std::string>>();
    const json& ns = j.at("normalization");
    c.stats.feature_mean = from_vec(ns.at("feature_mean").get<std::vector<double>>());
    c.stats.feature_std = from_vec(ns.at("feature_std").get<std::vector<double>>());
    c.stats.target_mean = from_vec(ns.at("target_mean").get<std::vector<double>>());
    c.stats.target_std = from_vec(ns.at("target_std").get<std::vector<double>>());
    const json& m = j.at("model");
    c.model.clamp = {m.at("log_scale_min").get<double>(), m.at("log_scale_max").get<double>()};
    c.model.conditioner = network_from_json(m.at("conditioner"), path);
    for (const json& cl : m.at("couplings")) {
      c.model.couplings.push_back({cl.at("parity").get<int>(), network_from_json(cl.at("net"), path)});
    }
    c.model.validate();
    if (j.at("feature_dim").get<int>() != c.feature_dim() || j.at("target_dim").get<int>() != c.target_dim()) {
      throw io_error(path.string() + ": declared dimensions do not match the network");
    }
  } catch (const json::exception& e) {
    throw io_error(path.string() + ": malformed checkpoint (" + e.what() + ")");
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Io) throw;
    throw io_error(path.string() + ": invalid checkpoint (" + e.what() + ")");
  }
  const auto fd = static_cast<Eigen::Index>(c.feature_dim());
  const auto td = static_cast<Eigen::Index>(c.target_dim());
  if (c.stats.feature_mean.size() != fd || c.stats.feature_std.size() != fd || c.stats.target_mean.size() != td ||
      c.stats.target_std.size() != td) {
    throw io_error(path.string() + ": normalization statistics do not match the network dimensions");
  }
  if (!c.wavelengths.empty() && (3 * c.wavelengths.size() != static_cast<std::size_t>(td) ||
                                 3 * c.wavelengths.size() + c.n_rho != static_cast<std::size_t>(fd))) {
    throw io_error(path.string() + ": wavelength grid does not match the network dimensions");
  }
  return c;
}

std::vector<Checkpoint> load_checkpoint_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw domain_error("checkpoint directory not found: " + dir.string());
  std::vector<Checkpoint> out;
  for (int k = 0;; ++k) {
    const fs::path p = dir / checkpoint_file_name(k);
    if (!fs::is_regular_file(p)) break;
    out.push_back(load_checkpoint(p));
  }
  if (out.empty()) throw domain_error("no checkpoints (fold_0.ckpt.json ...) in " + dir.string());
  for (const auto& c : out) {
    if (c.kind != ModelKind::Flow) throw domain_error(dir.string() + ": fold checkpoints must hold flow models");
  }
  return out;
}

void write_trace(const TrainingTrace& trace, const fs::path& path) {
  std::string text = "epoch,train_nll,val_nll\n";
  for (const auto& r : trace.rows) {
    text += std::to_string(r.epoch) + "," + io::format_real(r.train_nll) + ",";
    if (std::isfinite(r.val_nll)) text += io::format_real(r.val_nll);
    text += "\n";
  }
  io::write_text_atomic(path, text);
}

}  // namespace nanoflow::training
