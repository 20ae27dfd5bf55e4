#include "nanoflow/commands.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "io.hpp"
#include "nanoflow/error.hpp"
#include "nanoflow/log.hpp"
#include "nanoflow/parallel.hpp"
#include "nanoflow/plot.hpp"
#include "nanoflow/rng.hpp"

namespace nanoflow::commands {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json maybe(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void ensure_parent(const fs::path& file) {
  if (file.empty()) throw domain_error("output path is empty");
  const fs::path parent = file.parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw io_error("cannot create " + parent.string() + ": " + ec.message());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("cannot create " + dir.string() + ": " + ec.message());
}

void require_dir(const fs::path& dir, const char* what) {
  if (dir.empty()) throw domain_error(std::string(what) + " directory not given");
  if (!fs::is_directory(dir)) throw domain_error(std::string(what) + " directory not found: " + dir.string());
}

std::vector<training::Checkpoint> load_flows(const fs::path& dir) {
  require_dir(dir, "checkpoint");
  std::vector<training::Checkpoint> cks = training::load_checkpoint_dir(dir);
  ensemble::check_compatible(cks);
  return cks;
}

void check_grid(const training::Checkpoint& ck, const dataset::SimulationRecord& rec) {
  if (rec.optics.wavelengths != ck.wavelengths) {
    throw domain_error("record " + rec.id + ": wavelength grid differs from the checkpoints' (" +
                       std::to_string(rec.optics.wavelengths.size()) + " vs " + std::to_string(ck.wavelengths.size()) +
                       " points)");
  }
  if (rec.n_rho() != ck.n_rho) {
    throw domain_error("record " + rec.id + ": " + std::to_string(rec.n_rho()) + " size bins, checkpoints expect " +
                       std::to_string(ck.n_rho));
  }
}

PredictResult predict_record(const std::vector<training::Checkpoint>& cks, const dataset::SimulationRecord& rec,
                             const config::RunConfig& rc, const fs::path& out_dir) {
  check_grid(cks.front(), rec);
  const std::vector<double> features = dataset::assemble_features(rec);
  const ensemble::PosteriorSummary post =
      ensemble::predict(cks, features, rc.predict.samples_per_model, rc.predict.seed);
  PredictResult r;
  r.id = rec.id;
  r.spectra = ensemble::split_spectra(post, cks.front().wavelengths);
  r.rmse = {kNaN, kNaN, kNaN};
  r.ci_hit_fraction = kNaN;

  const std::vector<double> targets = dataset::assemble_targets(rec);
  bool has_truth = true;
  for (double v : targets) has_truth = has_truth && std::isfinite(v);
  if (has_truth) {
    r.truth = dataset::split_targets(targets, rec.n_wavelengths());
    std::size_t hits = 0;
    const std::size_t n = rec.n_wavelengths();
    for (std::size_t c = 0; c < 3; ++c) {
      const auto& ch = r.spectra.channels[c];
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = targets[c * n + i];
        s += (ch.mean[i] - t) * (ch.mean[i] - t);
        hits += t >= ch.ci_low[i] && t <= ch.ci_high[i];
      }
      r.rmse[c] = std::sqrt(s / static_cast<double>(n));
    }
    r.ci_hit_fraction = static_cast<double>(hits) / static_cast<double>(3 * n);
  }

  ensure_dir(out_dir);
  ensemble::write_prediction(r.spectra, out_dir / "prediction.csv");
  if (rc.predict.plots) plot::write_channel_plots(r.spectra, r.truth, out_dir);
  double worst_closure = 0.0;
  for (double d : r.spectra.closure_deviation) worst_closure = std::max(worst_closure, std::abs(d));
  json summary = {{"id", rec.id},
                  {"folds", cks.size()},
                  {"samples_per_model", rc.predict.samples_per_model},
                  {"n_total_samples", post.n_total_samples},
                  {"seed", rc.predict.seed},
                  {"max_abs_closure_deviation", worst_closure},
                  {"rmse", {{"R", maybe(r.rmse[0])}, {"A", maybe(r.rmse[1])}, {"T", maybe(r.rmse[2])}}},
                  {"ci_hit_fraction", maybe(r.ci_hit_fraction)}};
  io::write_text_atomic(out_dir / "summary.json", summary.dump(2) + "\n");
  log::info("predict", {{"id", rec.id},
                        {"rmse_R", log::num(r.rmse[0])},
                        {"rmse_A", log::num(r.rmse[1])},
                        {"rmse_T", log::num(r.rmse[2])},
                        {"ci_hits", log::num(r.ci_hit_fraction)}});
  return r;
}

}  // namespace

mie::BulkOpticalProperties run_mie(const config::RunConfig& rc, const fs::path& out_csv) {
  const auto& wl = rc.require_wavelengths();
  const auto& dist = rc.require_distribution();
  mie::BulkOpticalProperties o = mie::spectrum(dist, wl, rc.materials);
  ensure_parent(out_csv);
  io::write_text_atomic(out_csv, dataset::optics_csv(o));
  log::info("mie", {{"wavelengths", std::to_string(o.size())}, {"out", out_csv.string()}});
  return o;
}

transport::SpectralResponse run_simulate(const config::RunConfig& rc, const fs::path& out_csv) {
  mie::BulkOpticalProperties optics;
  if (!rc.paths.optical_properties.empty()) {
    if (!fs::is_regular_file(rc.paths.optical_properties)) {
      throw domain_error("optical properties file not found: " + rc.paths.optical_properties.string());
    }
    optics = dataset::read_optics_csv(rc.paths.optical_properties);
    optics.validate();
  } else {
    optics = mie::spectrum(rc.require_distribution(), rc.require_wavelengths(), rc.materials);
  }
  transport::SimulationConfig sim = rc.simulation;
  sim.threads = default_threads();
  const transport::SpectralResponse r = transport::run_spectrum(optics, rc.slab, sim);
  ensure_parent(out_csv);
  io::write_text_atomic(out_csv, dataset::outputs_csv(r));
  log::info("simulate", {{"wavelengths", std::to_string(r.size())}, {"photons", std::to_string(sim.n_photons)}});
  return r;
}

dataset::GenerateSummary run_gen_data(const config::RunConfig& rc, const fs::path& dataset_dir) {
  if (dataset_dir.empty()) throw domain_error("dataset directory not given");
  dataset::SweepConfig sweep = rc.require_sweep();
  sweep.simulation.threads = default_threads();
  const dataset::GenerateSummary s = dataset::generate_dataset(sweep, dataset_dir);
  log::info("gen-data", {{"generated", std::to_string(s.generated)},
                         {"skipped", std::to_string(s.skipped)},
                         {"failed", std::to_string(s.failed)}});
  return s;
}

TrainSummary run_train(const config::RunConfig& rc, const fs::path& dataset_dir, const fs::path& checkpoint_dir) {
  require_dir(dataset_dir, "dataset");
  if (checkpoint_dir.empty()) throw domain_error("checkpoint directory not given");
  const dataset::Dataset ds = dataset::load_dataset(dataset_dir);
  const training::TrainingSet data = training::TrainingSet::from_dataset(ds);
  const training::CrossValidationResult cv =
      training::cross_validate(data, rc.training, checkpoint_dir, default_threads());
  const training::Checkpoint baseline = training::baseline_on_fold(data, rc.training, cv.split, 0, checkpoint_dir);

  TrainSummary s;
  for (const auto& ck : cv.checkpoints) {
    s.val_nll.push_back(ck.val_nll);
    s.val_nll_raw.push_back(ck.val_nll_raw);
  }
  s.baseline_val_mse = baseline.val_nll_raw;
  json summary = {{"folds", rc.training.folds},
                  {"records", ds.records.size()},
                  {"val_nll", json::array()},
                  {"val_nll_raw", json::array()},
                  {"baseline_val_mse", maybe(s.baseline_val_mse)}};
  for (std::size_t k = 0; k < s.val_nll.size(); ++k) {
    summary["val_nll"].push_back(maybe(s.val_nll[k]));
    summary["val_nll_raw"].push_back(maybe(s.val_nll_raw[k]));
  }
  io::write_text_atomic(checkpoint_dir / "cv_summary.json", summary.dump(2) + "\n");
  return s;
}

std::vector<PredictResult> run_predict(const config::RunConfig& rc, const fs::path& checkpoint_dir,
                                       const fs::path& input, const fs::path& out_dir) {
  if (input.empty()) throw domain_error("predict: no input record given");
  if (out_dir.empty()) throw domain_error("predict: no output directory given");
  const std::vector<training::Checkpoint> cks = load_flows(checkpoint_dir);
  std::vector<PredictResult> out;
  if (fs::is_regular_file(input / "inputs.json")) {
    out.push_back(predict_record(cks, dataset::read_record(input), rc, out_dir));
  } else if (fs::is_regular_file(input / "dataset.json")) {
    const dataset::Dataset ds = dataset::load_dataset(input);
    for (const auto& rec : ds.records) out.push_back(predict_record(cks, rec, rc, out_dir / rec.id));
  } else {
    throw domain_error("predict: " + input.string() + " is neither a record folder nor a dataset");
  }
  return out;
}

std::string run_evaluate(const config::RunConfig& rc, const fs::path& checkpoint_dir, const fs::path& dataset_dir,
                         const fs::path& metrics_path) {
  const std::vector<training::Checkpoint> cks = load_flows(checkpoint_dir);
  require_dir(dataset_dir, "dataset");
  const dataset::Dataset ds = dataset::load_dataset(dataset_dir);
  if (!ds.records.empty()) check_grid(cks.front(), ds.records.front());
  const Eigen::MatrixXd features = ds.features();
  const Eigen::MatrixXd targets = ds.targets();
  std::map<std::string, Eigen::Index> row_of;
  for (std::size_t i = 0; i < ds.records.size(); ++i) row_of[ds.records[i].id] = static_cast<Eigen::Index>(i);

  auto rows_for = [&](const training::Checkpoint& ck) {
    std::vector<std::size_t> rows;
    for (const auto& id : ck.validation_ids) {
      const auto it = row_of.find(id);
      if (it == row_of.end()) {
        throw domain_error("evaluate: validation record '" + id + "' of fold " + std::to_string(ck.fold_index) +
                           " is not in " + dataset_dir.string());
      }
      rows.push_back(static_cast<std::size_t>(it->second));
    }
    if (rows.empty()) throw domain_error("evaluate: fold " + std::to_string(ck.fold_index) + " has no validation records");
    return rows;
  };

  json fold_nll = json::array(), fold_nll_raw = json::array();
  std::size_t pairs = 0, covered = 0, records = 0;
  double flow_sq = 0.0;
  std::size_t flow_n = 0;
  for (const auto& ck : cks) {
    const auto rows = rows_for(ck);
    const Eigen::MatrixXd vf = dataset::select_rows(features, rows);
    const Eigen::MatrixXd vt = dataset::select_rows(targets, rows);
    const ensemble::NllResult nll = ensemble::evaluate_nll(ck, vf, vt);
    fold_nll.push_back(nll.normalized);
    fold_nll_raw.push_back(nll.raw);

    // Out-of-fold interval coverage and posterior-mean error.
    std::vector<std::size_t> hits(rows.size());
    std::vector<double> sq(rows.size());
    parallel_for(rows.size(), default_threads(), [&](std::size_t i) {
      const Eigen::RowVectorXd y = vf.row(static_cast<Eigen::Index>(i));
      const ensemble::PosteriorSummary p =
          ensemble::predict({ck}, std::span<const double>(y.data(), static_cast<std::size_t>(y.size())),
                            rc.evaluate.samples_per_model, derive_seed(rc.evaluate.seed, rows[i]), 1);
      std::size_t h = 0;
      double s = 0.0;
      for (Eigen::Index j = 0; j < p.dim(); ++j) {
        const double t = vt(static_cast<Eigen::Index>(i), j);
        h += t >= p.ci_low(j) && t <= p.ci_high(j);
        s += (p.mean(j) - t) * (p.mean(j) - t);
      }
      hits[i] = h;
      sq[i] = s;
    });
    for (std::size_t i = 0; i < rows.size(); ++i) {
      covered += hits[i];
      flow_sq += sq[i];
    }
    pairs += rows.size() * static_cast<std::size_t>(vt.cols());
    flow_n += rows.size() * static_cast<std::size_t>(vt.cols());
    records += rows.size();
  }

  double mean_nll = 0.0;
  for (const auto& v : fold_nll) mean_nll += v.get<double>() / static_cast<double>(fold_nll.size());

  json metrics;
  metrics["folds"] = cks.size();
  metrics["val_nll"] = fold_nll;
  metrics["val_nll_raw"] = fold_nll_raw;
  metrics["val_nll_mean"] = mean_nll;
  metrics["flow_rmse_out_of_fold"] = std::sqrt(flow_sq / static_cast<double>(flow_n));

  json cal = {{"scope", "out_of_fold"},
              {"records", records},
              {"pairs", pairs},
              {"covered", covered},
              {"samples_per_model", rc.evaluate.samples_per_model}};
  if (records >= ensemble::kMinCalibrationRecords) {
    cal["coverage"] = static_cast<double>(covered) / static_cast<double>(pairs);
  } else {
    cal["coverage"] = nullptr;
    cal["note"] = "fewer than " + std::to_string(ensemble::kMinCalibrationRecords) + " held-out records";
  }
  metrics["calibration"] = cal;

  const fs::path baseline_path = checkpoint_dir / training::baseline_file_name();
  if (fs::is_regular_file(baseline_path)) {
    const training::Checkpoint b = training::load_checkpoint(baseline_path);
    if (b.kind != training::ModelKind::Baseline) throw domain_error("evaluate: " + baseline_path.string() + " is not a baseline");
    const auto rows = rows_for(b);
    const Eigen::MatrixXd vf = dataset::select_rows(features, rows);
    const Eigen::MatrixXd vt = dataset::select_rows(targets, rows);
    const double base_rmse = std::sqrt((training::predict_shift(b, vf) - vt).squaredNorm() / static_cast<double>(vt.size()));
    json cmp = {{"fold", b.fold_index}, {"records", rows.size()}, {"baseline_rmse", base_rmse}};
    const training::Checkpoint* same = nullptr;
    for (const auto& ck : cks) {
      if (ck.fold_index == b.fold_index && ck.validation_ids == b.validation_ids) same = &ck;
    }
    if (same != nullptr) {
      double s = 0.0;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const Eigen::RowVectorXd y = vf.row(static_cast<Eigen::Index>(i));
        const ensemble::PosteriorSummary p =
            ensemble::predict({*same}, std::span<const double>(y.data(), static_cast<std::size_t>(y.size())),
                              rc.evaluate.samples_per_model, derive_seed(rc.evaluate.seed, rows[i]));
        s += (p.mean - vt.row(static_cast<Eigen::Index>(i)).transpose()).squaredNorm();
      }
      const double flow_rmse = std::sqrt(s / static_cast<double>(vt.size()));
      cmp["flow_rmse"] = flow_rmse;
      cmp["ratio"] = base_rmse / flow_rmse;
    }
    metrics["baseline_comparison"] = cmp;
  } else {
    metrics["baseline_comparison"] = nullptr;
  }

  const std::string text = metrics.dump(2) + "\n";
  if (!metrics_path.empty()) {
    ensure_parent(metrics_path);
    io::write_text_atomic(metrics_path, text);
  }
  log::info("evaluate", {{"val_nll_mean", log::num(mean_nll)},
                         {"coverage", cal["coverage"].is_null() ? "none" : log::num(cal["coverage"].get<double>())}});
  return text;
}

}  // namespace nanoflow::commands
