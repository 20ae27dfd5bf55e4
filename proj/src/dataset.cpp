#include "nanoflow/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "io.hpp"
#include "nanoflow/error.hpp"
#include "nanoflow/log.hpp"
#include "nanoflow/rng.hpp"

namespace nanoflow::dataset {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kInputsFile = "inputs.json";
constexpr const char* kOpticsFile = "optical_properties.csv";
constexpr const char* kOutputsFile = "outputs.csv";
constexpr const char* kMetaFile = "meta.json";
constexpr const char* kManifestFile = "dataset.json";
constexpr const char* kOpticsHeader = "wavelength,mu_a,mu_s,g";
constexpr const char* kOutputsHeader = "wavelength,r_specular,r_diffuse,absorbance,transmittance";

void require_file(const fs::path& folder, const char* name) {
  if (!fs::is_regular_file(folder / name)) {
    throw io_error(folder.string() + ": missing required file '" + name + "'");
  }
}

std::vector<double> column(const std::vector<std::vector<double>>& rows, std::size_t c) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[c]);
  return out;
}

std::string combination_id(const SweepConfig& sweep, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_%05zu", index);
  return sweep.id_prefix + buf;
}

void check_axis(const std::vector<double>& axis, const char* name, bool allow_zero) {
  if (axis.empty()) throw domain_error(std::string("sweep: axis '") + name + "' is empty");
  for (double v : axis) {
    if (!std::isfinite(v) || v < 0.0 || (!allow_zero && v == 0.0)) {
      throw domain_error(std::string("sweep: axis '") + name + "' has an invalid value");
    }
  }
}

}  // namespace

void SimulationRecord::validate() const {
  if (id.empty()) throw domain_error("record: empty id");
  optics.validate();
  outputs.validate();
  distribution.validate_bins();
  geometry.validate();
  if (optics.wavelengths != outputs.wavelengths) {
    throw domain_error("record " + id + ": optical_properties and outputs use different wavelength grids (" +
                       std::to_string(optics.size()) + " vs " + std::to_string(outputs.size()) + " points)");
  }
}

std::string optics_csv(const mie::BulkOpticalProperties& o) {
  return io::csv_text(kOpticsHeader, {o.wavelengths, o.mu_a, o.mu_s, o.g});
}

std::string outputs_csv(const transport::SpectralResponse& r) {
  return io::csv_text(kOutputsHeader, {r.wavelengths, r.r_specular, r.r_diffuse, r.absorbance, r.transmittance});
}

mie::BulkOpticalProperties read_optics_csv(const fs::path& path) {
  const auto rows = io::read_csv(path, kOpticsHeader);
  mie::BulkOpticalProperties o;
  o.wavelengths = column(rows, 0);
  o.mu_a = column(rows, 1);
  o.mu_s = column(rows, 2);
  o.g = column(rows, 3);
  return o;
}

transport::SpectralResponse read_outputs_csv(const fs::path& path) {
  const auto rows = io::read_csv(path, kOutputsHeader);
  transport::SpectralResponse r;
  r.wavelengths = column(rows, 0);
  r.r_specular = column(rows, 1);
  r.r_diffuse = column(rows, 2);
  r.absorbance = column(rows, 3);
  r.transmittance = column(rows, 4);
  return r;
}

fs::path write_record(const SimulationRecord& record, const fs::path& root) {
  record.validate();
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw io_error("cannot create " + root.string() + ": " + ec.message());

  const fs::path final_dir = root / record.id;
  const fs::path tmp_dir = root / ("." + record.id + ".partial");
  fs::remove_all(tmp_dir, ec);
  fs::create_directories(tmp_dir, ec);
  if (ec) throw io_error("cannot create " + tmp_dir.string() + ": " + ec.message());

  json inputs;
  inputs["id"] = record.id;
  inputs["geometry"] = {{"thickness", record.geometry.thickness},
                        {"n_layer", record.geometry.n_layer},
                        {"n_ambient_top", record.geometry.n_ambient_top},
                        {"n_ambient_bottom", record.geometry.n_ambient_bottom}};
  inputs["size_distribution"] = {{"radii", record.distribution.radii},
                                 {"number_density", record.distribution.number_density}};
  inputs["parameters"] = record.parameters;
  io::write_text_atomic(tmp_dir / kInputsFile, inputs.dump(2) + "\n");

  io::write_text_atomic(tmp_dir / kOpticsFile, optics_csv(record.optics));
  io::write_text_atomic(tmp_dir / kOutputsFile, outputs_csv(record.outputs));
  json meta = {{"format_version", kFormatVersion},
               {"seed", record.meta.seed},
               {"n_photons", record.meta.n_photons},
               {"timestamp", record.meta.timestamp}};
  io::write_text_atomic(tmp_dir / kMetaFile, meta.dump(2) + "\n");

  fs::remove_all(final_dir, ec);
  fs::rename(tmp_dir, final_dir, ec);
  if (ec) throw io_error("cannot move record into " + final_dir.string() + ": " + ec.message());
  return final_dir;
}

SimulationRecord read_record(const fs::path& folder) {
  if (!fs::is_directory(folder)) throw io_error(folder.string() + ": record folder does not exist");
  for (const char* name : {kInputsFile, kOpticsFile, kOutputsFile, kMetaFile}) require_file(folder, name);

  SimulationRecord rec;
  const fs::path inputs_path = folder / kInputsFile;
  const json inputs = io::read_json(inputs_path);
  rec.id = io::field<std::string>(inputs, "id", inputs_path);
  const json geom = io::field<json>(inputs, "geometry", inputs_path);
  rec.geometry.thickness = io::field<double>(geom, "thickness", inputs_path);
  rec.geometry.n_layer = io::field<double>(geom, "n_layer", inputs_path);
  rec.geometry.n_ambient_top = io::field<double>(geom, "n_ambient_top", inputs_path);
  rec.geometry.n_ambient_bottom = io::field<double>(geom, "n_ambient_bottom", inputs_path);
  const json dist = io::field<json>(inputs, "size_distribution", inputs_path);
  rec.distribution.radii = io::field<std::vector<double>>(dist, "radii", inputs_path);
  rec.distribution.number_density = io::field<std::vector<double>>(dist, "number_density", inputs_path);
  if (inputs.contains("parameters")) {
    try {
      rec.parameters = inputs.at("parameters").get<std::map<std::string, double>>();
    } catch (const json::exception& e) {
      throw io_error(inputs_path.string() + ": field 'parameters' must map names to numbers");
    }
  }

  rec.optics = read_optics_csv(folder / kOpticsFile);
  rec.outputs = read_outputs_csv(folder / kOutputsFile);

  const fs::path meta_path = folder / kMetaFile;
  const json meta = io::read_json(meta_path);
  const int version = io::field<int>(meta, "format_version", meta_path);
  if (version != kFormatVersion) {
    throw io_error(meta_path.string() + ": unsupported format_version " + std::to_string(version));
  }
  rec.meta.seed = io::field<std::uint64_t>(meta, "seed", meta_path);
  rec.meta.n_photons = io::field<std::uint64_t>(meta, "n_photons", meta_path);
  rec.meta.timestamp = io::field<std::string>(meta, "timestamp", meta_path);

  rec.validate();
  return rec;
}

std::vector<double> assemble_features(const SimulationRecord& record) {
  const auto& o = record.optics;
  if (o.mu_a.size() != o.size() || o.mu_s.size() != o.size() || o.g.size() != o.size()) {
    throw domain_error("assemble_features: optical property arrays differ in length");
  }
  std::vector<double> y;
  y.reserve(3 * o.size() + record.n_rho());
  y.insert(y.end(), o.mu_a.begin(), o.mu_a.end());
  y.insert(y.end(), o.mu_s.begin(), o.mu_s.end());
  y.insert(y.end(), o.g.begin(), o.g.end());
  y.insert(y.end(), record.distribution.number_density.begin(), record.distribution.number_density.end());
  return y;
}

std::vector<double> assemble_targets(const SimulationRecord& record) {
  const auto& r = record.outputs;
  if (r.wavelengths != record.optics.wavelengths) {
    throw domain_error("assemble_targets: record " + record.id + " has mismatched wavelength grids");
  }
  const auto n = r.size();
  std::vector<double> x(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = r.r_total(i);
    x[n + i] = r.absorbance[i];
    x[2 * n + i] = r.transmittance[i];
  }
  return x;
}

SpectralTriplet split_targets(std::span<const double> targets, std::size_t n) {
  if (targets.size() != 3 * n) {
    throw domain_error("split_targets: expected " + std::to_string(3 * n) + " values, got " +
                       std::to_string(targets.size()));
  }
  SpectralTriplet t;
  t.r_total.assign(targets.begin(), targets.begin() + n);
  t.absorbance.assign(targets.begin() + n, targets.begin() + 2 * n);
  t.transmittance.assign(targets.begin() + 2 * n, targets.end());
  return t;
}

void write_manifest(const Manifest& m, const fs::path& root) {
  json j = {{"format_version", m.format_version},
            {"wavelengths", m.wavelengths},
            {"n_wavelengths", m.wavelengths.size()},
            {"n_rho", m.n_rho},
            {"record_count", m.record_count},
            {"records", m.record_ids}};
  std::error_code ec;
  fs::create_directories(root, ec);
  io::write_text_atomic(root / kManifestFile, j.dump(2) + "\n");
}

Manifest read_manifest(const fs::path& root) {
  const fs::path path = root / kManifestFile;
  if (!fs::is_regular_file(path)) throw io_error(root.string() + ": missing dataset manifest '" + kManifestFile + "'");
  const json j = io::read_json(path);
  Manifest m;
  m.format_version = io::field<int>(j, "format_version", path);
  if (m.format_version != kFormatVersion) {
    throw io_error(path.string() + ": unsupported format_version " + std::to_string(m.format_version));
  }
  m.wavelengths = io::field<std::vector<double>>(j, "wavelengths", path);
  m.n_rho = io::field<std::uint64_t>(j, "n_rho", path);
  m.record_count = io::field<std::uint64_t>(j, "record_count", path);
  m.record_ids = io::field<std::vector<std::string>>(j, "records", path);
  if (m.record_ids.size() != m.record_count) {
    throw io_error(path.string() + ": record_count does not match the record list");
  }
  return m;
}

Eigen::MatrixXd Dataset::features() const {
  Eigen::MatrixXd y(records.size(), manifest.feature_dim());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto f = assemble_features(records[i]);
    y.row(i) = Eigen::Map<const Eigen::RowVectorXd>(f.data(), f.size());
  }
  return y;
}

Eigen::MatrixXd Dataset::targets() const {
  Eigen::MatrixXd x(records.size(), manifest.target_dim());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto t = assemble_targets(records[i]);
    x.row(i) = Eigen::Map<const Eigen::RowVectorXd>(t.data(), t.size());
  }
  return x;
}

Dataset load_dataset(const fs::path& root) {
  Dataset ds;
  ds.manifest = read_manifest(root);
  ds.records.reserve(ds.manifest.record_ids.size());
  for (const auto& id : ds.manifest.record_ids) {
    SimulationRecord rec = read_record(root / id);
    if (rec.optics.wavelengths != ds.manifest.wavelengths) {
      throw domain_error("dataset " + root.string() + ": record " + id + " uses a different wavelength grid");
    }
    if (rec.n_rho() != ds.manifest.n_rho) {
      throw domain_error("dataset " + root.string() + ": record " + id + " has " + std::to_string(rec.n_rho()) +
                         " size bins, manifest declares " + std::to_string(ds.manifest.n_rho));
    }
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

std::size_t SweepConfig::combinations() const {
  return median_radius.size() * sigma_ln.size() * volume_fraction.size() * thickness.size();
}

void SweepConfig::validate() const {
  if (wavelengths.empty()) throw domain_error("sweep: empty wavelength grid");
  for (std::size_t i = 0; i < wavelengths.size(); ++i) {
    if (!(wavelengths[i] > 0.0) || (i > 0 && !(wavelengths[i] > wavelengths[i - 1]))) {
      throw domain_error("sweep: wavelengths must be positive and strictly increasing");
    }
  }
  if (bin_edges.size() < 2) throw domain_error("sweep: need at least two radius bin edges");
  check_axis(median_radius, "median_radius", false);
  check_axis(sigma_ln, "sigma_ln", false);
  check_axis(volume_fraction, "volume_fraction", true);
  check_axis(thickness, "thickness", false);
  geometry.validate();
  simulation.validate();
  if (!(materials.n_host > 0.0)) throw domain_error("sweep: host index must be positive");
}

SimulationRecord simulate_combination(const SweepConfig& sweep, std::size_t index) {
  const std::size_t nt = sweep.thickness.size();
  const std::size_t nf = sweep.volume_fraction.size();
  const std::size_t ns = sweep.sigma_ln.size();
  const double thickness = sweep.thickness[index % nt];
  const double fraction = sweep.volume_fraction[(index / nt) % nf];
  const double sigma = sweep.sigma_ln[(index / (nt * nf)) % ns];
  const double median = sweep.median_radius[index / (nt * nf * ns)];

  SimulationRecord rec;
  rec.id = combination_id(sweep, index);
  rec.parameters = {{"median_radius", median},
                    {"sigma_ln", sigma},
                    {"volume_fraction", fraction},
                    {"thickness", thickness}};
  const double density = mie::lognormal_density_for_fraction(fraction, median, sigma);
  rec.distribution = mie::lognormal_on_edges(sweep.bin_edges, median, sigma, density);
  rec.optics = mie::spectrum(rec.distribution, sweep.wavelengths, sweep.materials);
  rec.geometry = sweep.geometry;
  rec.geometry.thickness = thickness;

  transport::SimulationConfig sim = sweep.simulation;
  sim.seed = derive_seed(sweep.simulation.seed, index);
  rec.outputs = transport::run_spectrum(rec.optics, rec.geometry, sim);
  rec.meta.seed = sim.seed;
  rec.meta.n_photons = sim.n_photons;
  rec.meta.timestamp = sweep.timestamp;
  return rec;
}

GenerateSummary generate_dataset(const SweepConfig& sweep, const fs::path& root) {
  sweep.validate();
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw io_error("cannot create " + root.string() + ": " + ec.message());
  if (fs::is_regular_file(root / kManifestFile)) {
    const Manifest existing = read_manifest(root);
    if (existing.wavelengths != sweep.wavelengths || existing.n_rho + 1 != sweep.bin_edges.size()) {
      throw domain_error(root.string() + ": existing dataset uses a different wavelength grid or bin count");
    }
  }

  GenerateSummary summary;
  Manifest manifest;
  manifest.wavelengths = sweep.wavelengths;
  manifest.n_rho = sweep.bin_edges.size() - 1;

  const std::size_t total = sweep.combinations();
  for (std::size_t i = 0; i < total; ++i) {
    const std::string id = combination_id(sweep, i);
    const fs::path folder = root / id;
    if (fs::is_directory(folder)) {
      try {
        const SimulationRecord existing = read_record(folder);
        if (existing.optics.wavelengths == sweep.wavelengths && existing.n_rho() == manifest.n_rho) {
          ++summary.skipped;
          manifest.record_ids.push_back(id);
          continue;
        }
      } catch (const Error&) {
        // incomplete or stale folder: regenerate
      }
    }
    try {
      const SimulationRecord rec = simulate_combination(sweep, i);
      write_record(rec, root);
      manifest.record_ids.push_back(id);
      ++summary.generated;
      log::info("dataset", {{"event", "record_written"}, {"id", id}, {"index", std::to_string(i)},
                            {"total", std::to_string(total)}});
    } catch (const Error& e) {
      ++summary.failed;
      log::warn("dataset", {{"event", "record_failed"}, {"id", id}, {"error", e.what()}});
    }
  }
  manifest.record_count = manifest.record_ids.size();
  write_manifest(manifest, root);
  return summary;
}

NormalizationStats NormalizationStats::fit(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets) {
  if (features.rows() < 2) throw domain_error("normalization: need at least 2 training rows");
  if (features.rows() != targets.rows()) throw domain_error("normalization: feature/target row counts differ");
  auto column_stats = [](const Eigen::MatrixXd& m, Eigen::VectorXd& mean, Eigen::VectorXd& sd) {
    const double n = static_cast<double>(m.rows());
    mean.resize(m.cols());
    sd.resize(m.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      double s = 0.0;
      for (Eigen::Index r = 0; r < m.rows(); ++r) s += m(r, c);
      const double mu = s / n;
      double ss = 0.0;
      for (Eigen::Index r = 0; r < m.rows(); ++r) ss += (m(r, c) - mu) * (m(r, c) - mu);
      const double sigma = std::sqrt(ss / n);
      mean(c) = mu;
      // Constant columns leave rounding-level spread behind.
      sd(c) = (sigma > 1e-12 * std::abs(mu) && sigma > 0.0) ? sigma : 1.0;
    }
  };
  NormalizationStats s;
  column_stats(features, s.feature_mean, s.feature_std);
  column_stats(targets, s.target_mean, s.target_std);
  return s;
}

namespace {

Eigen::MatrixXd standardize(const Eigen::MatrixXd& m, const Eigen::VectorXd& mean, const Eigen::VectorXd& sd) {
  if (m.cols() != mean.size()) throw domain_error("normalization: column count mismatch");
  return (m.rowwise() - mean.transpose()).array().rowwise() / sd.transpose().array();
}

Eigen::MatrixXd unstandardize(const Eigen::MatrixXd& m, const Eigen::VectorXd& mean, const Eigen::VectorXd& sd) {
  if (m.cols() != mean.size()) throw domain_error("normalization: column count mismatch");
  Eigen::MatrixXd out = m.array().rowwise() * sd.transpose().array();
  return out.rowwise() + mean.transpose();
}

}  // namespace

Eigen::MatrixXd NormalizationStats::apply_features(const Eigen::MatrixXd& f) const {
  return standardize(f, feature_mean, feature_std);
}
Eigen::MatrixXd NormalizationStats::invert_features(const Eigen::MatrixXd& f) const {
  return unstandardize(f, feature_mean, feature_std);
}
Eigen::MatrixXd NormalizationStats::apply_targets(const Eigen::MatrixXd& t) const {
  return standardize(t, target_mean, target_std);
}
Eigen::MatrixXd NormalizationStats::invert_targets(const Eigen::MatrixXd& t) const {
  return unstandardize(t, target_mean, target_std);
}

double NormalizationStats::log_target_scale() const {
  double s = 0.0;
  for (Eigen::Index j = 0; j < target_std.size(); ++j) s += std::log(target_std(j));
  return s;
}

std::vector<std::size_t> FoldSplit::validation_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] == fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldSplit::training_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] != fold) out.push_back(i);
  }
  return out;
}

FoldSplit kfold_split(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2) throw domain_error("kfold_split: K must be >= 2");
  if (n < static_cast<std::size_t>(k)) {
    throw domain_error("kfold_split: " + std::to_string(n) + " samples cannot fill " + std::to_string(k) + " folds");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  RandomStream rng(seed, 0x6b666f6c64ull);
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_u64() % (i + 1));
    std::swap(order[i], order[j]);
  }
  FoldSplit split;
  split.k = k;
  split.assignments.assign(n, 0);
  const std::size_t base = n / k;
  const std::size_t extra = n % k;
  std::size_t pos = 0;
  for (int f = 0; f < k; ++f) {
    const std::size_t size = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) split.assignments[order[pos++]] = f;
  }
  return split;
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

}  // namespace nanoflow::dataset
