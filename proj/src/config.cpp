#include "nanoflow/config.hpp"

#include <cmath>
#include <set>

#include "io.hpp"
#include "nanoflow/error.hpp"

namespace nanoflow::config {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Object reader that remembers which keys were consumed so leftovers can be
/// reported as typos.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw domain_error("config: " + where() + " must be an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  const json& raw(const char* key) {
    seen_.insert(key);
    if (!has(key)) throw domain_error("config: missing required key '" + child(key) + "'");
    return j_.at(key);
  }

  std::string child(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  double real(const char* key, double fallback) {
    if (!has(key)) return fallback;
    return as_real(raw(key), child(key));
  }

  template <class Int>
  Int integer(const char* key, Int fallback, long long lo) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_number_integer() && !(v.is_number_float() && std::floor(v.get<double>()) == v.get<double>())) {
      throw domain_error("config: " + child(key) + " must be an integer");
    }
    const long long x = v.is_number_integer() ? v.get<long long>() : static_cast<long long>(v.get<double>());
    if (x < lo) throw domain_error("config: " + child(key) + " must be >= " + std::to_string(lo));
    return static_cast<Int>(x);
  }

  bool boolean(const char* key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_boolean()) throw domain_error("config: " + child(key) + " must be true or false");
    return v.get<bool>();
  }

  std::string text(const char* key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_string()) throw domain_error("config: " + child(key) + " must be a string");
    return v.get<std::string>();
  }

  std::vector<double> reals(const char* key) {
    const json& v = raw(key);
    if (!v.is_array()) throw domain_error("config: " + child(key) + " must be an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_real(v[i], child(key) + "[" + std::to_string(i) + "]"));
    return out;
  }

  std::vector<int> ints(const char* key) {
    const json& v = raw(key);
    if (!v.is_array()) throw domain_error("config: " + child(key) + " must be an array of integers");
    std::vector<int> out;
    for (const json& e : v) {
      if (!e.is_number_integer()) throw domain_error("config: " + child(key) + " must be an array of integers");
      out.push_back(e.get<int>());
    }
    return out;
  }

  Section sub(const char* key) { return Section(raw(key), child(key)); }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw domain_error("config: unknown key '" + child(k.c_str()) + "'");
    }
  }

 private:
  static double as_real(const json& v, const std::string& where) {
    if (!v.is_number()) throw domain_error("config: " + where + " must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw domain_error("config: " + where + " must be finite");
    return x;
  }
  std::string where() const { return path_.empty() ? "document" : "'" + path_ + "'"; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

/// A number, or {"wavelengths": [...], "values": [...]}.
mie::SpectralTable table(Section& s, const char* key, const mie::SpectralTable& fallback) {
  if (!s.has(key)) return fallback;
  const json& v = s.raw(key);
  if (v.is_number()) return mie::SpectralTable::constant(v.get<double>());
  Section t(v, s.child(key));
  mie::SpectralTable out{t.reals("wavelengths"), t.reals("values")};
  t.finish();
  if (out.wavelengths.empty() || out.wavelengths.size() != out.values.size()) {
    throw domain_error("config: " + s.child(key) + " needs equal-length, non-empty wavelengths and values");
  }
  for (std::size_t i = 1; i < out.wavelengths.size(); ++i) {
    if (!(out.wavelengths[i] > out.wavelengths[i - 1])) {
      throw domain_error("config: " + s.child(key) + ".wavelengths must be strictly increasing");
    }
  }
  return out;
}

/// An explicit array, or {"start", "stop", "count"} with linear ("linear")
/// or geometric ("log") spacing.
std::vector<double> grid(Section& s, const char* key, const char* default_spacing) {
  const json& v = s.raw(key);
  if (v.is_array()) return s.reals(key);
  Section g(v, s.child(key));
  const double start = g.real("start", NAN);
  const double stop = g.real("stop", NAN);
  const int count = g.integer<int>("count", 0, 1);
  const std::string spacing = g.text("spacing", default_spacing);
  g.finish();
  if (!std::isfinite(start) || !std::isfinite(stop) || count < 1) {
    throw domain_error("config: " + s.child(key) + " needs start, stop and count");
  }
  if (spacing != "linear" && spacing != "log") {
    throw domain_error("config: " + s.child(key) + ".spacing must be \"linear\" or \"log\"");
  }
  if (spacing == "log" && !(start > 0.0 && stop > 0.0)) {
    throw domain_error("config: " + s.child(key) + " log spacing needs positive bounds");
  }
  std::vector<double> out(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double f = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
    out[i] = spacing == "linear" ? start + f * (stop - start) : start * std::pow(stop / start, f);
  }
  if (count > 1) out.back() = stop;
  return out;
}

mie::Materials parse_materials(Section s) {
  mie::Materials m;
  m.particle_n = table(s, "particle_n", m.particle_n);
  m.particle_kappa = table(s, "particle_kappa", m.particle_kappa);
  m.n_host = s.real("n_host", m.n_host);
  m.host_mu_a = table(s, "host_mu_a", m.host_mu_a);
  s.finish();
  if (!(m.n_host > 0.0)) throw domain_error("config: materials.n_host must be positive");
  for (double k : m.particle_kappa.values) {
    if (k < 0.0) throw domain_error("config: materials.particle_kappa must be >= 0");
  }
  for (double a : m.host_mu_a.values) {
    if (a < 0.0) throw domain_error("config: materials.host_mu_a must be >= 0");
  }
  return m;
}

mie::ParticleSizeDistribution parse_distribution(Section s) {
  mie::ParticleSizeDistribution d;
  if (s.has("radii")) {
    d.radii = s.reals("radii");
    d.number_density = s.reals("number_density");
    s.finish();
    d.validate_bins();
    return d;
  }
  const double median = s.real("median_radius", NAN);
  const double sigma = s.real("sigma_ln", NAN);
  const int bins = s.integer<int>("bins", 20, 1);
  const double span = s.real("span_sigmas", 4.0);
  const bool by_fraction = s.has("volume_fraction");
  const bool by_density = s.has("total_density");
  const double fraction = s.real("volume_fraction", 0.0);
  const double density = s.real("total_density", 0.0);
  s.finish();
  if (by_fraction == by_density) {
    throw domain_error("config: distribution needs exactly one of volume_fraction or total_density");
  }
  if (!(median > 0.0) || !(sigma > 0.0)) {
    throw domain_error("config: distribution needs positive median_radius and sigma_ln (or explicit radii)");
  }
  if (fraction < 0.0 || density < 0.0) throw domain_error("config: distribution amount must be >= 0");
  const double total = by_fraction ? mie::lognormal_density_for_fraction(fraction, median, sigma) : density;
  d = mie::lognormal_bins(median, sigma, total, bins, span);
  d.validate_bins();
  return d;
}

transport::SlabGeometry parse_slab(Section s) {
  transport::SlabGeometry g;
  g.thickness = s.real("thickness", g.thickness);
  g.n_layer = s.real("n_layer", g.n_layer);
  g.n_ambient_top = s.real("n_ambient_top", g.n_ambient_top);
  g.n_ambient_bottom = s.real("n_ambient_bottom", g.n_ambient_bottom);
  s.finish();
  g.validate();
  return g;
}

transport::SimulationConfig parse_simulation(Section s) {
  transport::SimulationConfig c;
  c.n_photons = s.integer<std::uint64_t>("n_photons", c.n_photons, 1);
  c.seed = s.integer<std::uint64_t>("seed", c.seed, 0);
  c.roulette_threshold = s.real("roulette_threshold", c.roulette_threshold);
  c.roulette_survival = s.real("roulette_survival", c.roulette_survival);
  c.roulette_enabled = s.boolean("roulette", c.roulette_enabled);
  s.finish();
  c.validate();
  return c;
}

training::TrainConfig parse_training(Section s) {
  training::TrainConfig c;
  c.epochs = s.integer<int>("epochs", c.epochs, 1);
  c.batch_size = s.integer<int>("batch_size", c.batch_size, 1);
  c.lr = s.real("learning_rate", c.lr);
  c.folds = s.integer<int>("folds", c.folds, 2);
  c.seed = s.integer<std::uint64_t>("seed", c.seed, 0);
  c.log_every = s.integer<int>("log_every", c.log_every, 1);
  auto& a = c.architecture;
  if (s.has("hidden")) a.hidden = s.ints("hidden");
  if (s.has("activation")) {
    const std::string name = s.text("activation", "");
    try {
      a.activation = flow::activation_from_name(name);
    } catch (const Error&) {
      throw domain_error("config: training.activation must be \"tanh\" or \"relu\", got \"" + name + "\"");
    }
  }
  a.clamp.lo = s.real("log_scale_min", a.clamp.lo);
  a.clamp.hi = s.real("log_scale_max", a.clamp.hi);
  a.coupling_layers = s.integer<int>("coupling_layers", a.coupling_layers, 0);
  if (s.has("coupling_hidden")) a.coupling_hidden = s.ints("coupling_hidden");
  a.initial_log_scale = s.real("initial_log_scale", a.initial_log_scale);
  s.finish();
  c.validate();
  return c;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

const std::vector<double>& RunConfig::require_wavelengths() const {
  if (wavelengths.empty()) throw domain_error("config: 'wavelengths' is required for this command");
  return wavelengths;
}

const mie::ParticleSizeDistribution& RunConfig::require_distribution() const {
  if (!distribution) throw domain_error("config: 'distribution' is required for this command");
  return *distribution;
}

const dataset::SweepConfig& RunConfig::require_sweep() const {
  if (!sweep) throw domain_error("config: 'sweep' is required for this command");
  return *sweep;
}

RunConfig parse(const std::string& text, const fs::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw domain_error(std::string("config: malformed JSON: ") + e.what());
  }
  RunConfig rc;
  Section root(doc, "");
  if (root.has("materials")) rc.materials = parse_materials(root.sub("materials"));
  if (root.has("wavelengths")) {
    rc.wavelengths = grid(root, "wavelengths", "linear");
    for (std::size_t i = 0; i < rc.wavelengths.size(); ++i) {
      if (!(rc.wavelengths[i] > 0.0) || (i > 0 && !(rc.wavelengths[i] > rc.wavelengths[i - 1]))) {
        throw domain_error("config: wavelengths must be positive and strictly increasing");
      }
    }
  }
  if (root.has("distribution")) rc.distribution = parse_distribution(root.sub("distribution"));
  if (root.has("slab")) rc.slab = parse_slab(root.sub("slab"));
  if (root.has("simulation")) rc.simulation = parse_simulation(root.sub("simulation"));
  if (root.has("training")) rc.training = parse_training(root.sub("training"));
  if (root.has("predict")) {
    Section s = root.sub("predict");
    rc.predict.samples_per_model = s.integer<std::size_t>("samples_per_model", rc.predict.samples_per_model, 1);
    rc.predict.seed = s.integer<std::uint64_t>("seed", rc.predict.seed, 0);
    rc.predict.plots = s.boolean("plots", rc.predict.plots);
    s.finish();
  }
  if (root.has("evaluate")) {
    Section s = root.sub("evaluate");
    rc.evaluate.samples_per_model = s.integer<std::size_t>("samples_per_model", rc.evaluate.samples_per_model, 2);
    rc.evaluate.seed = s.integer<std::uint64_t>("seed", rc.evaluate.seed, 0);
    s.finish();
  }
  if (root.has("paths")) {
    Section s = root.sub("paths");
    rc.paths.dataset = resolve(base_dir, s.text("dataset", ""));
    rc.paths.checkpoints = resolve(base_dir, s.text("checkpoints", ""));
    rc.paths.output = resolve(base_dir, s.text("output", ""));
    rc.paths.optical_properties = resolve(base_dir, s.text("optical_properties", ""));
    rc.paths.input = resolve(base_dir, s.text("input", ""));
    s.finish();
  }
  if (root.has("sweep")) {
    Section s = root.sub("sweep");
    dataset::SweepConfig sw;
    sw.materials = rc.materials;
    sw.wavelengths = rc.wavelengths;
    sw.geometry = rc.slab;
    sw.simulation = rc.simulation;
    sw.bin_edges = grid(s, "bin_edges", "log");
    sw.median_radius = s.reals("median_radius");
    sw.sigma_ln = s.reals("sigma_ln");
    sw.volume_fraction = s.reals("volume_fraction");
    sw.thickness = s.reals("thickness");
    sw.id_prefix = s.text("id_prefix", sw.id_prefix);
    sw.timestamp = s.text("timestamp", sw.timestamp);
    s.finish();
    sw.validate();
    rc.sweep = std::move(sw);
  }
  root.finish();
  return rc;
}

RunConfig load(const fs::path& path) {
  std::string text;
  try {
    text = io::read_text(path);
  } catch (const Error& e) {
    throw domain_error("config: cannot read " + path.string());
  }
  RunConfig rc = parse(text, path.parent_path());
  rc.source = path;
  return rc;
}

std::string with_override(const std::string& text, const std::string& dotted_key, const std::string& value) {
  json doc;
  try {
    doc = text.empty() ? json::object() : json::parse(text);
  } catch (const json::parse_error& e) {
    throw domain_error(std::string("config: malformed JSON: ") + e.what());
  }
  if (dotted_key.empty()) throw domain_error("config: empty override key");
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted_key.find('.', start);
    const std::string part = dotted_key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw domain_error("config: malformed override key '" + dotted_key + "'");
    if (!node->is_object()) throw domain_error("config: override '" + dotted_key + "' crosses a non-object");
    if (dot == std::string::npos) {
      json v;
      try {
        v = json::parse(value);
      } catch (const json::parse_error&) {
        v = value;
      }
      (*node)[part] = std::move(v);
      break;
    }
    if (!node->contains(part)) (*node)[part] = json::object();
    node = &(*node)[part];
    start = dot + 1;
  }
  return doc.dump();
}

}  // namespace nanoflow::config
