#include "nanoflow/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "nanoflow/error.hpp"
#include "nanoflow/parallel.hpp"
#include "nanoflow/rng.hpp"

namespace nanoflow::transport {

namespace {

constexpr std::uint64_t kChunkPhotons = 4096;
// With roulette off, weight below this is deposited as absorbed.
constexpr double kNegligibleWeight = 1e-14;
constexpr std::uint64_t kMaxInteractions = 1'000'000'000;
constexpr double kCosOne = 1.0 - 1e-12;

bool finite_positive(double v) { return std::isfinite(v) && v > 0.0; }

/// Per-chunk accumulators; reduced in chunk order.
struct Moments {
  double sum_r = 0, sum_r2 = 0;
  double sum_a = 0, sum_a2 = 0;
  double sum_t = 0, sum_t2 = 0;
  double sum_x = 0, sum_x2 = 0;
  double sum_y = 0, sum_y2 = 0;
  double sum_e = 0, sum_e2 = 0;

  void add(const Moments& o) {
    sum_r += o.sum_r; sum_r2 += o.sum_r2;
    sum_a += o.sum_a; sum_a2 += o.sum_a2;
    sum_t += o.sum_t; sum_t2 += o.sum_t2;
    sum_x += o.sum_x; sum_x2 += o.sum_x2;
    sum_y += o.sum_y; sum_y2 += o.sum_y2;
    sum_e += o.sum_e; sum_e2 += o.sum_e2;
  }
};

struct PhotonTally {
  double r = 0, a = 0, t = 0, x = 0, y = 0;
};

struct Direction {
  double ux, uy, uz;
};

Direction spin(const Direction& d, double cos_theta, double phi) {
  const double sin_theta = std::sqrt(std::max(0.0, 1.0 - cos_theta * cos_theta));
  const double cos_phi = std::cos(phi);
  const double sin_phi = std::sin(phi);
  Direction out;
  if (std::abs(d.uz) > kCosOne) {
    out = {sin_theta * cos_phi, sin_theta * sin_phi, std::copysign(cos_theta, d.uz)};
  } else {
    const double temp = std::sqrt(1.0 - d.uz * d.uz);
    out.ux = sin_theta * (d.ux * d.uz * cos_phi - d.uy * sin_phi) / temp + d.ux * cos_theta;
    out.uy = sin_theta * (d.uy * d.uz * cos_phi + d.ux * sin_phi) / temp + d.uy * cos_theta;
    out.uz = -sin_theta * cos_phi * temp + d.uz * cos_theta;
  }
  const double norm = std::sqrt(out.ux * out.ux + out.uy * out.uy + out.uz * out.uz);
  return {out.ux / norm, out.uy / norm, out.uz / norm};
}

PhotonTally trace_photon(const LayerSpec& layer, const SimulationConfig& cfg, double entry_weight,
                         RandomStream& rng) {
  const double d = layer.geometry.thickness;
  const double n_layer = layer.geometry.n_layer;
  const double mu_t = layer.mu_t();
  const double albedo_loss = mu_t > 0.0 ? layer.mu_a / mu_t : 0.0;

  PhotonTally tally;
  double w = entry_weight;
  double x = 0.0, y = 0.0, z = 0.0;
  Direction dir{0.0, 0.0, 1.0};
  double s_left = 0.0;  // remaining step in optical depths

  for (std::uint64_t step = 0;; ++step) {
    if (step > kMaxInteractions) {
      throw numerical_error("simulate: photon exceeded interaction limit");
    }
    double s_geom = std::numeric_limits<double>::infinity();
    if (mu_t > 0.0) {
      if (s_left == 0.0) s_left = -std::log(rng.uniform());
      s_geom = s_left / mu_t;
    }

    double d_boundary = std::numeric_limits<double>::infinity();
    if (dir.uz > 0.0) {
      d_boundary = (d - z) / dir.uz;
    } else if (dir.uz < 0.0) {
      d_boundary = z / -dir.uz;
    }

    if (s_geom >= d_boundary) {
      x += d_boundary * dir.ux;
      y += d_boundary * dir.uy;
      const bool downward = dir.uz > 0.0;
      z = downward ? d : 0.0;
      if (mu_t > 0.0) s_left = std::max(0.0, s_left - d_boundary * mu_t);

      const double n_out = downward ? layer.geometry.n_ambient_bottom : layer.geometry.n_ambient_top;
      const FresnelResult fr = fresnel_interface(dir.uz, n_layer, n_out);
      if (fr.total_internal || (fr.reflect_prob > 0.0 && rng.uniform() <= fr.reflect_prob)) {
        dir.uz = -dir.uz;
        continue;
      }
      if (downward) {
        tally.t += w;
      } else {
        tally.r += w;
        tally.x = w * x;
        tally.y = w * y;
      }
      return tally;
    }

    x += s_geom * dir.ux;
    y += s_geom * dir.uy;
    z += s_geom * dir.uz;
    z = std::clamp(z, 0.0, d);
    s_left = 0.0;

    const double dw = w * albedo_loss;
    tally.a += dw;
    w -= dw;
    if (w <= 0.0) return tally;

    dir = spin(dir, sample_hg(layer.g, rng.uniform()), 2.0 * std::numbers::pi * rng.uniform());

    if (w < cfg.roulette_threshold) {
      if (cfg.roulette_enabled) {
        if (rng.uniform() <= cfg.roulette_survival) {
          w /= cfg.roulette_survival;
        } else {
          return tally;
        }
      } else if (w < kNegligibleWeight) {
        tally.a += w;
        return tally;
      }
    }
  }
}

double standard_error(double sum, double sum2, double n) {
  if (n < 2.0) return 0.0;
  const double mean = sum / n;
  const double var = std::max(0.0, (sum2 - n * mean * mean) / (n - 1.0));
  return std::sqrt(var / n);
}

}  // namespace

void SlabGeometry::validate() const {
  if (!finite_positive(thickness)) throw domain_error("layer: thickness must be positive and finite");
  if (!finite_positive(n_layer) || !finite_positive(n_ambient_top) || !finite_positive(n_ambient_bottom)) {
    throw domain_error("layer: refractive indices must be positive and finite");
  }
}

void LayerSpec::validate() const {
  geometry.validate();
  if (!std::isfinite(mu_a) || !std::isfinite(mu_s) || mu_a < 0.0 || mu_s < 0.0) {
    throw domain_error("layer: mu_a and mu_s must be finite and >= 0");
  }
  if (!(g > -1.0 && g < 1.0)) throw domain_error("layer: g must lie in (-1, 1)");
}

void SimulationConfig::validate() const {
  if (n_photons == 0) throw domain_error("simulate: n_photons must be >= 1");
  if (!(roulette_survival > 0.0 && roulette_survival <= 1.0)) {
    throw domain_error("simulate: roulette_survival must lie in (0, 1]");
  }
  if (!(roulette_threshold > 0.0 && roulette_threshold < 1.0)) {
    throw domain_error("simulate: roulette_threshold must lie in (0, 1)");
  }
}

std::vector<double> SpectralResponse::r_total() const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = r_total(i);
  return out;
}

void SpectralResponse::validate() const {
  const auto n = wavelengths.size();
  if (r_specular.size() != n || r_diffuse.size() != n || absorbance.size() != n || transmittance.size() != n) {
    throw domain_error("spectral response: array lengths differ");
  }
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  for (std::size_t i = 0; i < n; ++i) {
    if (!in_unit(r_specular[i]) || !in_unit(r_diffuse[i]) || !in_unit(absorbance[i]) ||
        !in_unit(transmittance[i])) {
      throw domain_error("spectral response: fractions must lie in [0, 1]");
    }
  }
}

double specular_reflectance(double n_ambient, double n_layer) {
  if (!finite_positive(n_ambient) || !finite_positive(n_layer)) {
    throw domain_error("specular_reflectance: indices must be positive");
  }
  const double r = (n_ambient - n_layer) / (n_ambient + n_layer);
  return r * r;
}

double sample_step(double mu_t, double u) {
  if (!(mu_t > 0.0)) throw domain_error("sample_step: mu_t must be positive");
  if (!(u > 0.0 && u < 1.0)) throw domain_error("sample_step: u must lie in (0, 1)");
  return -std::log(u) / mu_t;
}

double sample_hg(double g, double u) {
  if (!(g > -1.0 && g < 1.0)) throw domain_error("sample_hg: |g| must be < 1");
  if (g == 0.0) return 2.0 * u - 1.0;
  const double frac = (1.0 - g * g) / (1.0 - g + 2.0 * g * u);
  return std::clamp((1.0 + g * g - frac * frac) / (2.0 * g), -1.0, 1.0);
}

FresnelResult fresnel_interface(double uz, double n_from, double n_to) {
  const double cos_i = std::abs(uz);
  if (!(cos_i > 0.0 && cos_i <= 1.0)) throw domain_error("fresnel_interface: |uz| must lie in (0, 1]");
  FresnelResult res;
  if (n_from == n_to) {
    res.refracted_uz = uz;
    return res;
  }
  const double sin_i2 = std::max(0.0, 1.0 - cos_i * cos_i);
  const double ratio = n_from / n_to;
  const double sin_t2 = ratio * ratio * sin_i2;
  if (sin_t2 >= 1.0) {
    res.reflect_prob = 1.0;
    res.total_internal = true;
    return res;
  }
  const double cos_t = std::sqrt(1.0 - sin_t2);
  const double rs = (n_from * cos_i - n_to * cos_t) / (n_from * cos_i + n_to * cos_t);
  const double rp = (n_to * cos_i - n_from * cos_t) / (n_to * cos_i + n_from * cos_t);
  res.reflect_prob = 0.5 * (rs * rs + rp * rp);
  res.refracted_uz = std::copysign(cos_t, uz);
  return res;
}

TallyResult simulate(const LayerSpec& layer, const SimulationConfig& config) {
  layer.validate();
  config.validate();

  const double r_sp = specular_reflectance(layer.geometry.n_ambient_top, layer.geometry.n_layer);
  const double entry = 1.0 - r_sp;
  const std::uint64_t n = config.n_photons;
  const std::uint64_t chunks = (n + kChunkPhotons - 1) / kChunkPhotons;
  std::vector<Moments> partial(chunks);

  parallel_for(chunks, config.threads, [&](std::size_t c) {
    Moments m;
    const std::uint64_t begin = c * kChunkPhotons;
    const std::uint64_t end = std::min(n, begin + kChunkPhotons);
    for (std::uint64_t p = begin; p < end; ++p) {
      RandomStream rng(config.seed, p);
      const PhotonTally t = trace_photon(layer, config, entry, rng);
      m.sum_r += t.r; m.sum_r2 += t.r * t.r;
      m.sum_a += t.a; m.sum_a2 += t.a * t.a;
      m.sum_t += t.t; m.sum_t2 += t.t * t.t;
      m.sum_x += t.x; m.sum_x2 += t.x * t.x;
      m.sum_y += t.y; m.sum_y2 += t.y * t.y;
      const double e = t.r + t.a + t.t;
      m.sum_e += e; m.sum_e2 += e * e;
    }
    partial[c] = m;
  });

  Moments total;
  for (const auto& m : partial) total.add(m);

  const double nd = static_cast<double>(n);
  TallyResult r;
  r.r_specular = r_sp;
  r.r_diffuse = total.sum_r / nd;
  r.absorbance = total.sum_a / nd;
  r.transmittance = total.sum_t / nd;
  r.stderr_r = standard_error(total.sum_r, total.sum_r2, nd);
  r.stderr_a = standard_error(total.sum_a, total.sum_a2, nd);
  r.stderr_t = standard_error(total.sum_t, total.sum_t2, nd);
  r.lateral_x = total.sum_x / nd;
  r.lateral_y = total.sum_y / nd;
  r.stderr_lateral_x = standard_error(total.sum_x, total.sum_x2, nd);
  r.stderr_lateral_y = standard_error(total.sum_y, total.sum_y2, nd);
  r.stderr_energy = standard_error(total.sum_e, total.sum_e2, nd);
  if (!std::isfinite(r.energy_sum())) throw numerical_error("simulate: non-finite tally");
  return r;
}

std::uint64_t wavelength_seed(std::uint64_t seed, std::size_t index) { return derive_seed(seed, index); }

SpectralResponse run_spectrum(const mie::BulkOpticalProperties& props, const SlabGeometry& geometry,
                              const SimulationConfig& config,
                              std::optional<std::span<const std::uint64_t>> seeds) {
  props.validate();
  geometry.validate();
  if (seeds && seeds->size() != props.size()) {
    throw domain_error("run_spectrum: seed list length differs from wavelength grid");
  }
  SpectralResponse out;
  out.wavelengths = props.wavelengths;
  const auto n = props.size();
  out.r_specular.resize(n);
  out.r_diffuse.resize(n);
  out.absorbance.resize(n);
  out.transmittance.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    LayerSpec layer{geometry, props.mu_a[i], props.mu_s[i], props.g[i]};
    SimulationConfig cfg = config;
    cfg.seed = seeds ? (*seeds)[i] : wavelength_seed(config.seed, i);
    const TallyResult t = simulate(layer, cfg);
    out.r_specular[i] = t.r_specular;
    out.r_diffuse[i] = t.r_diffuse;
    out.absorbance[i] = t.absorbance;
    out.transmittance[i] = t.transmittance;
  }
  return out;
}

}  // namespace nanoflow::transport
