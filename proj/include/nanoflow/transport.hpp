#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "nanoflow/mie.hpp"

namespace nanoflow::transport {

/// Slab geometry shared by every wavelength of a run.
struct SlabGeometry {
  double thickness = 1e-3;  ///< [m]
  double n_layer = 1.0;
  double n_ambient_top = 1.0;
  double n_ambient_bottom = 1.0;

  void validate() const;
};

/// One homogeneous turbid slab, illuminated at normal incidence from the top
/// (z = 0) face.
struct LayerSpec {
  SlabGeometry geometry;
  double mu_a = 0.0;  ///< [1/m]
  double mu_s = 0.0;  ///< [1/m]
  double g = 0.0;

  double mu_t() const { return mu_a + mu_s; }
  void validate() const;
};

struct SimulationConfig {
  std::uint64_t n_photons = 100000;
  std::uint64_t seed = 1;
  double roulette_threshold = 1e-4;
  double roulette_survival = 0.1;
  bool roulette_enabled = true;
  int threads = 0;  ///< <= 0: process default

  void validate() const;
};

/// Fractions of launched energy, with standard errors of the Monte Carlo
/// means. The lateral fields are the reflected-weight-weighted mean exit
/// position per launched photon [m].
struct TallyResult {
  double r_specular = 0.0;
  double r_diffuse = 0.0;
  double absorbance = 0.0;
  double transmittance = 0.0;
  double stderr_r = 0.0;
  double stderr_a = 0.0;
  double stderr_t = 0.0;
  double lateral_x = 0.0;
  double lateral_y = 0.0;
  double stderr_lateral_x = 0.0;
  double stderr_lateral_y = 0.0;
  double stderr_energy = 0.0;  ///< of the per-photon R + A + T sum

  double r_total() const { return r_specular + r_diffuse; }
  double energy_sum() const { return r_specular + r_diffuse + absorbance + transmittance; }
};

struct SpectralResponse {
  std::vector<double> wavelengths;
  std::vector<double> r_specular;
  std::vector<double> r_diffuse;
  std::vector<double> absorbance;
  std::vector<double> transmittance;

  std::size_t size() const { return wavelengths.size(); }
  double r_total(std::size_t i) const { return r_specular[i] + r_diffuse[i]; }
  std::vector<double> r_total() const;
  void validate() const;
};

struct FresnelResult {
  double reflect_prob = 0.0;
  /// Transmitted direction cosine, same sign as the incident one; 0 under
  /// total internal reflection.
  double refracted_uz = 0.0;
  bool total_internal = false;
};

double specular_reflectance(double n_ambient, double n_layer);
double sample_step(double mu_t, double u);
double sample_hg(double g, double u);
FresnelResult fresnel_interface(double uz, double n_from, double n_to);

TallyResult simulate(const LayerSpec& layer, const SimulationConfig& config);

/// Seed used for wavelength `index` of a spectral run.
std::uint64_t wavelength_seed(std::uint64_t seed, std::size_t index);

/// One simulate() call per wavelength. When `seeds` is given it overrides the
/// derived per-wavelength seeds and must match the grid length.
SpectralResponse run_spectrum(const mie::BulkOpticalProperties& props, const SlabGeometry& geometry,
                              const SimulationConfig& config,
                              std::optional<std::span<const std::uint64_t>> seeds = std::nullopt);

}  // namespace nanoflow::transport
