#pragma once

#include <complex>
#include <span>
#include <vector>

namespace nanoflow::mie {

/// Complex refractive index n + i*kappa (kappa >= 0 absorbs).
struct ComplexIndex {
  double re = 1.0;
  double im = 0.0;

  std::complex<double> value() const { return {re, im}; }
};

/// Discretized particle size distribution: radii [m] with number densities
/// [1/m^3] per bin.
struct ParticleSizeDistribution {
  std::vector<double> radii;
  std::vector<double> number_density;

  /// Throws on unequal lengths, non-increasing radii, negative densities or
  /// zero total density. Returns true when the implied volume fraction
  /// exceeds the independent-scattering limit (0.05).
  bool validate() const;
  /// validate() without the positive-total requirement.
  bool validate_bins() const;
  double volume_fraction() const;
  double total_density() const;
  std::size_t size() const { return radii.size(); }
};

/// Lognormal size distribution discretized into `bins` equal-width bins in
/// ln(r) spanning median*exp(+-span_sigmas*sigma_ln). Densities integrate the
/// lognormal pdf over each bin (via the normal CDF) and sum to
/// `total_density` times the captured probability mass.
ParticleSizeDistribution lognormal_bins(double median_radius, double sigma_ln, double total_density,
                                        int bins, double span_sigmas = 4.0);

/// Lognormal mass integrated over fixed bin edges [m] (strictly increasing,
/// at least two). Each bin's radius is its area-equivalent radius
/// sqrt(E[r^2 | bin]), clamped into the bin.
ParticleSizeDistribution lognormal_on_edges(std::span<const double> edges, double median_radius,
                                            double sigma_ln, double total_density);

/// Total number density giving volume fraction `fraction` for an untruncated
/// lognormal.
double lognormal_density_for_fraction(double fraction, double median_radius, double sigma_ln);

struct MieEfficiencies {
  double q_ext = 0.0;
  double q_sca = 0.0;
  double q_abs = 0.0;
  double asymmetry_g = 0.0;
};

/// Bulk coefficients per wavelength.
struct BulkOpticalProperties {
  std::vector<double> wavelengths;  ///< [m]
  std::vector<double> mu_a;         ///< [1/m]
  std::vector<double> mu_s;         ///< [1/m]
  std::vector<double> g;

  std::size_t size() const { return wavelengths.size(); }
  void validate() const;
};

struct BulkPoint {
  double mu_a = 0.0;
  double mu_s = 0.0;
  double g = 0.0;
};

/// Piecewise-linear function of wavelength, clamped at the table ends. A
/// single row is a constant.
struct SpectralTable {
  std::vector<double> wavelengths;
  std::vector<double> values;

  static SpectralTable constant(double v) { return {{1.0}, {v}}; }
  double at(double wavelength) const;
};

/// Particle index (n + i*kappa) and host medium, as functions of vacuum
/// wavelength.
struct Materials {
  SpectralTable particle_n = SpectralTable::constant(1.5);
  SpectralTable particle_kappa = SpectralTable::constant(0.0);
  double n_host = 1.0;
  SpectralTable host_mu_a = SpectralTable::constant(0.0);  ///< [1/m]

  ComplexIndex particle_at(double wavelength) const {
    return {particle_n.at(wavelength), particle_kappa.at(wavelength)};
  }
};

double size_parameter(double radius, double wavelength, double n_medium);

/// Number of Lorenz-Mie terms: ceil(x + 4 x^(1/3) + 2).
int series_terms(double x);

/// Single-sphere efficiencies. `m` is the particle index relative to the host.
MieEfficiencies mie_single(double x, std::complex<double> m);

/// Independent-scattering average over a size distribution at one wavelength.
BulkPoint ensemble_average(const ParticleSizeDistribution& dist, double wavelength,
                           ComplexIndex n_particle, double n_host, double mu_a_host);

BulkOpticalProperties spectrum(const ParticleSizeDistribution& dist,
                               std::span<const double> wavelengths, const Materials& materials);

}  // namespace nanoflow::mie
