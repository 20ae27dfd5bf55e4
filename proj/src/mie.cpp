#include "nanoflow/mie.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "nanoflow/error.hpp"
#include "nanoflow/log.hpp"

namespace nanoflow::mie {

namespace {

constexpr double kIndependentScatteringLimit = 0.05;

}  // namespace

double ParticleSizeDistribution::total_density() const {
  double total = 0.0;
  for (double n : number_density) total += n;
  return total;
}

double ParticleSizeDistribution::volume_fraction() const {
  double f = 0.0;
  for (std::size_t i = 0; i < radii.size(); ++i) {
    f += number_density[i] * (4.0 / 3.0) * std::numbers::pi * radii[i] * radii[i] * radii[i];
  }
  return f;
}

bool ParticleSizeDistribution::validate() const {
  const bool dense = validate_bins();
  if (!(total_density() > 0.0)) throw domain_error("size distribution: total number density is zero");
  return dense;
}

bool ParticleSizeDistribution::validate_bins() const {
  if (radii.empty()) throw domain_error("size distribution: no bins");
  if (radii.size() != number_density.size()) {
    throw domain_error("size distribution: radii and number_density lengths differ");
  }
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0.0) || !std::isfinite(radii[i])) {
      throw domain_error("size distribution: radius must be positive and finite");
    }
    if (i > 0 && !(radii[i] > radii[i - 1])) {
      throw domain_error("size distribution: radii must be strictly increasing");
    }
    if (!(number_density[i] >= 0.0) || !std::isfinite(number_density[i])) {
      throw domain_error("size distribution: number density must be >= 0 and finite");
    }
  }
  return volume_fraction() > kIndependentScatteringLimit;
}

ParticleSizeDistribution lognormal_bins(double median_radius, double sigma_ln, double total_density,
                                        int bins, double span_sigmas) {
  if (!(median_radius > 0.0) || !(sigma_ln > 0.0) || bins < 1 || !(span_sigmas > 0.0)) {
    throw domain_error("lognormal_bins: invalid parameters");
  }
  const double lo = std::log(median_radius) - span_sigmas * sigma_ln;
  const double width = 2.0 * span_sigmas * sigma_ln / bins;
  std::vector<double> edges(bins + 1);
  for (int i = 0; i <= bins; ++i) edges[i] = std::exp(lo + i * width);
  return lognormal_on_edges(edges, median_radius, sigma_ln, total_density);
}

ParticleSizeDistribution lognormal_on_edges(std::span<const double> edges, double median_radius,
                                            double sigma_ln, double total_density) {
  if (!(median_radius > 0.0) || !(sigma_ln > 0.0) || !(total_density >= 0.0) || edges.size() < 2) {
    throw domain_error("lognormal_on_edges: invalid parameters");
  }
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (!(edges[i] > 0.0) || (i > 0 && !(edges[i] > edges[i - 1]))) {
      throw domain_error("lognormal_on_edges: edges must be positive and strictly increasing");
    }
  }
  const double mu = std::log(median_radius);
  const double s2 = sigma_ln * sigma_ln;
  auto cdf = [&](double ln_r) { return 0.5 * std::erfc(-(ln_r - mu) / (sigma_ln * std::numbers::sqrt2)); };

  ParticleSizeDistribution d;
  d.radii.reserve(edges.size() - 1);
  d.number_density.reserve(edges.size() - 1);
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    const double a = std::log(edges[i]);
    const double b = std::log(edges[i + 1]);
    const double mass = cdf(b) - cdf(a);
    double r = std::exp(0.5 * (a + b));
    if (mass > 0.0) {
      // E[r^2 1{bin}] = exp(2 mu + 2 s^2) * (Phi((b-mu)/s - 2s) - Phi((a-mu)/s - 2s))
      const double shifted = cdf(b - 2.0 * s2) - cdf(a - 2.0 * s2);
      const double area_r = std::sqrt(std::exp(2.0 * mu + 2.0 * s2) * shifted / mass);
      if (std::isfinite(area_r)) r = std::clamp(area_r, edges[i], edges[i + 1]);
    }
    d.radii.push_back(r);
    d.number_density.push_back(total_density * mass);
  }
  return d;
}

double lognormal_density_for_fraction(double fraction, double median_radius, double sigma_ln) {
  if (!(fraction >= 0.0) || !(median_radius > 0.0) || !(sigma_ln > 0.0)) {
    throw domain_error("lognormal_density_for_fraction: invalid parameters");
  }
  const double mean_r3 = std::exp(3.0 * std::log(median_radius) + 4.5 * sigma_ln * sigma_ln);
  return fraction / ((4.0 / 3.0) * std::numbers::pi * mean_r3);
}

void BulkOpticalProperties::validate() const {
  const auto n = wavelengths.size();
  if (mu_a.size() != n || mu_s.size() != n || g.size() != n) {
    throw domain_error("optical properties: array lengths differ");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(wavelengths[i] > 0.0)) throw domain_error("optical properties: wavelength must be positive");
    if (!(mu_a[i] >= 0.0) || !(mu_s[i] >= 0.0) || !std::isfinite(mu_a[i]) || !std::isfinite(mu_s[i])) {
      throw domain_error("optical properties: mu_a and mu_s must be finite and >= 0");
    }
    if (!(g[i] > -1.0 && g[i] < 1.0)) throw domain_error("optical properties: g must lie in (-1, 1)");
  }
}

double SpectralTable::at(double wavelength) const {
  if (values.empty() || values.size() != wavelengths.size()) {
    throw domain_error("spectral table: empty or mismatched columns");
  }
  if (values.size() == 1 || wavelength <= wavelengths.front()) return values.front();
  if (wavelength >= wavelengths.back()) return values.back();
  const auto it = std::upper_bound(wavelengths.begin(), wavelengths.end(), wavelength);
  const auto hi = static_cast<std::size_t>(it - wavelengths.begin());
  const auto lo = hi - 1;
  const double t = (wavelength - wavelengths[lo]) / (wavelengths[hi] - wavelengths[lo]);
  return values[lo] + t * (values[hi] - values[lo]);
}

double size_parameter(double radius, double wavelength, double n_medium) {
  if (!(radius > 0.0) || !(wavelength > 0.0) || !(n_medium > 0.0)) {
    throw domain_error("size_parameter: radius, wavelength and n_medium must be positive");
  }
  return 2.0 * std::numbers::pi * radius * n_medium / wavelength;
}

int series_terms(double x) { return static_cast<int>(std::ceil(x + 4.0 * std::cbrt(x) + 2.0)); }

MieEfficiencies mie_single(double x, std::complex<double> m) {
  using cd = std::complex<double>;
  if (!(x > 0.0) || !std::isfinite(x)) throw domain_error("mie_single: size parameter must be positive");
  if (!(m.real() > 0.0) || m.imag() < 0.0) {
    throw domain_error("mie_single: index must have re > 0 and im >= 0");
  }

  const int nstop = series_terms(x);
  const cd mx = m * x;
  // The +16 start alone leaves ~1e-5 errors in D_n for lossless spheres with
  // |mx| ~ 100; the cube-root margin covers the turning-point region.
  const double margin = 16.0 + 10.0 * std::cbrt(std::max<double>(std::abs(mx), x));
  const int nmx = static_cast<int>(std::ceil(std::max<double>(nstop, std::abs(mx)) + margin));

  // Logarithmic derivative D_n(mx), downward from D_nmx = 0.
  std::vector<cd> d(nmx + 1, cd(0.0, 0.0));
  for (int n = nmx; n >= 1; --n) {
    const cd rn = static_cast<double>(n) / mx;
    d[n - 1] = rn - 1.0 / (d[n] + rn);
  }

  // psi_n(x) from the downward ratio psi_n / psi_{n-1}, anchored at
  // psi_0 = sin x. Upward psi loses all digits for n > x when x << 1.
  std::vector<double> ratio(nmx + 2, 0.0);
  for (int n = nmx; n >= 1; --n) ratio[n] = 1.0 / ((2.0 * n + 1.0) / x - ratio[n + 1]);
  std::vector<double> psi_n(nstop + 1);
  psi_n[0] = std::sin(x);
  for (int n = 1; n <= nstop; ++n) psi_n[n] = ratio[n] * psi_n[n - 1];

  // chi_n(x) upward (dominant solution), xi = psi - i chi.
  double chi0 = -std::sin(x);
  double chi1 = std::cos(x);
  double psi1 = psi_n[0];
  cd xi1(psi1, -chi1);

  double sum_ext = 0.0;
  double sum_sca = 0.0;
  double sum_g = 0.0;
  cd a_prev, b_prev;

  for (int n = 1; n <= nstop; ++n) {
    const double fn = n;
    const double psi = psi_n[n];
    const double chi = (2.0 * fn - 1.0) * chi1 / x - chi0;
    const cd xi(psi, -chi);

    const cd da = d[n] / m + fn / x;
    const cd db = m * d[n] + fn / x;
    const cd an = (da * psi - psi1) / (da * xi - xi1);
    const cd bn = (db * psi - psi1) / (db * xi - xi1);

    sum_ext += (2.0 * fn + 1.0) * (an.real() + bn.real());
    sum_sca += (2.0 * fn + 1.0) * (std::norm(an) + std::norm(bn));
    sum_g += (2.0 * fn + 1.0) / (fn * (fn + 1.0)) * (an * std::conj(bn)).real();
    if (n > 1) {
      const double fp = fn - 1.0;
      sum_g += fp * (fp + 2.0) / (fp + 1.0) * (a_prev * std::conj(an) + b_prev * std::conj(bn)).real();
    }

    if (!std::isfinite(an.real()) || !std::isfinite(an.imag()) || !std::isfinite(bn.real()) ||
        !std::isfinite(bn.imag())) {
      std::ostringstream os;
      os << "mie_single: non-finite series coefficient at n=" << n << " (x=" << x << ", m=" << m.real()
         << "+" << m.imag() << "i, nstop=" << nstop << ", nmx=" << nmx << ")";
      throw numerical_error(os.str());
    }

    a_prev = an;
    b_prev = bn;
    psi1 = psi;
    chi0 = chi1;
    chi1 = chi;
    xi1 = cd(psi1, -chi1);
  }

  MieEfficiencies q;
  const double x2 = x * x;
  q.q_ext = 2.0 * sum_ext / x2;
  q.q_sca = 2.0 * sum_sca / x2;
  q.q_abs = q.q_ext - q.q_sca;
  q.asymmetry_g = sum_sca > 0.0 ? 2.0 * sum_g / sum_sca : 0.0;
  if (!std::isfinite(q.q_ext) || !std::isfinite(q.q_sca) || !std::isfinite(q.asymmetry_g)) {
    throw numerical_error("mie_single: non-finite efficiencies");
  }
  return q;
}

BulkPoint ensemble_average(const ParticleSizeDistribution& dist, double wavelength, ComplexIndex n_particle,
                           double n_host, double mu_a_host) {
  if (dist.radii.empty()) throw domain_error("ensemble_average: empty distribution");
  if (!(wavelength > 0.0)) throw domain_error("ensemble_average: wavelength must be positive");
  if (!(n_host > 0.0)) throw domain_error("ensemble_average: host index must be positive");
  if (!(mu_a_host >= 0.0)) throw domain_error("ensemble_average: host absorption must be >= 0");

  const std::complex<double> m = n_particle.value() / n_host;
  double sca = 0.0;
  double abs = 0.0;
  double sca_g = 0.0;
  for (std::size_t i = 0; i < dist.radii.size(); ++i) {
    const double density = dist.number_density[i];
    if (density == 0.0) continue;
    const double r = dist.radii[i];
    const MieEfficiencies q = mie_single(size_parameter(r, wavelength, n_host), m);
    const double area = std::numbers::pi * r * r;
    sca += density * q.q_sca * area;
    abs += density * q.q_abs * area;
    sca_g += density * q.q_sca * area * q.asymmetry_g;
  }
  BulkPoint p;
  p.mu_s = sca;
  // Q_abs can come out at -1e-17 for lossless spheres.
  p.mu_a = mu_a_host + std::max(abs, 0.0);
  p.g = sca > 0.0 ? sca_g / sca : 0.0;
  return p;
}

BulkOpticalProperties spectrum(const ParticleSizeDistribution& dist, std::span<const double> wavelengths,
                               const Materials& materials) {
  if (dist.validate_bins()) {
    log::warn("mie", {{"event", "volume_fraction_above_limit"},
                      {"volume_fraction", log::num(dist.volume_fraction())}});
  }
  BulkOpticalProperties out;
  out.wavelengths.assign(wavelengths.begin(), wavelengths.end());
  out.mu_a.reserve(wavelengths.size());
  out.mu_s.reserve(wavelengths.size());
  out.g.reserve(wavelengths.size());
  for (double wl : wavelengths) {
    const BulkPoint p = ensemble_average(dist, wl, materials.particle_at(wl), materials.n_host,
                                         materials.host_mu_a.at(wl));
    out.mu_a.push_back(p.mu_a);
    out.mu_s.push_back(p.mu_s);
    out.g.push_back(p.g);
  }
  return out;
}

}  // namespace nanoflow::mie
