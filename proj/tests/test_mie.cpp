#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "nanoflow/error.hpp"
#include "nanoflow/mie.hpp"
#include "oracles/mie_oracle.hpp"

using namespace nanoflow;
using namespace nanoflow::mie;

namespace {

double rel_err(double got, long double want) {
  return static_cast<double>(std::abs((got - want) / want));
}

const std::vector<std::complex<double>> kIndices = {{1.33, 0.0}, {1.5, 0.0}, {1.5, 0.1}, {2.0, 1.0}};
const std::vector<double> kSizes = {1e-3, 0.1, 1.0, 5.0, 20.0, 100.0};

}  // namespace

TEST_CASE("size parameter") {
  const double lambda = 500e-9;
  CHECK(size_parameter(lambda / (2 * std::numbers::pi * 1.2), lambda, 1.2) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(size_parameter(100e-9, 628.318e-9, 1.0) - 1.0) < 1e-4);
  // 2*pi*1e-6*1.33/500e-9
  CHECK(size_parameter(1e-6, 500e-9, 1.33) == doctest::Approx(16.713272917097).epsilon(1e-12));
  CHECK_THROWS_AS(size_parameter(0.0, 500e-9, 1.0), Error);
  CHECK_THROWS_AS(size_parameter(1e-7, -1.0, 1.0), Error);
  CHECK_THROWS_AS(size_parameter(1e-7, 500e-9, 0.0), Error);
}

TEST_CASE("mie_single frozen values") {
  // Oracle: 10*N_max terms in long double; agrees with the Bohren-Huffman table.
  const auto q = mie_single(1.0, {1.5, 0.0});
  CHECK(rel_err(q.q_ext, 0.21509759604288531L) < 1e-8);
  CHECK(rel_err(q.q_sca, 0.21509759604288531L) < 1e-8);
  CHECK(rel_err(q.asymmetry_g, 0.19894249463608723L) < 1e-8);

  const auto big = mie_single(100.0, {1.5, 0.0});
  CHECK(big.q_ext >= 1.9);
  CHECK(big.q_ext <= 2.3);

  const auto ten = mie_single(10.0, {1.5, 0.0});
  CHECK(rel_err(ten.q_ext, 2.8819989520758973L) < 1e-8);
  CHECK(rel_err(ten.asymmetry_g, 0.74291289856867805L) < 1e-8);
}

TEST_CASE("mie_single agrees with the reference series") {
  int pairs = 0;
  for (const auto& m : kIndices) {
    for (double x : kSizes) {
      CAPTURE(x);
      CAPTURE(m);
      const auto q = mie_single(x, m);
      const auto ref = oracle::mie_reference(x, m);
      CHECK(rel_err(q.q_ext, ref.q_ext) < 1e-8);
      CHECK(rel_err(q.q_sca, ref.q_sca) < 1e-8);
      CHECK(rel_err(q.asymmetry_g, ref.g) < 1e-8);
      ++pairs;
    }
  }
  CHECK(pairs >= 20);
}

TEST_CASE("efficiency bookkeeping") {
  for (const auto& m : kIndices) {
    for (double x : {1e-3, 0.5, 3.0, 30.0, 100.0}) {
      const auto q = mie_single(x, m);
      CHECK(std::abs(q.q_ext - q.q_sca - q.q_abs) <= 1e-10 * std::abs(q.q_ext));
      CHECK(q.q_sca >= 0.0);
      CHECK(q.asymmetry_g > -1.0);
      CHECK(q.asymmetry_g < 1.0);
      if (m.imag() == 0.0) {
        CHECK(std::abs(q.q_abs) <= 1e-10);
      } else {
        CHECK(q.q_abs > 0.0);
      }
    }
  }
}

TEST_CASE("Rayleigh limit") {
  for (const auto& m : kIndices) {
    CAPTURE(m);
    const auto k = (m * m - 1.0) / (m * m + 2.0);
    const double limit = 8.0 / 3.0 * std::norm(k);
    const auto q1 = mie_single(1e-3, m);
    const auto q2 = mie_single(2e-3, m);
    CHECK(std::abs(q1.q_sca / std::pow(1e-3, 4) / limit - 1.0) < 0.01);
    CHECK(std::abs(q2.q_sca / q1.q_sca / 16.0 - 1.0) < 0.01);
    CHECK(std::abs(q1.asymmetry_g) < 1e-5);
  }
}

TEST_CASE("mie_single errors") {
  CHECK_THROWS_AS(mie_single(0.0, {1.5, 0.0}), Error);
  CHECK_THROWS_AS(mie_single(-1.0, {1.5, 0.0}), Error);
  CHECK_THROWS_AS(mie_single(1.0, {-1.5, 0.0}), Error);
  CHECK_THROWS_AS(mie_single(1.0, {1.5, -0.1}), Error);
}

TEST_CASE("ensemble_average") {
  const double wl = 600e-9;
  const ComplexIndex silica{1.45, 0.0};
  const ComplexIndex lossy{2.0, 0.3};

  SUBCASE("no particles") {
    ParticleSizeDistribution d{{100e-9}, {0.0}};
    const auto p = ensemble_average(d, wl, lossy, 1.5, 12.5);
    CHECK(p.mu_a == 12.5);
    CHECK(p.mu_s == 0.0);
    CHECK(p.g == 0.0);
  }
  SUBCASE("linearity in bins") {
    ParticleSizeDistribution two{{80e-9, 80e-9}, {1e18, 1e18}};
    ParticleSizeDistribution one{{80e-9}, {2e18}};
    const auto a = ensemble_average(two, wl, lossy, 1.5, 3.0);
    const auto b = ensemble_average(one, wl, lossy, 1.5, 3.0);
    CHECK(std::abs(a.mu_s - b.mu_s) <= 1e-12 * b.mu_s);
    CHECK(std::abs(a.mu_a - b.mu_a) <= 1e-12 * b.mu_a);
    CHECK(std::abs(a.g - b.g) <= 1e-12 * std::abs(b.g));
  }
  SUBCASE("homogeneity in number density") {
    const auto d = lognormal_bins(120e-9, 0.35, 5e17, 12);
    auto scaled = d;
    for (auto& n : scaled.number_density) n *= 3.0;
    const double host = 7.0;
    const auto a = ensemble_average(d, wl, lossy, 1.4, host);
    const auto b = ensemble_average(scaled, wl, lossy, 1.4, host);
    CHECK(std::abs(b.mu_s / a.mu_s - 3.0) < 1e-12);
    CHECK(std::abs((b.mu_a - host) / (a.mu_a - host) - 3.0) < 1e-12);
    CHECK(std::abs(b.g - a.g) <= 1e-12 * std::abs(a.g));
  }
  SUBCASE("lognormal quadrature refinement") {
    // Same captured mass at both resolutions; the 2000-bin sum is the oracle.
    const auto coarse = lognormal_bins(150e-9, 0.3, 1e18, 20);
    const auto fine = lognormal_bins(150e-9, 0.3, 1e18, 2000);
    const auto a = ensemble_average(coarse, 500e-9, silica, 1.0, 0.0);
    const auto b = ensemble_average(fine, 500e-9, silica, 1.0, 0.0);
    CHECK(std::abs(a.mu_s / b.mu_s - 1.0) < 0.005);
  }
  SUBCASE("errors") {
    ParticleSizeDistribution empty;
    CHECK_THROWS_AS(ensemble_average(empty, wl, silica, 1.0, 0.0), Error);
    ParticleSizeDistribution d{{1e-7}, {1e18}};
    CHECK_THROWS_AS(ensemble_average(d, 0.0, silica, 1.0, 0.0), Error);
  }
}

TEST_CASE("size distribution validation") {
  ParticleSizeDistribution ok{{1e-7, 2e-7}, {1e15, 2e15}};
  CHECK_FALSE(ok.validate());
  ParticleSizeDistribution dense{{1e-6}, {1e17}};  // ~0.42 volume fraction
  CHECK(dense.validate());
  ParticleSizeDistribution unsorted{{2e-7, 1e-7}, {1.0, 1.0}};
  CHECK_THROWS_AS(unsorted.validate(), Error);
  ParticleSizeDistribution ragged{{1e-7, 2e-7}, {1.0}};
  CHECK_THROWS_AS(ragged.validate(), Error);
  ParticleSizeDistribution zero{{1e-7}, {0.0}};
  CHECK_THROWS_AS(zero.validate(), Error);
  CHECK_NOTHROW(zero.validate_bins());
  ParticleSizeDistribution negative{{1e-7}, {-1.0}};
  CHECK_THROWS_AS(negative.validate_bins(), Error);
}

TEST_CASE("spectrum") {
  const auto dist = lognormal_bins(100e-9, 0.25, 2e17, 8);
  Materials mat;
  mat.particle_n = SpectralTable::constant(2.0);
  mat.particle_kappa = SpectralTable{{400e-9, 2400e-9}, {0.2, 0.0}};
  mat.n_host = 1.5;
  mat.host_mu_a = SpectralTable::constant(4.0);

  SUBCASE("single wavelength matches ensemble_average") {
    const std::vector<double> grid{700e-9};
    const auto s = spectrum(dist, grid, mat);
    const auto p = ensemble_average(dist, 700e-9, mat.particle_at(700e-9), 1.5, 4.0);
    REQUIRE(s.size() == 1);
    CHECK(s.mu_a[0] == p.mu_a);
    CHECK(s.mu_s[0] == p.mu_s);
    CHECK(s.g[0] == p.g);
  }
  SUBCASE("empty grid") {
    const auto s = spectrum(dist, std::vector<double>{}, mat);
    CHECK(s.size() == 0);
    CHECK(s.mu_a.empty());
  }
  SUBCASE("grid passthrough") {
    std::vector<double> grid;
    for (int i = 0; i <= 100; ++i) grid.push_back(300e-9 + i * (2200e-9 / 100));
    const auto s = spectrum(dist, grid, mat);
    REQUIRE(s.size() == 101);
    CHECK(s.wavelengths == grid);
    CHECK_NOTHROW(s.validate());
  }
}

TEST_CASE("spectral table interpolation") {
  SpectralTable t{{1.0, 2.0, 4.0}, {10.0, 20.0, 0.0}};
  CHECK(t.at(0.5) == 10.0);
  CHECK(t.at(1.5) == doctest::Approx(15.0));
  CHECK(t.at(3.0) == doctest::Approx(10.0));
  CHECK(t.at(5.0) == 0.0);
  CHECK(SpectralTable::constant(3.0).at(123.0) == 3.0);
}
