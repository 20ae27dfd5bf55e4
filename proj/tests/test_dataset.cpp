#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "nanoflow/dataset.hpp"
#include "nanoflow/error.hpp"
#include "test_util.hpp"

using namespace nanoflow;
using namespace nanoflow::dataset;
namespace fs = std::filesystem;

namespace {

SimulationRecord sample_record() {
  SimulationRecord r;
  r.id = "rec_a";
  r.optics.wavelengths = {4.0e-7, 5.5e-7, 7.0e-7};
  r.optics.mu_a = {12.5, 0.1 + 0.2, 3.0e-5};
  r.optics.mu_s = {1.0e4 / 3.0, 2718.2818284590452, 1.0e-300};
  r.optics.g = {0.1, 0.7071067811865476, 0.999};
  r.distribution.radii = {5.0e-8, 1.2e-7};
  r.distribution.number_density = {1.0e18 / 7.0, 3.3e17};
  r.geometry = {2.5e-4, 1.45, 1.0, 1.33};
  r.parameters = {{"median_radius", 1.0e-7}, {"sigma_ln", 0.3}};
  r.outputs.wavelengths = r.optics.wavelengths;
  r.outputs.r_specular = {0.0337, 0.0337, 0.0337};
  r.outputs.r_diffuse = {0.1 / 3.0, 0.25, 0.125};
  r.outputs.absorbance = {0.6, 0.2, 1.0 / 9.0};
  r.outputs.transmittance = {0.3329, 0.5163, 0.7296};
  r.meta = {123456789012345ull, 100000, "2024-01-01T00:00:00Z"};
  return r;
}

SweepConfig tiny_sweep() {
  SweepConfig s;
  s.materials.particle_n = mie::SpectralTable::constant(1.45);
  s.materials.n_host = 1.33;
  s.wavelengths = {5.0e-7, 6.0e-7};
  s.bin_edges = {5.0e-8, 1.0e-7, 2.0e-7};
  s.median_radius = {1.0e-7};
  s.sigma_ln = {0.3};
  s.volume_fraction = {0.01};
  s.thickness = {1.0e-4};
  s.geometry.n_layer = 1.33;
  s.simulation.n_photons = 200;
  s.simulation.seed = 7;
  return s;
}

}  // namespace

TEST_CASE("record folder round trip is bit exact") {
  testutil::TempDir dir("record_rt");
  const SimulationRecord r = sample_record();
  const fs::path folder = write_record(r, dir.path());
  CHECK(folder == dir.path() / "rec_a");
  for (const char* f : {"inputs.json", "optical_properties.csv", "outputs.csv", "meta.json"}) {
    CHECK(fs::is_regular_file(folder / f));
  }
  const SimulationRecord q = read_record(folder);
  CHECK(q.id == r.id);
  CHECK(q.optics.wavelengths == r.optics.wavelengths);
  CHECK(q.optics.mu_a == r.optics.mu_a);
  CHECK(q.optics.mu_s == r.optics.mu_s);
  CHECK(q.optics.g == r.optics.g);
  CHECK(q.distribution.radii == r.distribution.radii);
  CHECK(q.distribution.number_density == r.distribution.number_density);
  CHECK(q.geometry.thickness == r.geometry.thickness);
  CHECK(q.geometry.n_layer == r.geometry.n_layer);
  CHECK(q.geometry.n_ambient_top == r.geometry.n_ambient_top);
  CHECK(q.geometry.n_ambient_bottom == r.geometry.n_ambient_bottom);
  CHECK(q.parameters == r.parameters);
  CHECK(q.outputs.r_specular == r.outputs.r_specular);
  CHECK(q.outputs.r_diffuse == r.outputs.r_diffuse);
  CHECK(q.outputs.absorbance == r.outputs.absorbance);
  CHECK(q.outputs.transmittance == r.outputs.transmittance);
  CHECK(q.meta.seed == r.meta.seed);
  CHECK(q.meta.n_photons == r.meta.n_photons);
  CHECK(q.meta.timestamp == r.meta.timestamp);
}

TEST_CASE("csv headers are fixed") {
  testutil::TempDir dir("record_hdr");
  const fs::path folder = write_record(sample_record(), dir.path());
  std::ifstream a(folder / "optical_properties.csv");
  std::string line;
  std::getline(a, line);
  CHECK(line == "wavelength,mu_a,mu_s,g");
  std::ifstream b(folder / "outputs.csv");
  std::getline(b, line);
  CHECK(line == "wavelength,r_specular,r_diffuse,absorbance,transmittance");
}

TEST_CASE("missing outputs file is reported by name") {
  testutil::TempDir dir("record_missing");
  const fs::path folder = write_record(sample_record(), dir.path());
  fs::remove(folder / "outputs.csv");
  try {
    read_record(folder);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Io);
    CHECK(std::string(e.what()).find("outputs.csv") != std::string::npos);
  }
}

TEST_CASE("malformed csv gives file and line context") {
  testutil::TempDir dir("record_bad");
  const fs::path folder = write_record(sample_record(), dir.path());
  std::ofstream(folder / "optical_properties.csv") << "wavelength,mu_a,mu_s,g\n4e-7,1,2,0.1\n5e-7,abc,2,0.1\n";
  try {
    read_record(folder);
    FAIL("expected an error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("optical_properties.csv:3") != std::string::npos);
    CHECK(msg.find("field 2") != std::string::npos);
  }
}

TEST_CASE("mismatched wavelength grids are rejected") {
  SimulationRecord r = sample_record();
  r.outputs.wavelengths.pop_back();
  r.outputs.r_specular.pop_back();
  r.outputs.r_diffuse.pop_back();
  r.outputs.absorbance.pop_back();
  r.outputs.transmittance.pop_back();
  CHECK_THROWS_AS(r.validate(), Error);

  testutil::TempDir dir("record_grid");
  const fs::path folder = write_record(sample_record(), dir.path());
  std::ofstream(folder / "outputs.csv") << "wavelength,r_specular,r_diffuse,absorbance,transmittance\n"
                                        << "4e-7,0,0,0,0\n5.5e-7,0,0,0,0\n";
  try {
    read_record(folder);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
}

TEST_CASE("feature and target layout") {
  const SimulationRecord r = sample_record();
  const auto y = assemble_features(r);
  const auto x = assemble_targets(r);
  REQUIRE(y.size() == 11);
  REQUIRE(x.size() == 9);
  CHECK(y[0] == r.optics.mu_a[0]);
  CHECK(y[3] == r.optics.mu_s[0]);
  CHECK(y[8] == r.optics.g[2]);
  CHECK(y[9] == r.distribution.number_density[0]);
  CHECK(y[10] == r.distribution.number_density[1]);
  CHECK(x[0] == r.outputs.r_specular[0] + r.outputs.r_diffuse[0]);
  CHECK(x[4] == r.outputs.absorbance[1]);
  CHECK(x[8] == r.outputs.transmittance[2]);

  const SpectralTriplet t = split_targets(x, 3);
  CHECK(t.r_total == r.outputs.r_total());
  CHECK(t.absorbance == r.outputs.absorbance);
  CHECK(t.transmittance == r.outputs.transmittance);
  CHECK_THROWS_AS(split_targets(x, 4), Error);
}

TEST_CASE("all-zero record gives all-zero vectors") {
  SimulationRecord r;
  r.id = "zero";
  r.optics.wavelengths = {5e-7, 6e-7};
  r.optics.mu_a = r.optics.mu_s = r.optics.g = {0.0, 0.0};
  r.distribution.radii = {1e-7};
  r.distribution.number_density = {0.0};
  r.outputs.wavelengths = r.optics.wavelengths;
  r.outputs.r_specular = r.outputs.r_diffuse = r.outputs.absorbance = r.outputs.transmittance = {0.0, 0.0};
  for (double v : assemble_features(r)) CHECK(v == 0.0);
  for (double v : assemble_targets(r)) CHECK(v == 0.0);
}

TEST_CASE("dataset generation") {
  testutil::TempDir dir("gen");
  SweepConfig s = tiny_sweep();

  SUBCASE("one combination, then idempotent rerun") {
    GenerateSummary a = generate_dataset(s, dir.path());
    CHECK(a.generated == 1);
    CHECK(a.failed == 0);
    CHECK(fs::is_directory(dir.path() / "sim_00000"));
    GenerateSummary b = generate_dataset(s, dir.path());
    CHECK(b.generated == 0);
    CHECK(b.skipped == 1);

    const Dataset ds = load_dataset(dir.path());
    REQUIRE(ds.records.size() == 1);
    CHECK(ds.features().cols() == 3 * 2 + 2);
    CHECK(ds.targets().cols() == 6);
    const auto& rec = ds.records[0];
    for (std::size_t i = 0; i < rec.n_wavelengths(); ++i) {
      const double sum = rec.outputs.r_total(i) + rec.outputs.absorbance[i] + rec.outputs.transmittance[i];
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  }

  SUBCASE("3x3 grid gives 9 distinct folders") {
    s.median_radius = {6e-8, 1e-7, 1.5e-7};
    s.volume_fraction = {0.0, 0.005, 0.01};
    s.simulation.n_photons = 50;
    GenerateSummary a = generate_dataset(s, dir.path());
    CHECK(a.generated == 9);
    const Manifest m = read_manifest(dir.path());
    CHECK(m.record_count == 9);
    std::set<std::string> ids(m.record_ids.begin(), m.record_ids.end());
    CHECK(ids.size() == 9);
    for (const auto& id : ids) CHECK(fs::is_directory(dir.path() / id));
  }

  SUBCASE("a damaged folder is regenerated") {
    generate_dataset(s, dir.path());
    fs::remove(dir.path() / "sim_00000" / "meta.json");
    GenerateSummary b = generate_dataset(s, dir.path());
    CHECK(b.generated == 1);
    CHECK_NOTHROW(read_record(dir.path() / "sim_00000"));
  }

  SUBCASE("generation is deterministic") {
    testutil::TempDir other("gen_other");
    generate_dataset(s, dir.path());
    generate_dataset(s, other.path());
    for (const char* f : {"inputs.json", "optical_properties.csv", "outputs.csv", "meta.json"}) {
      CHECK(testutil::slurp(dir.path() / "sim_00000" / f) == testutil::slurp(other.path() / "sim_00000" / f));
    }
  }
}

TEST_CASE("load_dataset enforces one wavelength grid") {
  testutil::TempDir dir("grid_check");
  SimulationRecord a = sample_record();
  SimulationRecord b = sample_record();
  b.id = "rec_b";
  b.optics.wavelengths[2] = 7.5e-7;
  b.outputs.wavelengths = b.optics.wavelengths;
  write_record(a, dir.path());
  write_record(b, dir.path());
  Manifest m;
  m.wavelengths = a.optics.wavelengths;
  m.n_rho = 2;
  m.record_ids = {"rec_a", "rec_b"};
  m.record_count = 2;
  write_manifest(m, dir.path());
  CHECK_THROWS_AS(load_dataset(dir.path()), Error);
  CHECK_THROWS_AS(load_dataset(dir.path() / "nope"), Error);
}

TEST_CASE("normalization") {
  SUBCASE("z-score example and constant column") {
    Eigen::MatrixXd f(2, 2);
    f << 3.0, 4.0, 7.0, 4.0;
    Eigen::MatrixXd t(2, 1);
    t << 0.1, 0.3;
    const auto s = NormalizationStats::fit(f, t);
    CHECK(s.feature_mean(0) == 5.0);
    CHECK(s.feature_std(0) == 2.0);
    CHECK(s.feature_std(1) == 1.0);
    Eigen::MatrixXd probe(1, 2);
    probe << 7.0, 4.0;
    const Eigen::MatrixXd z = s.apply_features(probe);
    CHECK(z(0, 0) == 1.0);
    CHECK(z(0, 1) == 0.0);
    const Eigen::MatrixXd zf = s.apply_features(f);
    CHECK(zf(0, 1) == 0.0);
    CHECK(zf(1, 1) == 0.0);
  }

  SUBCASE("inversion is identity") {
    RandomStream rng(11, 0);
    Eigen::MatrixXd f(40, 7), t(40, 6);
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = 1e3 * rng.normal() + 50.0;
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform();
    const auto s = NormalizationStats::fit(f, t);
    CHECK((s.invert_features(s.apply_features(f)) - f).cwiseAbs().maxCoeff() <= 1e-12 * 1e4);
    CHECK((s.invert_targets(s.apply_targets(t)) - t).cwiseAbs().maxCoeff() <= 1e-12);
    const double ls = s.log_target_scale();
    double expect = 0.0;
    for (Eigen::Index j = 0; j < 6; ++j) expect += std::log(s.target_std(j));
    CHECK(ls == expect);
  }

  SUBCASE("fewer than two rows") {
    Eigen::MatrixXd f(1, 3), t(1, 3);
    f.setOnes();
    t.setOnes();
    CHECK_THROWS_AS(NormalizationStats::fit(f, t), Error);
  }

  SUBCASE("validation rows do not leak into the statistics") {
    RandomStream rng(5, 1);
    Eigen::MatrixXd f(20, 3), t(20, 2);
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform();
    const FoldSplit split = kfold_split(20, 5, 9);
    const auto train = split.training_indices(0);
    const auto s1 = NormalizationStats::fit(select_rows(f, train), select_rows(t, train));
    Eigen::MatrixXd f2 = f, t2 = t;
    const auto val = split.validation_indices(0);
    for (std::size_t i = 0; i < val.size(); ++i) {
      f2.row(val[i]) = f.row(val[(i + 1) % val.size()]) * 3.0;
      t2.row(val[i]).setConstant(0.99);
    }
    const auto s2 = NormalizationStats::fit(select_rows(f2, train), select_rows(t2, train));
    CHECK(s1.feature_mean == s2.feature_mean);
    CHECK(s1.feature_std == s2.feature_std);
    CHECK(s1.target_mean == s2.target_mean);
    CHECK(s1.target_std == s2.target_std);
  }
}

TEST_CASE("k-fold split") {
  auto sizes = [](const FoldSplit& s) {
    std::vector<int> out(s.k, 0);
    for (int a : s.assignments) ++out[a];
    return out;
  };
  CHECK(sizes(kfold_split(10, 5, 1)) == std::vector<int>{2, 2, 2, 2, 2});
  auto s11 = sizes(kfold_split(11, 5, 1));
  std::sort(s11.begin(), s11.end());
  CHECK(s11 == std::vector<int>{2, 2, 2, 2, 3});
  CHECK(kfold_split(37, 5, 3).assignments == kfold_split(37, 5, 3).assignments);
  CHECK(kfold_split(37, 5, 3).assignments != kfold_split(37, 5, 4).assignments);
  CHECK_THROWS_AS(kfold_split(4, 5, 1), Error);

  for (std::size_t n : {5u, 6u, 13u, 100u}) {
    for (int k : {2, 3, 5}) {
      const FoldSplit s = kfold_split(n, k, n * 31 + k);
      std::vector<int> seen(n, 0);
      for (int f = 0; f < k; ++f) {
        for (auto i : s.validation_indices(f)) ++seen[i];
        CHECK(s.training_indices(f).size() + s.validation_indices(f).size() == n);
      }
      CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
      const auto sz = sizes(s);
      CHECK(*std::max_element(sz.begin(), sz.end()) - *std::min_element(sz.begin(), sz.end()) <= 1);
    }
  }
}
