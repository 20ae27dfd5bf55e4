#include <doctest.h>

#include <string>

#include "nanoflow/config.hpp"
#include "nanoflow/error.hpp"
#include "test_util.hpp"

using namespace nanoflow;
using namespace nanoflow::config;

namespace {

ErrorKind kind_of(const std::string& text) {
  try {
    parse(text);
  } catch (const Error& e) {
    return e.kind();
  }
  return static_cast<ErrorKind>(0);
}

std::string message_of(const std::string& text) {
  try {
    parse(text);
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("empty document gives defaults") {
  const RunConfig rc = parse("{}");
  CHECK(rc.training.epochs == 20000);
  CHECK(rc.training.lr == 1e-4);
  CHECK(rc.training.folds == 5);
  CHECK(rc.training.batch_size == 32);
  CHECK(rc.predict.samples_per_model == 10000);
  CHECK(rc.simulation.n_photons == 100000);
  CHECK_FALSE(rc.distribution.has_value());
  CHECK_FALSE(rc.sweep.has_value());
  CHECK_THROWS_AS(rc.require_wavelengths(), Error);
  CHECK_THROWS_AS(rc.require_distribution(), Error);
  CHECK_THROWS_AS(rc.require_sweep(), Error);
}

TEST_CASE("full document") {
  const RunConfig rc = parse(R"({
    "materials": {"particle_n": {"wavelengths": [4e-7, 8e-7], "values": [1.6, 1.5]},
                  "particle_kappa": 0.01, "n_host": 1.33, "host_mu_a": 10.0},
    "wavelengths": {"start": 4e-7, "stop": 8e-7, "count": 5},
    "distribution": {"median_radius": 1e-7, "sigma_ln": 0.3, "volume_fraction": 0.01, "bins": 12},
    "slab": {"thickness": 2e-4, "n_layer": 1.33, "n_ambient_top": 1.0, "n_ambient_bottom": 1.5},
    "simulation": {"n_photons": 5000, "seed": 9, "roulette": false},
    "training": {"epochs": 10, "batch_size": 8, "learning_rate": 0.001, "folds": 3, "seed": 4,
                 "hidden": [16, 8], "activation": "relu", "log_scale_min": -5, "log_scale_max": 3,
                 "coupling_layers": 2, "coupling_hidden": [4], "initial_log_scale": -2},
    "predict": {"samples_per_model": 100, "seed": 2, "plots": false},
    "evaluate": {"samples_per_model": 50, "seed": 3},
    "paths": {"dataset": "data", "checkpoints": "/abs/ck"}
  })",
                             "/base");
  CHECK(rc.materials.particle_n.at(6e-7) == doctest::Approx(1.55));
  CHECK(rc.materials.particle_kappa.at(1e-6) == 0.01);
  CHECK(rc.materials.n_host == 1.33);
  REQUIRE(rc.wavelengths.size() == 5);
  CHECK(rc.wavelengths[2] == doctest::Approx(6e-7));
  CHECK(rc.wavelengths.back() == 8e-7);
  REQUIRE(rc.distribution.has_value());
  CHECK(rc.distribution->size() == 12);
  CHECK(rc.distribution->volume_fraction() == doctest::Approx(0.01).epsilon(0.01));
  CHECK(rc.slab.n_ambient_bottom == 1.5);
  CHECK(rc.simulation.n_photons == 5000);
  CHECK(rc.simulation.seed == 9);
  CHECK_FALSE(rc.simulation.roulette_enabled);
  CHECK(rc.training.epochs == 10);
  CHECK(rc.training.folds == 3);
  CHECK(rc.training.architecture.hidden == std::vector{16, 8});
  CHECK(rc.training.architecture.activation == flow::Activation::Relu);
  CHECK(rc.training.architecture.clamp.lo == -5);
  CHECK(rc.training.architecture.coupling_layers == 2);
  CHECK(rc.training.architecture.initial_log_scale == -2);
  CHECK(rc.predict.samples_per_model == 100);
  CHECK_FALSE(rc.predict.plots);
  CHECK(rc.evaluate.samples_per_model == 50);
  CHECK(rc.paths.dataset == std::filesystem::path("/base/data"));
  CHECK(rc.paths.checkpoints == std::filesystem::path("/abs/ck"));
}

TEST_CASE("sweep section inherits the shared sections") {
  const RunConfig rc = parse(R"({
    "wavelengths": [5e-7, 6e-7],
    "slab": {"n_layer": 1.4},
    "simulation": {"n_photons": 100},
    "sweep": {"bin_edges": {"start": 1e-8, "stop": 1e-6, "count": 11},
              "median_radius": [5e-8, 1e-7], "sigma_ln": [0.2], "volume_fraction": [0.001, 0.01],
              "thickness": [1e-4], "id_prefix": "run"}
  })");
  const auto& sw = rc.require_sweep();
  CHECK(sw.combinations() == 4);
  CHECK(sw.wavelengths == rc.wavelengths);
  CHECK(sw.geometry.n_layer == 1.4);
  CHECK(sw.simulation.n_photons == 100);
  REQUIRE(sw.bin_edges.size() == 11);
  CHECK(sw.bin_edges[5] == doctest::Approx(1e-7));
  CHECK(sw.id_prefix == "run");
}

TEST_CASE("unknown keys are rejected with their path") {
  CHECK(message_of(R"({"trainig": {}})").find("'trainig'") != std::string::npos);
  CHECK(message_of(R"({"training": {"epoch": 5}})").find("'training.epoch'") != std::string::npos);
  CHECK(message_of(R"({"materials": {"particle_n": {"wavelengths": [1], "values": [1], "x": 1}}})")
            .find("'materials.particle_n.x'") != std::string::npos);
  CHECK(kind_of(R"({"paths": {"datasets": "x"}})") == ErrorKind::Config);
}

TEST_CASE("invalid values are config errors") {
  CHECK(kind_of("{") == ErrorKind::Config);
  CHECK(kind_of("[]") == ErrorKind::Config);
  CHECK(kind_of(R"({"training": {"epochs": 0}})") == ErrorKind::Config);
  CHECK(kind_of(R"({"training": {"epochs": 1.5}})") == ErrorKind::Config);
  CHECK(kind_of(R"({"training": {"epochs": "10"}})") == ErrorKind::Config);
  CHECK(kind_of(R"({"training": {"learning_rate": -1}})") == ErrorKind::Config);
  CHECK(kind_of(R"({"training": {"activation": "gelu"}})") == ErrorKind::Config);
  CHECK(kind_of(R"({"training": {"folds": 1}})") == ErrorKind::Config);
  CHECK(kind_of(R"({"wavelengths": [6e-7, 5e-7]})") == ErrorKind::Config);
  CHECK(kind_of(R"({"wavelengths": [-1]})") == ErrorKind::Config);
  CHECK(kind_of(R"({"slab": {"thickness": -1}})") == ErrorKind::Config);
  CHECK(kind_of(R"({"simulation": {"n_photons": 0}})") == ErrorKind::Config);
  CHECK(kind_of(R"({"materials": {"particle_kappa": -0.1}})") == ErrorKind::Config);
  CHECK(kind_of(R"({"distribution": {"median_radius": 1e-7, "sigma_ln": 0.3}})") == ErrorKind::Config);
  CHECK(kind_of(R"({"distribution": {"median_radius": 1e-7, "sigma_ln": 0.3, "volume_fraction": 0.1,
                                     "total_density": 5}})") == ErrorKind::Config);
  CHECK(kind_of(R"({"distribution": {"radii": [2e-7, 1e-7], "number_density": [1, 1]}})") == ErrorKind::Config);
  CHECK(kind_of(R"({"sweep": {"bin_edges": [1e-8, 1e-7], "median_radius": [1e-7], "sigma_ln": [0.2],
                              "volume_fraction": [0.01], "thickness": [1e-4]}})") == ErrorKind::Config);
}

TEST_CASE("explicit zero-density bins are accepted") {
  const RunConfig rc = parse(R"({"distribution": {"radii": [1e-7], "number_density": [0]}})");
  CHECK(rc.require_distribution().total_density() == 0.0);
}

TEST_CASE("overrides replace or create dotted keys") {
  std::string doc = R"({"training": {"epochs": 100}})";
  doc = with_override(doc, "training.epochs", "7");
  doc = with_override(doc, "training.activation", "relu");
  doc = with_override(doc, "paths.dataset", "/tmp/d");
  doc = with_override(doc, "training.hidden", "[3, 2]");
  const RunConfig rc = parse(doc);
  CHECK(rc.training.epochs == 7);
  CHECK(rc.training.architecture.activation == flow::Activation::Relu);
  CHECK(rc.paths.dataset == std::filesystem::path("/tmp/d"));
  CHECK(rc.training.architecture.hidden == std::vector{3, 2});
  CHECK(parse(with_override("", "training.folds", "4")).training.folds == 4);
  CHECK_THROWS_AS(with_override(doc, "training..epochs", "1"), Error);
  CHECK_THROWS_AS(with_override(doc, "training.epochs.x", "1"), Error);
}

TEST_CASE("load resolves paths against the file") {
  testutil::TempDir dir("cfg");
  {
    std::ofstream(dir.path() / "run.json") << R"({"paths": {"output": "out"}})";
  }
  const RunConfig rc = load(dir.path() / "run.json");
  CHECK(rc.paths.output == dir.path() / "out");
  CHECK(rc.source == dir.path() / "run.json");
  try {
    load(dir.path() / "missing.json");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
}
