#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "models.hpp"
#include "nanoflow/mie.hpp"
#include "nanoflow/nanoflow.h"
#include "nanoflow/training.hpp"
#include "test_util.hpp"

namespace {

struct Ctx {
  nf_context* p = nullptr;
  Ctx() {
    REQUIRE(nf_context_create(&p) == NF_OK);
    nf_set_log_level(p, NF_LOG_QUIET);
  }
  ~Ctx() { nf_context_destroy(p); }
};

}  // namespace

TEST_CASE("status codes match the exit-code contract") {
  CHECK(NF_OK == 0);
  CHECK(NF_ERR_CONFIG == 2);
  CHECK(NF_ERR_NUMERICAL == 3);
  CHECK(NF_ERR_IO == 4);
  CHECK(std::string(nf_version()).size() > 0);
  CHECK(nf_context_create(nullptr) == NF_ERR_CONFIG);
  CHECK(nf_config_validate(nullptr) == NF_ERR_CONFIG);
}

TEST_CASE("configuration errors carry a message") {
  Ctx c;
  CHECK(nf_config_load_string(c.p, "{\"training\": {\"epochz\": 3}}") == NF_ERR_CONFIG);
  CHECK(std::string(nf_last_error(c.p)).find("training.epochz") != std::string::npos);
  CHECK(nf_config_load_string(c.p, "{}") == NF_OK);
  CHECK(std::string(nf_last_error(c.p)).empty());
  CHECK(nf_config_set(c.p, "training.epochs", "0") == NF_OK);
  CHECK(nf_config_validate(c.p) == NF_ERR_CONFIG);
  CHECK(nf_config_set(c.p, "training.epochs", "3") == NF_OK);
  CHECK(nf_config_validate(c.p) == NF_OK);
  CHECK(nf_config_load_file(c.p, "/nonexistent/run.json") == NF_ERR_CONFIG);
  CHECK(nf_set_log_level(c.p, static_cast<nf_log_level>(9)) == NF_ERR_CONFIG);
  CHECK(nf_run_mie(c.p, "/tmp/never.csv") == NF_ERR_CONFIG);
}

TEST_CASE("mie through the C API matches the core") {
  Ctx c;
  double out[4];
  REQUIRE(nf_mie_single(c.p, 3.0, 1.5, 0.1, out) == NF_OK);
  const auto e = nanoflow::mie::mie_single(3.0, {1.5, 0.1});
  CHECK(out[0] == e.q_ext);
  CHECK(out[1] == e.q_sca);
  CHECK(out[2] == e.q_abs);
  CHECK(out[3] == e.asymmetry_g);
  CHECK(nf_mie_single(c.p, -1.0, 1.5, 0.0, out) == NF_ERR_CONFIG);
  CHECK(nf_mie_single(c.p, 1.0, 1.5, 0.0, nullptr) == NF_ERR_CONFIG);
}

TEST_CASE("mie command writes the optics table") {
  Ctx c;
  testutil::TempDir dir("capi_mie");
  const std::string out = (dir.path() / "sub" / "optics.csv").string();
  REQUIRE(nf_config_load_string(c.p, R"({"wavelengths": [5e-7, 6e-7],
      "distribution": {"radii": [1e-7], "number_density": [1e15]},
      "materials": {"particle_n": 1.5, "host_mu_a": 3.0}})") == NF_OK);
  REQUIRE(nf_run_mie(c.p, out.c_str()) == NF_OK);
  const std::string text = testutil::slurp(out);
  CHECK(text.rfind("wavelength,mu_a,mu_s,g\n", 0) == 0);
  std::size_t lines = 0;
  for (char ch : text) lines += ch == '\n';
  CHECK(lines == 3);
}

TEST_CASE("ensemble handle predicts the pooled posterior") {
  Ctx c;
  testutil::TempDir dir("capi_ens");
  nf_ensemble* e = nullptr;
  CHECK(nf_ensemble_load(c.p, (dir.path() / "none").string().c_str(), &e) != NF_OK);
  CHECK(e == nullptr);

  for (int k = 0; k < 2; ++k) {
    auto ck = models::wrap(models::constant_model(2, {2.0 * k, 0.5}, {0.0, models::raw_for_log_scale(-1.0)}));
    ck.fold_index = k;
    ck.fold_count = 2;
    nanoflow::training::save_checkpoint(ck, dir.path() / nanoflow::training::checkpoint_file_name(k));
  }
  REQUIRE(nf_ensemble_load(c.p, dir.path().string().c_str(), &e) == NF_OK);
  CHECK(nf_ensemble_fold_count(e) == 2);
  CHECK(nf_ensemble_feature_dim(e) == 2);
  CHECK(nf_ensemble_target_dim(e) == 2);
  const double y[2] = {0.3, -0.1};
  double mean[2], sd[2], lo[2], hi[2];
  REQUIRE(nf_ensemble_predict(c.p, e, y, 2, 10000, 7, mean, sd, lo, hi) == NF_OK);
  CHECK(std::abs(mean[0] - 1.0) <= 3.0 * std::sqrt(2.0 / 20000));
  CHECK(std::abs(sd[0] - std::sqrt(2.0)) <= 0.05 * std::sqrt(2.0));
  CHECK(sd[1] == doctest::Approx(std::exp(-1.0)).epsilon(0.03));
  CHECK(std::abs(lo[0] - (mean[0] - 1.96 * sd[0])) <= 1e-12);
  CHECK(std::abs(hi[1] - (mean[1] + 1.96 * sd[1])) <= 1e-12);

  double mean2[2], sd2[2];
  REQUIRE(nf_ensemble_predict(c.p, e, y, 2, 10000, 7, mean2, sd2, nullptr, nullptr) == NF_OK);
  CHECK(mean2[0] == mean[0]);
  CHECK(sd2[1] == sd[1]);
  CHECK(nf_ensemble_predict(c.p, e, y, 1, 100, 7, mean, sd, nullptr, nullptr) == NF_ERR_CONFIG);
  nf_ensemble_destroy(e);
}

TEST_CASE("corrupt checkpoint is an I/O error") {
  Ctx c;
  testutil::TempDir dir("capi_bad");
  { std::ofstream(dir.path() / "fold_0.ckpt.json") << "{\"format_version\": 1, \"kind\": "; }
  nf_ensemble* e = nullptr;
  CHECK(nf_ensemble_load(c.p, dir.path().string().c_str(), &e) == NF_ERR_IO);
  CHECK(std::string(nf_last_error(c.p)).find("fold_0") != std::string::npos);
}
