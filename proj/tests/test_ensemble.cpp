#include <doctest.h>

#include <cmath>
#include <vector>

#include "models.hpp"
#include "nanoflow/ensemble.hpp"
#include "nanoflow/error.hpp"
#include "oracles/gaussian_oracle.hpp"
#include "synthetic.hpp"
#include "test_util.hpp"

using namespace nanoflow;
using namespace nanoflow::ensemble;
using nanoflow::training::Checkpoint;

namespace {

Checkpoint constant_checkpoint(const std::vector<double>& t, const std::vector<double>& log_s, int m = 1) {
  std::vector<double> raw;
  for (double v : log_s) raw.push_back(models::raw_for_log_scale(v));
  return models::wrap(models::constant_model(m, t, raw));
}

}  // namespace

TEST_CASE("confidence interval arithmetic") {
  const Interval a = confidence_interval(0.5, 0.1);
  CHECK(a.low == doctest::Approx(0.304).epsilon(1e-14));
  CHECK(a.high == doctest::Approx(0.696).epsilon(1e-14));
  const Interval b = confidence_interval(0.25, 0.0);
  CHECK(b.low == 0.25);
  CHECK(b.high == 0.25);
  const Interval c = confidence_interval(0.01, 0.05);
  CHECK(c.low == doctest::Approx(-0.088).epsilon(1e-12));
  CHECK(c.high == doctest::Approx(0.108).epsilon(1e-12));
  const Interval cc = clamp_unit(c);
  CHECK(cc.low == 0.0);
  CHECK(cc.high == c.high);
  CHECK(clamp_unit(confidence_interval(0.99, 0.1)).high == 1.0);
  CHECK_THROWS_AS(confidence_interval(0.5, -1e-3), Error);
  CHECK_THROWS_AS(confidence_interval(0.5, std::nan("")), Error);
}

TEST_CASE("summary holds the interval identity") {
  RandomStream rng(4, 0);
  Eigen::MatrixXd s(500, 6);
  for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = 0.02 * rng.normal() + 0.01 * static_cast<double>(i % 6);
  const PosteriorSummary p = summarize(s);
  CHECK(p.n_total_samples == 500);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < 6; ++j) {
    worst = std::max(worst, std::abs(p.ci_low(j) - (p.mean(j) - 1.96 * p.std(j))));
    worst = std::max(worst, std::abs(p.ci_high(j) - (p.mean(j) + 1.96 * p.std(j))));
    CHECK(p.ci_low(j) <= p.mean(j));
    CHECK(p.mean(j) <= p.ci_high(j));
    CHECK(p.ci_low_clamped(j) >= 0.0);
    CHECK(p.ci_low_clamped(j) == std::max(0.0, p.ci_low(j)));
  }
  CHECK(worst <= 1e-12);
  CHECK(p.ci_low(0) < 0.0);
  CHECK_THROWS_AS(summarize(Eigen::MatrixXd::Zero(1, 3)), Error);
}

TEST_CASE("degenerate scale predicts the denormalized shift") {
  Checkpoint c = constant_checkpoint({0.3, -0.2}, {0.0, 0.0});
  c.model.conditioner.layers[0].bias.tail(2).setConstant(-1e3);
  c.stats.target_mean = Eigen::Vector2d(0.5, 0.1);
  c.stats.target_std = Eigen::Vector2d(0.2, 0.05);
  const PosteriorSummary p = predict({c}, std::vector{0.0}, 10000, 3);
  CHECK(std::abs(p.mean(0) - 0.56) <= 1e-4);
  CHECK(std::abs(p.mean(1) - (0.1 - 0.05 * 0.2)) <= 1e-4);
  for (int j = 0; j < 2; ++j) {
    CHECK((p.ci_high(j) - p.ci_low(j)) / c.stats.target_std(j) < 1e-2);
  }
}

TEST_CASE("pooling identical models matches doubled sampling") {
  const Checkpoint c = constant_checkpoint({1.0, -1.0, 0.0}, {0.0, -0.5, 0.5});
  const PosteriorSummary one = predict({c}, std::vector{0.0}, 20000, 11);
  const PosteriorSummary two = predict({c, c}, std::vector{0.0}, 10000, 11);
  CHECK(two.n_total_samples == 20000);
  for (Eigen::Index j = 0; j < 3; ++j) {
    const double se = one.std(j) * std::sqrt(1.0 / 20000 + 1.0 / 20000);
    CHECK(std::abs(one.mean(j) - two.mean(j)) <= 3.0 * se);
    CHECK(two.std(j) == doctest::Approx(one.std(j)).epsilon(0.03));
  }
}

TEST_CASE("two-component pool matches the mixture moments") {
  const std::vector<Checkpoint> cks = {constant_checkpoint({0.0}, {0.0}), constant_checkpoint({2.0}, {0.0})};
  double mean = 0.0, var = 0.0;
  oracle::mixture_moments({0.0, 2.0}, {1.0, 1.0}, mean, var);
  REQUIRE(var == doctest::Approx(2.0));
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const PosteriorSummary p = predict(cks, std::vector{0.0}, 10000, seed);
    CHECK(p.n_total_samples == 20000);
    CHECK(std::abs(p.mean(0) - mean) <= 3.0 * std::sqrt(var / 20000.0));
    CHECK(std::abs(p.std(0) - std::sqrt(var)) <= 0.05 * std::sqrt(var));
  }
}

TEST_CASE("predict is deterministic and thread independent") {
  const std::vector<Checkpoint> cks = {constant_checkpoint({0.1, 0.2}, {-1.0, -2.0}),
                                       constant_checkpoint({0.3, 0.0}, {-1.5, -1.0}),
                                       constant_checkpoint({0.2, 0.4}, {-2.0, -0.5})};
  const PosteriorSummary a = predict(cks, std::vector{0.0}, 3000, 77, 1);
  const PosteriorSummary b = predict(cks, std::vector{0.0}, 3000, 77, 3);
  CHECK(a.mean == b.mean);
  CHECK(a.std == b.std);
  const PosteriorSummary c = predict(cks, std::vector{0.0}, 3000, 78, 1);
  CHECK(a.mean != c.mean);
  const Eigen::MatrixXd pool = pooled_samples(cks, std::vector{0.0}, 3000, 77);
  CHECK(pool.rows() == 9000);
  const Eigen::MatrixXd fold1 = flow::sample(cks[1].model, std::vector{0.0}, 3000, derive_seed(77, 1));
  CHECK(pool.middleRows(3000, 3000) == fold1);
}

TEST_CASE("predict normalizes features with each fold's statistics") {
  Checkpoint a = models::wrap(models::constant_model(1, {0.0}, {models::raw_for_log_scale(-7.0)}));
  a.model.conditioner.layers[0].weight(0, 0) = 1.0;
  Checkpoint b = a;
  a.stats.feature_mean(0) = 10.0;
  b.stats.feature_mean(0) = 12.0;
  b.stats.feature_std(0) = 2.0;
  const PosteriorSummary pa = predict({a}, std::vector{14.0}, 100, 1);
  const PosteriorSummary pb = predict({b}, std::vector{14.0}, 100, 1);
  CHECK(pa.mean(0) == doctest::Approx(4.0).epsilon(1e-3));
  CHECK(pb.mean(0) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("incompatible checkpoints are rejected") {
  Checkpoint a = constant_checkpoint({0.0, 0.0, 0.0}, {0.0, 0.0, 0.0});
  a.wavelengths = {0.5};
  Checkpoint b = a;
  b.wavelengths = {0.6};
  CHECK_THROWS_AS(predict({a, b}, std::vector{0.0}, 10, 1), Error);
  Checkpoint c = a;
  c.n_rho = 3;
  CHECK_THROWS_AS(predict({a, c}, std::vector{0.0}, 10, 1), Error);
  Checkpoint d = constant_checkpoint({0.0, 0.0}, {0.0, 0.0});
  d.wavelengths = a.wavelengths;
  CHECK_THROWS_AS(predict({a, d}, std::vector{0.0}, 10, 1), Error);
  Checkpoint e = a;
  e.kind = training::ModelKind::Baseline;
  CHECK_THROWS_AS(predict({e}, std::vector{0.0}, 10, 1), Error);
  CHECK_THROWS_AS(predict({}, std::vector{0.0}, 10, 1), Error);
  CHECK_THROWS_AS(predict({a}, std::vector{0.0, 1.0}, 10, 1), Error);
}

TEST_CASE("validation NLL of the generator matches its entropy") {
  const auto g = synthetic::Generator::make(3, 4, 8);
  const Checkpoint c = models::generator_checkpoint(g);
  const Eigen::MatrixXd y = g.inputs(20000, 21);
  const Eigen::MatrixXd x = g.draw(y, 21);
  const NllResult r = evaluate_nll(c, y, x);
  CHECK(r.count == 20000);
  std::vector<double> sd(g.sigma.data(), g.sigma.data() + g.d());
  const double h = oracle::diag_gaussian_entropy(sd);
  const double se = std::sqrt(g.d() / 2.0 / 20000.0);
  CHECK(std::abs(r.normalized - h) <= 3.0 * se);

  Eigen::MatrixXd y2(40000, y.cols()), x2(40000, x.cols());
  y2 << y, y;
  x2 << x, x;
  CHECK(evaluate_nll(c, y2, x2).normalized == doctest::Approx(r.normalized).epsilon(1e-12));
  CHECK_THROWS_AS(evaluate_nll(c, Eigen::MatrixXd(0, 3), Eigen::MatrixXd(0, 4)), Error);
}

TEST_CASE("raw NLL adds the de-normalization Jacobian") {
  Checkpoint c = constant_checkpoint({0.1, -0.3}, {-0.2, 0.4}, 2);
  c.stats.target_mean = Eigen::Vector2d(0.4, 0.2);
  c.stats.target_std = Eigen::Vector2d(0.03, 0.2);
  c.stats.feature_std = Eigen::Vector2d(2.0, 5.0);
  RandomStream rng(5, 5);
  Eigen::MatrixXd y(50, 2), x(50, 2);
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    y.data()[i] = rng.normal();
    x.data()[i] = 0.3 + 0.1 * rng.normal();
  }
  const NllResult r = evaluate_nll(c, y, x);
  CHECK(std::abs((r.raw - r.normalized) - (std::log(0.03) + std::log(0.2))) <= 1e-10);

  // Physical-unit density by hand.
  double expect = 0.0;
  for (Eigen::Index i = 0; i < 50; ++i) {
    std::vector<double> xi = {x(i, 0), x(i, 1)};
    std::vector<double> mu = {0.4 + 0.03 * 0.1, 0.2 + 0.2 * -0.3};
    std::vector<double> sd = {0.03 * std::exp(-0.2), 0.2 * std::exp(0.4)};
    expect -= oracle::diag_gaussian_logpdf(xi, mu, sd) / 50.0;
  }
  CHECK(r.raw == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("split_spectra inverts the target stacking") {
  PosteriorSummary p;
  p.mean.resize(6);
  p.mean << 0.1, 0.2, 0.3, 0.4, 0.6, 0.4;
  p.std = Eigen::VectorXd::Constant(6, 0.01);
  p.ci_low = p.mean.array() - 0.0196;
  p.ci_high = p.mean.array() + 0.0196;
  p.ci_low_clamped = p.ci_low;
  p.ci_high_clamped = p.ci_high;
  const std::vector<double> wl = {0.5, 0.9};
  const SpectralSummary s = split_spectra(p, wl);
  CHECK(s.channels[0].name == "R");
  CHECK(s.channels[1].name == "A");
  CHECK(s.channels[2].name == "T");
  CHECK(s.channels[0].mean == std::vector{0.1, 0.2});
  CHECK(s.channels[1].mean == std::vector{0.3, 0.4});
  CHECK(s.channels[2].mean == std::vector{0.6, 0.4});
  CHECK(s.closure_deviation[0] == doctest::Approx(0.0).scale(1));
  CHECK(s.closure_deviation[1] == doctest::Approx(0.0).scale(1));

  const auto triplet = dataset::split_targets(std::span<const double>(p.mean.data(), 6), 2);
  CHECK(triplet.r_total == s.channels[0].mean);
  CHECK(triplet.absorbance == s.channels[1].mean);
  CHECK(triplet.transmittance == s.channels[2].mean);

  CHECK_THROWS_AS(split_spectra(p, std::vector{0.5}), Error);
}

TEST_CASE("prediction.csv layout") {
  PosteriorSummary p = summarize((Eigen::MatrixXd(3, 3) << 0.0, 0.5, 0.9, 0.02, 0.5, 1.0, 0.04, 0.5, 0.95).finished());
  const SpectralSummary s = split_spectra(p, std::vector{1.25});
  testutil::TempDir dir("pred");
  write_prediction(s, dir.path() / "prediction.csv");
  const std::string text = testutil::slurp(dir.path() / "prediction.csv");
  CHECK(text.rfind("wavelength,channel,mean,std,ci_low,ci_high,ci_low_clamped,ci_high_clamped\n", 0) == 0);
  CHECK(text.find("\n1.25,R,0.02,0.02,") != std::string::npos);
  CHECK(text.find(",A,0.5,0,0.5,0.5,0.5,0.5\n") != std::string::npos);
  CHECK(text.find(",T,") != std::string::npos);
  std::size_t lines = 0;
  for (char ch : text) lines += ch == '\n';
  CHECK(lines == 4);
}

TEST_CASE("calibration of the true generator") {
  const auto g = synthetic::Generator::make(2, 3, 12);
  const Checkpoint c = models::generator_checkpoint(g);
  const Eigen::MatrixXd y = g.inputs(10000, 31);
  const Eigen::MatrixXd x = g.draw(y, 31);
  CalibrationOptions opt;
  opt.samples_per_model = 2000;
  opt.seed = 5;
  const CalibrationReport r = calibration_report({c}, y, x, opt);
  CHECK(r.records == 10000);
  CHECK(r.pairs == 30000);
  CHECK(std::abs(r.coverage - oracle::normal_coverage(1.96)) <= 0.01);

  opt.interval_scale = 10.0;
  CHECK(calibration_report({c}, y.topRows(500), x.topRows(500), opt).coverage >= 0.999);

  Checkpoint sharp = c;
  sharp.model.conditioner.layers[0].bias.tail(3).setConstant(-1e3);
  opt.interval_scale = 1.0;
  CHECK(calibration_report({sharp}, y.topRows(500), x.topRows(500), opt).coverage <= 0.01);

  CHECK_THROWS_AS(calibration_report({c}, y.topRows(19), x.topRows(19), opt), Error);
}
