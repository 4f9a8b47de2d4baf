#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gcalc/experiments.hpp"

using namespace gcalc;

namespace {

ExperimentConfig geometric(double alpha, double beta, double gamma, double p, SigmaBand band) {
  ExperimentConfig cfg;
  cfg.geometric = GeometricModel{alpha, beta, gamma};
  cfg.band = band;
  cfg.p = p;
  return cfg;
}

// max over the constant variances of E|X_t|^p, from the lognormal moment
double constant_moment(double alpha, double beta, double gamma, double p, double s, double t) {
  return std::exp(t * (p * alpha + 0.5 * p * s * (2 * beta - gamma * gamma + p * gamma * gamma)));
}

}  // namespace

TEST_CASE("decay parameters") {
  auto cfg = geometric(-1, 0.5, 1, 0.5, SigmaBand(1, 2));
  auto [lambda, c] = decay_parameters(cfg);
  CHECK(lambda == doctest::Approx(0.25));
  CHECK(c == 1.0);
  // negative bracket switches to the lower variance
  cfg = geometric(-1, -1, 1, 0.5, SigmaBand(1, 2));
  CHECK(decay_parameters(cfg).first == doctest::Approx(0.5 + 0.5 * 0.5 * 2.5 * 1.0));
  cfg = geometric(1, 0.5, 1, 0.5, SigmaBand(1, 2));
  try {
    decay_parameters(cfg);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("not exponentially p-stable") != std::string::npos);
  }
  ExperimentConfig general;
  general.system = CoefficientSet::parse(1, 1, {"-x1"}, {"0"}, {"0"});
  CHECK_THROWS_AS(decay_parameters(general), ConfigError);
  general.lambda = 0.7;
  CHECK(decay_parameters(general).first == 0.7);
}

TEST_CASE("decay curve of the geometric model") {
  auto cfg = geometric(-1, 0.5, 1, 0.5, SigmaBand(1, 2));
  cfg.t_end = 10;
  cfg.times = {1, 2, 5, 10};
  cfg.n_paths = 2000;
  cfg.method = ExperimentConfig::Method::ClosedForm;
  const auto table = moment_decay_curve(cfg);
  CHECK(table.pass);
  REQUIRE(table.rows.size() == 4);
  for (const auto& row : table.rows) {
    CHECK(row.bound == doctest::Approx(std::exp(-0.25 * row.t)));
    // the constant-variance family has a lognormal oracle
    const double exact = std::max(constant_moment(-1, 0.5, 1, 0.5, 1, row.t), constant_moment(-1, 0.5, 1, 0.5, 2, row.t));
    CHECK(std::abs(row.estimate - exact) <= 4 * row.std_error + 1e-12);
  }
}

TEST_CASE("Euler decay curve also passes") {
  auto cfg = geometric(-1, 0.5, 1, 0.5, SigmaBand(1, 2));
  cfg.t_end = 5;
  cfg.times = {1, 5};
  cfg.n_paths = 500;
  CHECK(moment_decay_curve(cfg).pass);
}

TEST_CASE("deterministic decay and zero start") {
  auto cfg = geometric(-1, 0, 0, 1, SigmaBand(1, 2));
  cfg.t_end = 2;
  cfg.dt = 1e-3;
  cfg.times = {0.5, 1, 2};
  cfg.n_paths = 100;
  for (const auto& row : moment_decay_curve(cfg).rows) {
    CHECK(std::abs(row.estimate - std::exp(-row.t)) <= 1e-3);
    CHECK(row.std_error == doctest::Approx(0.0));
  }
  cfg.x0 = 0.0;
  const auto zero = moment_decay_curve(cfg);
  for (const auto& row : zero.rows) CHECK(row.estimate == 0.0);
  CHECK(zero.pass);
}

TEST_CASE("too few paths cannot pass") {
  auto cfg = geometric(-1, 0.5, 1, 0.5, SigmaBand(1, 2));
  cfg.n_paths = 50;
  const auto t = moment_decay_curve(cfg);
  CHECK_FALSE(t.pass);
  CHECK_FALSE(t.diagnostics.empty());
}

TEST_CASE("quasi-sure exponent") {
  auto cfg = geometric(-1, 0.5, 1, 0.5, SigmaBand(1, 2));
  cfg.t_end = 50;
  cfg.dt = 0.05;
  cfg.n_paths = 300;
  cfg.method = ExperimentConfig::Method::ClosedForm;
  const auto r = lyapunov_exponent(cfg);
  CHECK(r.bound == doctest::Approx(-0.5));
  CHECK(r.slack == doctest::Approx(3 / std::sqrt(50.0)));
  CHECK(r.samples == 600);
  // (1/T) log X_T = -1 + B_T / T here, so the median sits near -1
  CHECK(r.median == doctest::Approx(-1.0).epsilon(0.05));
  CHECK(r.max <= r.bound + r.slack);
  CHECK(r.pass);
}

TEST_CASE("noise-free exponent equals the drift") {
  auto cfg = geometric(-0.7, 0, 0, 1, SigmaBand(1, 2));
  cfg.t_end = 10;
  cfg.n_paths = 100;
  cfg.method = ExperimentConfig::Method::ClosedForm;
  const auto r = lyapunov_exponent(cfg);
  CHECK(r.max == doctest::Approx(-0.7).epsilon(1e-12));
  CHECK(r.median == doctest::Approx(-0.7).epsilon(1e-12));
  cfg.method = ExperimentConfig::Method::Euler;
  CHECK(lyapunov_exponent(cfg).max == doctest::Approx(std::log(1 - 0.7 * cfg.dt) / cfg.dt).epsilon(1e-9));
  cfg.x0 = 0;
  CHECK_THROWS_AS(lyapunov_exponent(cfg), ConfigError);
}

TEST_CASE("|B_T|/T shrinks like T^-1/2") {
  const auto set = CovarianceSet::from_band(SigmaBand(1, 2));
  const auto t = bt_over_t(set, PolicyFamily::extreme_constants(), {10, 100, 1000}, 50, 1000, 3);
  REQUIRE(t.rows.size() == 3);
  for (std::size_t i = 1; i < 3; ++i) {
    // common noise and constant variances: an exact rescaling
    CHECK(t.rows[i - 1].q99 / t.rows[i].q99 == doctest::Approx(std::sqrt(10.0)).epsilon(1e-12));
    CHECK(t.rows[i - 1].median / t.rows[i].median == doctest::Approx(std::sqrt(10.0)).epsilon(1e-12));
  }
  CHECK(t.rows[2].q99 <= 0.2 * std::sqrt(2.0));
  CHECK(t.pass);
  const auto bb = bt_over_t(set, PolicyFamily::bangbang_threshold({0.0}), {10, 100, 1000}, 50, 1000, 3);
  CHECK(bb.pass);
  CHECK_FALSE(bt_over_t(set, PolicyFamily::extreme_constants(), {10, 100}, 50, 99, 3).pass);
}

TEST_CASE("quantile helper") {
  CHECK(quantile({3, 1, 2}, 0.5) == 2);
  CHECK(quantile({1, 2}, 0.25) == doctest::Approx(1.25));
  CHECK(quantile({5}, 0.99) == 5);
  CHECK(quantile({1, 2, 3, 4}, 1.0) == 4);
  CHECK_THROWS(quantile({}, 0.5));
  CHECK_THROWS(quantile({1, 2}, 1.5));
}

TEST_CASE("config parsing and validation") {
  const json j = {{"model", {{"alpha", -1}, {"beta", 0.5}, {"gamma", 1}}}, {"band", {1, 2}}, {"p", 0.5},
                  {"T", 10}, {"times", {1, 2}}, {"n_paths", 200}, {"method", "closed_form"}};
  const auto cfg = experiment_config_from_json(ConfigNode(j), 9);
  CHECK(cfg.seed == 9);
  CHECK(cfg.method == ExperimentConfig::Method::ClosedForm);
  CHECK(cfg.times.size() == 2);
  json bad = j;
  bad["method"] = "rk4";
  CHECK_THROWS_AS(experiment_config_from_json(ConfigNode(bad), 0), ConfigError);
  bad = j;
  bad["times"] = {1, 20};
  CHECK_THROWS_AS(experiment_config_from_json(ConfigNode(bad), 0).validate(), ConfigError);
  ExperimentConfig none;
  CHECK_THROWS_AS(none.validate(), ConfigError);
}

TEST_CASE("CSV tables carry the provenance block") {
  auto cfg = geometric(-1, 0.5, 1, 0.5, SigmaBand(1, 2));
  cfg.n_paths = 100;
  cfg.method = ExperimentConfig::Method::ClosedForm;
  std::ostringstream os;
  write_decay_csv(os, moment_decay_curve(cfg), RunInfo{"abc", 4, "1.0"});
  const std::string s = os.str();
  CHECK(s.rfind("# gcalc moment decay\n# config_hash: abc\n# seed: 4\n# version: 1.0\n", 0) == 0);
  CHECK(s.find("t,estimate,std_error,bound,argmax_policy,pass\n") != std::string::npos);
}
