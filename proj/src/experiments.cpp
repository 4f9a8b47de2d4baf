#include "gcalc/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "gcalc/parallel.hpp"

namespace gcalc {

namespace {

constexpr double kLogFloor = 1e-300;

TimeGrid grid_for(double t_end, double dt) {
  return TimeGrid(t_end, static_cast<std::size_t>(std::max(1.0, std::round(t_end / dt))));
}

std::size_t step_of(const TimeGrid& grid, double t) {
  const auto k = static_cast<std::size_t>(std::llround(t / grid.t_end() * static_cast<double>(grid.n_steps())));
  if (std::abs(grid.time(k) - t) > 1e-9 * std::max(1.0, grid.t_end()))
    throw std::invalid_argument(fmt::format("report time {} is not on the dt grid", t));
  return k;
}

// Solves the configured scalar system along one simulated path.
class Solver {
 public:
  explicit Solver(const ExperimentConfig& cfg) : cfg_(cfg) {
    if (cfg.system) coeffs_ = *cfg.system;
    else if (cfg.method == ExperimentConfig::Method::Euler) coeffs_ = cfg.geometric->coefficients();
  }

  SolutionPath operator()(const GPath& path) const {
    if (!coeffs_) {
      const GeometricModel& m = *cfg_.geometric;
      return closed_form_geometric(m.alpha, m.beta, m.gamma, cfg_.x0, path);
    }
    const double x0[1] = {cfg_.x0};
    if (coeffs_->lipschitz() == CoefficientSet::Lipschitz::Local) return solve_localized(*coeffs_, x0, path);
    return integrate(*coeffs_, x0, path);
  }

  AuxFactory aux() const {
    if (cfg_.family.kind() != PolicyFamily::Kind::BangBangThreshold) return {};
    return gsde_aux(coeffs_ ? *coeffs_ : cfg_.geometric->coefficients(), {cfg_.x0});
  }

 private:
  const ExperimentConfig& cfg_;
  std::optional<CoefficientSet> coeffs_;
};

void require_statistics(const ExperimentConfig& cfg, bool& pass, std::vector<std::string>& diagnostics) {
  if (cfg.n_paths < 100) {
    pass = false;
    diagnostics.push_back(fmt::format("n_paths = {} is below 100; no statistical verdict", cfg.n_paths));
  }
}

}  // namespace

CoefficientSet GeometricModel::coefficients() const {
  const expr::Expression::Constants k{{"a", alpha}, {"b", beta}, {"c", gamma}};
  return CoefficientSet::parse(1, 1, {"a*x1"}, {"b*x1"}, {"c*x1"}, k, CoefficientSet::Lipschitz::Global);
}

void ExperimentConfig::validate() const {
  if (geometric.has_value() == system.has_value())
    throw ConfigError("", "exactly one of 'model' (geometric) or 'system' is required");
  if (system && (system->n() != 1 || system->d() != 1)) throw ConfigError("/system", "experiments need n = d = 1");
  if (system && method == Method::ClosedForm)
    throw ConfigError("/method", "closed_form is only available for the geometric model");
  if (!(p > 0.0)) throw ConfigError("/p", "must be positive");
  if (!std::isfinite(x0)) throw ConfigError("/x0", "must be finite");
  if (!(t_end > 0.0)) throw ConfigError("/T", "must be positive");
  if (!(dt > 0.0)) throw ConfigError("/dt", "must be positive");
  if (n_paths < 2) throw ConfigError("/n_paths", "must be at least 2");
  for (double t : times)
    if (!(t >= 0.0 && t <= t_end)) throw ConfigError("/times", fmt::format("time {} outside [0, T]", t));
  for (std::size_t i = 0; i < horizons.size(); ++i)
    if (!(horizons[i] > 0.0) || (i > 0 && !(horizons[i] > horizons[i - 1])))
      throw ConfigError("/horizons", "must be positive and strictly increasing");
  if (steps_per_horizon < 1) throw ConfigError("/steps_per_horizon", "must be at least 1");
}

std::pair<double, double> decay_parameters(const ExperimentConfig& cfg) {
  double lambda = 0.0;
  if (cfg.lambda) {
    lambda = *cfg.lambda;
  } else {
    if (!cfg.geometric) throw ConfigError("/lambda", "required for a general system");
    const GeometricModel& m = *cfg.geometric;
    const double bracket = 2.0 * m.beta + m.gamma * m.gamma * (cfg.p - 1.0);
    const double s = bracket >= 0.0 ? cfg.band.hi() : cfg.band.lo();
    lambda = -cfg.p * m.alpha - 0.5 * cfg.p * bracket * s;
  }
  if (!(lambda > 0.0))
    throw ConfigError("/lambda", fmt::format("not exponentially p-stable under given parameters (lambda = {})", lambda));
  const double c = cfg.c.value_or(1.0);
  if (!(c > 0.0)) throw ConfigError("/C", "must be positive");
  return {lambda, c};
}

DecayTable moment_decay_curve(const ExperimentConfig& cfg) {
  cfg.validate();
  DecayTable table;
  std::tie(table.lambda, table.c) = decay_parameters(cfg);

  std::vector<double> times = cfg.times.empty() ? std::vector<double>{cfg.t_end} : cfg.times;
  const double horizon = *std::max_element(times.begin(), times.end());
  if (!(horizon > 0.0)) throw ConfigError("/times", "need a positive report time");
  const TimeGrid grid = grid_for(horizon, cfg.dt);
  std::vector<std::size_t> at;
  for (double t : times) at.push_back(step_of(grid, t));

  const Solver solve(cfg);
  const MultiPayoff payoff = [&](const GPath& path) {
    const SolutionPath sol = solve(path);
    std::vector<double> out;
    for (std::size_t k : at) out.push_back(std::pow(std::abs(sol.state(k)[0]), cfg.p));
    return out;
  };
  const CovarianceSet set = CovarianceSet::from_band(cfg.band);
  MonteCarloSetup mc{set, grid, cfg.n_paths, cfg.seed, solve.aux()};
  const auto reports = estimate_upper_multi(payoff, at.size(), cfg.family.policies(set), mc);

  table.pass = true;
  const double scale = table.c * std::pow(std::abs(cfg.x0), cfg.p);
  for (std::size_t i = 0; i < at.size(); ++i) {
    DecayRow row{times[i], reports[i].value, reports[i].std_error, scale * std::exp(-table.lambda * times[i]),
                 reports[i].argmax_policy.descriptor(), false};
    row.pass = row.estimate <= row.bound * 1.05 + 3.0 * row.std_error;
    table.pass = table.pass && row.pass;
    table.rows.push_back(std::move(row));
  }
  require_statistics(cfg, table.pass, table.diagnostics);
  return table;
}

ExponentReport lyapunov_exponent(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.x0 == 0.0) throw ConfigError("/x0", "must be nonzero (log of 0)");
  const auto [lambda, c] = decay_parameters(cfg);
  (void)c;

  const TimeGrid grid = grid_for(cfg.t_end, cfg.dt);
  const CovarianceSet set = CovarianceSet::from_band(cfg.band);
  const auto policies = cfg.family.policies(set);
  const Solver solve(cfg);
  const AuxFactory aux = solve.aux();

  const std::size_t n = cfg.n_paths;
  std::vector<double> values(policies.size() * n);
  std::vector<unsigned char> floored(values.size(), 0);
  for (std::size_t pi = 0; pi < policies.size(); ++pi) {
    parallel_for(n, [&](std::size_t p) {
      std::unique_ptr<AuxProcess> a = aux ? aux() : nullptr;
      const GPath path = simulate(policies[pi], set, grid, cfg.seed, p, a.get());
      double x = std::abs(solve(path).terminal()[0]);
      if (!(x >= kLogFloor)) {
        x = kLogFloor;
        floored[pi * n + p] = 1;
      }
      values[pi * n + p] = std::log(x) / grid.t_end();
    });
  }

  ExponentReport out;
  out.samples = values.size();
  out.max = *std::max_element(values.begin(), values.end());
  out.median = quantile(values, 0.5);
  out.bound = -lambda / cfg.p;
  out.slack = 3.0 / std::sqrt(grid.t_end());
  for (unsigned char f : floored) out.floored += f;
  if (out.floored > 0) out.diagnostics.push_back(fmt::format("{} paths floored at |X| = 1e-300", out.floored));
  out.pass = out.max <= out.bound + out.slack;
  require_statistics(cfg, out.pass, out.diagnostics);
  return out;
}

double quantile(std::vector<double> data, double q) {
  if (data.empty()) throw std::invalid_argument("quantile: no data");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile: q outside [0, 1]");
  std::sort(data.begin(), data.end());
  const double pos = q * static_cast<double>(data.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, data.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return data[lo] + w * (data[hi] - data[lo]);
}

BtTable bt_over_t(const CovarianceSet& set, const PolicyFamily& family, const std::vector<double>& horizons,
                  std::size_t steps_per_horizon, std::size_t n_paths, std::uint64_t seed) {
  if (set.dim() != 1) throw std::invalid_argument("bt_over_t: requires d = 1");
  if (horizons.empty()) throw std::invalid_argument("bt_over_t: no horizons");
  if (n_paths < 1 || steps_per_horizon < 1) throw std::invalid_argument("bt_over_t: need paths and steps");
  const auto policies = family.policies(set);
  const double sigma_hi = std::sqrt(set.member(set.highest_member())(0, 0));

  BtTable table;
  for (double horizon : horizons) {
    const TimeGrid grid(horizon, steps_per_horizon);
    std::vector<double> values(policies.size() * n_paths);
    for (std::size_t pi = 0; pi < policies.size(); ++pi)
      parallel_for(n_paths, [&](std::size_t p) {
        values[pi * n_paths + p] = std::abs(simulate(policies[pi], set, grid, seed, p).b_terminal()) / horizon;
      });
    table.rows.push_back(BtRow{horizon, quantile(values, 0.5), quantile(values, 0.9), quantile(values, 0.99)});
  }

  table.pass = true;
  for (std::size_t i = 1; i < table.rows.size(); ++i)
    if (!(table.rows[i].q99 < table.rows[i - 1].q99)) {
      table.pass = false;
      table.diagnostics.push_back(fmt::format("99th percentile does not decrease from T = {} to T = {}",
                                              table.rows[i - 1].horizon, table.rows[i].horizon));
    }
  const BtRow& last = table.rows.back();
  if (!(last.q99 <= 0.2 * sigma_hi)) {
    table.pass = false;
    table.diagnostics.push_back(
        fmt::format("99th percentile {} at T = {} exceeds 0.2 sigma_hi = {}", last.q99, last.horizon, 0.2 * sigma_hi));
  }
  return table;
}

void write_header_block(std::ostream& out, const RunInfo& info, const std::string& title) {
  out << "# gcalc " << title << "\n";
  out << "# config_hash: " << info.config_hash << "\n";
  out << "# seed: " << info.seed << "\n";
  out << "# version: " << info.version << "\n";
}

void write_decay_csv(std::ostream& out, const DecayTable& table, const RunInfo& info) {
  write_header_block(out, info, "moment decay");
  out << fmt::format("# lambda: {}\n# C: {}\n# verdict: {}\n", table.lambda, table.c, table.pass ? "pass" : "fail");
  for (const auto& d : table.diagnostics) out << "# " << d << "\n";
  out << "t,estimate,std_error,bound,argmax_policy,pass\n";
  for (const auto& r : table.rows)
    out << fmt::format("{},{},{},{},\"{}\",{}\n", r.t, r.estimate, r.std_error, r.bound, r.argmax_policy,
                       r.pass ? 1 : 0);
}

void write_bt_csv(std::ostream& out, const BtTable& table, const RunInfo& info) {
  write_header_block(out, info, "|B_T|/T decay");
  out << fmt::format("# verdict: {}\n", table.pass ? "pass" : "fail");
  for (const auto& d : table.diagnostics) out << "# " << d << "\n";
  out << "T,median,q90,q99\n";
  for (const auto& r : table.rows) out << fmt::format("{},{},{},{}\n", r.horizon, r.median, r.q90, r.q99);
}

void write_exponent_csv(std::ostream& out, const ExponentReport& report, const RunInfo& info) {
  write_header_block(out, info, "lyapunov exponent");
  out << fmt::format("# verdict: {}\n", report.pass ? "pass" : "fail");
  for (const auto& d : report.diagnostics) out << "# " << d << "\n";
  out << "max,median,bound,slack,samples,floored\n";
  out << fmt::format("{},{},{},{},{},{}\n", report.max, report.median, report.bound, report.slack, report.samples,
                     report.floored);
}

ExperimentConfig experiment_config_from_json(const ConfigNode& node, std::uint64_t seed) {
  ExperimentConfig cfg;
  if (node.has("model")) {
    const ConfigNode m = node.at("model");
    cfg.geometric = GeometricModel{m.at("alpha").number(), m.at("beta").number(), m.at("gamma").number()};
  }
  if (node.has("system")) cfg.system = coefficient_set_from_json(node.at("system"));
  const std::vector<double> band = node.at("band").numbers();
  if (band.size() != 2) node.at("band").fail("expected [sigma2_lo, sigma2_hi]");
  try {
    cfg.band = SigmaBand(band[0], band[1]);
  } catch (const std::invalid_argument& e) {
    node.at("band").fail(e.what());
  }
  cfg.p = node.number_or("p", cfg.p);
  cfg.x0 = node.number_or("x0", cfg.x0);
  cfg.t_end = node.number_or("T", cfg.t_end);
  cfg.dt = node.number_or("dt", cfg.dt);
  if (node.has("times")) cfg.times = node.at("times").numbers();
  if (node.has("family")) cfg.family = policy_family_from_json(node.at("family"));
  const std::int64_t n_paths = node.integer_or("n_paths", static_cast<std::int64_t>(cfg.n_paths));
  if (n_paths < 2) node.at("n_paths").fail("must be at least 2");
  cfg.n_paths = static_cast<std::size_t>(n_paths);
  cfg.seed = seed;
  const std::string method = node.string_or("method", "euler");
  if (method == "euler") cfg.method = ExperimentConfig::Method::Euler;
  else if (method == "closed_form") cfg.method = ExperimentConfig::Method::ClosedForm;
  else node.at("method").fail("expected \"euler\" or \"closed_form\"");
  if (node.has("lambda")) cfg.lambda = node.at("lambda").number();
  if (node.has("C")) cfg.c = node.at("C").number();
  if (node.has("horizons")) cfg.horizons = node.at("horizons").numbers();
  const std::int64_t steps = node.integer_or("steps_per_horizon", static_cast<std::int64_t>(cfg.steps_per_horizon));
  if (steps < 1) node.at("steps_per_horizon").fail("must be at least 1");
  cfg.steps_per_horizon = static_cast<std::size_t>(steps);
  cfg.validate();
  return cfg;
}

}  // namespace gcalc
