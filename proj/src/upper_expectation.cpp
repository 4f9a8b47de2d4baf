#include "gcalc/upper_expectation.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "gcalc/parallel.hpp"

namespace gcalc {

NonFinitePayoff::NonFinitePayoff(std::uint64_t seed, std::uint64_t path_index, const std::string& policy)
    : std::runtime_error(fmt::format("payoff is non-finite on path {} (seed {}) under policy {}", path_index,
                                     seed, policy)),
      seed_(seed),
      path_index_(path_index) {}

PolicyFamily PolicyFamily::constants_only(std::size_t count) {
  if (count < 2) throw std::invalid_argument("constants_only: need at least two constants");
  PolicyFamily f;
  f.kind_ = Kind::ConstantsOnly;
  f.count_ = count;
  return f;
}

PolicyFamily PolicyFamily::extreme_constants() {
  PolicyFamily f;
  f.kind_ = Kind::ExtremeConstants;
  return f;
}

PolicyFamily PolicyFamily::bangbang_threshold(std::vector<double> thresholds, std::size_t component,
                                              bool on_aux) {
  if (thresholds.empty()) throw std::invalid_argument("bangbang_threshold: threshold grid is empty");
  PolicyFamily f;
  f.kind_ = Kind::BangBangThreshold;
  f.thresholds_ = std::move(thresholds);
  f.component_ = component;
  f.on_aux_ = on_aux;
  return f;
}

PolicyFamily PolicyFamily::custom(std::vector<VolatilityPolicy> policies) {
  if (policies.empty()) throw std::invalid_argument("custom family: policy list is empty");
  PolicyFamily f;
  f.kind_ = Kind::Custom;
  f.custom_ = std::move(policies);
  return f;
}

std::vector<VolatilityPolicy> PolicyFamily::policies(const CovarianceSet& set) const {
  std::vector<VolatilityPolicy> out;
  switch (kind_) {
    case Kind::ConstantsOnly:
      if (set.band()) {
        const double lo = set.band()->lo();
        const double hi = set.band()->hi();
        for (std::size_t i = 0; i < count_; ++i) {
          const double v = i + 1 == count_ ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count_ - 1);
          out.push_back(VolatilityPolicy::constant_variance(v));
        }
        break;
      }
      [[fallthrough]];
    case Kind::ExtremeConstants:
      for (std::size_t m = 0; m < set.size(); ++m) out.push_back(VolatilityPolicy::constant_member(m));
      break;
    case Kind::BangBangThreshold: {
      const std::size_t lo = set.lowest_member();
      const std::size_t hi = set.highest_member();
      for (double th : thresholds_) {
        out.push_back(VolatilityPolicy::threshold(th, hi, lo, component_, on_aux_));
        out.push_back(VolatilityPolicy::threshold(th, lo, hi, component_, on_aux_));
      }
      break;
    }
    case Kind::Custom:
      out = custom_;
      break;
  }
  for (const auto& p : out) p.validate(set);
  return out;
}

std::vector<EstimateReport> estimate_upper_multi(const MultiPayoff& payoff, std::size_t n_outputs,
                                                 const std::vector<VolatilityPolicy>& policies,
                                                 const MonteCarloSetup& mc) {
  if (mc.n_paths < 2) throw std::invalid_argument("estimate_upper: n_paths must be at least 2");
  if (policies.empty()) throw std::invalid_argument("estimate_upper: empty policy family");
  if (n_outputs == 0) throw std::invalid_argument("estimate_upper: no payoff outputs");
  for (const auto& p : policies) p.validate(mc.set);

  const std::size_t n = mc.n_paths;
  std::vector<EstimateReport> reports(n_outputs);
  for (auto& r : reports) {
    r.n_paths = n;
    r.value = -std::numeric_limits<double>::infinity();
  }

  std::vector<double> values(n * n_outputs);
  for (std::size_t pi = 0; pi < policies.size(); ++pi) {
    const VolatilityPolicy& policy = policies[pi];
    parallel_for(n, [&](std::size_t p) {
      std::unique_ptr<AuxProcess> aux = mc.aux ? mc.aux() : nullptr;
      const GPath path = simulate(policy, mc.set, mc.grid, mc.seed, p, aux.get());
      const std::vector<double> v = payoff(path);
      if (v.size() != n_outputs)
        throw std::invalid_argument(fmt::format("payoff returned {} values, expected {}", v.size(), n_outputs));
      for (std::size_t j = 0; j < n_outputs; ++j) {
        if (!std::isfinite(v[j])) throw NonFinitePayoff(mc.seed, p, policy.descriptor());
        values[p * n_outputs + j] = v[j];
      }
    });

    for (std::size_t j = 0; j < n_outputs; ++j) {
      double sum = 0.0;
      for (std::size_t p = 0; p < n; ++p) sum += values[p * n_outputs + j];
      const double mean = sum / static_cast<double>(n);
      double ss = 0.0;
      for (std::size_t p = 0; p < n; ++p) {
        const double e = values[p * n_outputs + j] - mean;
        ss += e * e;
      }
      const double se = std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
      EstimateReport& r = reports[j];
      r.table.push_back(PolicyEstimate{policy.descriptor(), mean, se});
      if (mean > r.value) {
        r.value = mean;
        r.std_error = se;
        r.argmax = pi;
        r.argmax_policy = policy;
      }
    }
  }
  return reports;
}

EstimateReport estimate_upper(const Payoff& payoff, const std::vector<VolatilityPolicy>& policies,
                              const MonteCarloSetup& mc) {
  MultiPayoff wrapped = [&](const GPath& path) { return std::vector<double>{payoff(path)}; };
  return std::move(estimate_upper_multi(wrapped, 1, policies, mc).front());
}

EstimateReport estimate_upper(const Payoff& payoff, const PolicyFamily& family, const MonteCarloSetup& mc) {
  return estimate_upper(payoff, family.policies(mc.set), mc);
}

EstimateReport optimize_bangbang(const Payoff& payoff, const std::vector<double>& thresholds,
                                 const MonteCarloSetup& mc) {
  if (thresholds.empty()) throw std::invalid_argument("optimize_bangbang: threshold grid is empty");
  if (!mc.set.band()) throw std::invalid_argument("optimize_bangbang: requires a one-dimensional band");
  const std::size_t lo = mc.set.lowest_member();
  const std::size_t hi = mc.set.highest_member();

  std::vector<VolatilityPolicy> candidates;
  std::vector<double> levels;
  candidates.push_back(VolatilityPolicy::constant_member(hi));
  levels.push_back(-std::numeric_limits<double>::infinity());
  candidates.push_back(VolatilityPolicy::constant_member(lo));
  levels.push_back(std::numeric_limits<double>::infinity());
  for (double th : thresholds) {
    candidates.push_back(VolatilityPolicy::threshold(th, hi, lo));
    levels.push_back(th);
    candidates.push_back(VolatilityPolicy::threshold(th, lo, hi));
    levels.push_back(th);
  }

  EstimateReport report = estimate_upper(payoff, candidates, mc);
  for (std::size_t i = 0; i < report.table.size(); ++i)
    report.trajectory.push_back(SearchStep{report.table[i].descriptor, levels[i], report.table[i].mean});
  return report;
}

PolicyFamily policy_family_from_json(const ConfigNode& node) {
  const std::string kind = node.at("kind").string();
  if (kind == "extreme") return PolicyFamily::extreme_constants();
  if (kind == "constants") {
    const std::int64_t count = node.integer_or("count", 5);
    if (count < 2) node.at("count").fail("need at least two constants");
    return PolicyFamily::constants_only(static_cast<std::size_t>(count));
  }
  if (kind == "bangbang") {
    std::vector<double> thresholds = node.at("thresholds").numbers();
    if (thresholds.empty()) node.at("thresholds").fail("threshold grid is empty");
    const std::int64_t component = node.integer_or("component", 0);
    if (component < 0) node.at("component").fail("must be nonnegative");
    return PolicyFamily::bangbang_threshold(std::move(thresholds), static_cast<std::size_t>(component),
                                            node.boolean_or("on_aux", false));
  }
  node.at("kind").fail(fmt::format("unknown policy family '{}' (extreme, constants, bangbang)", kind));
}

json report_to_json(const EstimateReport& report) {
  json policies = json::array();
  for (const auto& row : report.table)
    policies.push_back({{"descriptor", row.descriptor}, {"mean", row.mean}, {"se", row.std_error}});
  json out = {{"value", report.value},
              {"std_error", report.std_error},
              {"n_paths", report.n_paths},
              {"argmax_policy", report.argmax_policy.descriptor()},
              {"policies", policies}};
  if (!report.trajectory.empty()) {
    json traj = json::array();
    for (const auto& s : report.trajectory)
      traj.push_back({{"descriptor", s.descriptor},
                      {"threshold", std::isfinite(s.threshold) ? json(s.threshold) : json(nullptr)},
                      {"mean", s.mean}});
    out["trajectory"] = traj;
  }
  return out;
}

}  // namespace gcalc
