#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcalc/config.hpp"
#include "gcalc/scenario.hpp"

namespace gcalc {

/// A finite sub-family of the scenario measures, indexed by volatility policies.
class PolicyFamily {
 public:
  enum class Kind { ConstantsOnly, ExtremeConstants, BangBangThreshold, Custom };

  /// d = 1: `count` evenly spaced variances across the band; d > 1: every member.
  static PolicyFamily constants_only(std::size_t count = 5);
  /// Every member held constant (for a band: the two endpoints).
  static PolicyFamily extreme_constants();
  /// For each threshold, the two bang-bang rules between the lowest and
  /// highest member switching on b[component] (or aux[component]).
  static PolicyFamily bangbang_threshold(std::vector<double> thresholds, std::size_t component = 0,
                                         bool on_aux = false);
  static PolicyFamily custom(std::vector<VolatilityPolicy> policies);

  Kind kind() const noexcept { return kind_; }
  std::vector<VolatilityPolicy> policies(const CovarianceSet& set) const;

 private:
  Kind kind_ = Kind::ExtremeConstants;
  std::size_t count_ = 5;
  std::vector<double> thresholds_;
  std::size_t component_ = 0;
  bool on_aux_ = false;
  std::vector<VolatilityPolicy> custom_;
};

struct PolicyEstimate {
  std::string descriptor;
  double mean;
  double std_error;
};

/// One evaluated point of a policy search.
struct SearchStep {
  std::string descriptor;
  double threshold;
  double mean;
};

/// `value` is the largest Monte Carlo mean in `table`; its standard error is
/// that of the argmax policy alone (selection bias is not corrected). Being a
/// maximum over a sub-family, `value` lower-bounds the upper expectation.
struct EstimateReport {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t argmax = 0;
  VolatilityPolicy argmax_policy = VolatilityPolicy::constant_member(0);
  std::size_t n_paths = 0;
  std::vector<PolicyEstimate> table;
  std::vector<SearchStep> trajectory;
};

/// The payoff produced a NaN or infinity on some sampled path.
class NonFinitePayoff : public std::runtime_error {
 public:
  NonFinitePayoff(std::uint64_t seed, std::uint64_t path_index, const std::string& policy);
  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t path_index() const noexcept { return path_index_; }

 private:
  std::uint64_t seed_;
  std::uint64_t path_index_;
};

using Payoff = std::function<double(const GPath&)>;
using MultiPayoff = std::function<std::vector<double>(const GPath&)>;

struct MonteCarloSetup {
  const CovarianceSet& set;
  TimeGrid grid;
  std::size_t n_paths;
  std::uint64_t seed;
  AuxFactory aux = {};  // optional feedback process attached to every path
};

/// Path p of every policy uses the same noise stream (seed, p).
EstimateReport estimate_upper(const Payoff& payoff, const std::vector<VolatilityPolicy>& policies,
                              const MonteCarloSetup& mc);
EstimateReport estimate_upper(const Payoff& payoff, const PolicyFamily& family, const MonteCarloSetup& mc);

/// Several payoffs on the same simulated paths; one report per payoff component.
std::vector<EstimateReport> estimate_upper_multi(const MultiPayoff& payoff, std::size_t n_outputs,
                                                 const std::vector<VolatilityPolicy>& policies,
                                                 const MonteCarloSetup& mc);

/// Exhaustive search over threshold rules (both orientations) plus the two
/// constant extremes they degenerate to. Requires a band (d = 1).
EstimateReport optimize_bangbang(const Payoff& payoff, const std::vector<double>& thresholds,
                                 const MonteCarloSetup& mc);

/// {"kind": "extreme"} | {"kind": "constants", "count": k} |
/// {"kind": "bangbang", "thresholds": [...], "component": i, "on_aux": bool}
PolicyFamily policy_family_from_json(const ConfigNode& node);

/// {value, std_error, n_paths, policies: [{descriptor, mean, se}]}
json report_to_json(const EstimateReport& report);

}  // namespace gcalc
