#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "gcalc/config.hpp"
#include "gcalc/gsde.hpp"
#include "gcalc/upper_expectation.hpp"

namespace gcalc {

/// dX = alpha X dt + beta X d<B> + gamma X dB
struct GeometricModel {
  double alpha = -1.0;
  double beta = 0.5;
  double gamma = 1.0;

  CoefficientSet coefficients() const;
};

struct ExperimentConfig {
  enum class Method { Euler, ClosedForm };

  std::optional<GeometricModel> geometric;
  std::optional<CoefficientSet> system;  // scalar system; lambda must then be supplied
  SigmaBand band{1.0, 1.0};
  double p = 2.0;
  double x0 = 1.0;
  double t_end = 1.0;
  double dt = 1e-2;
  std::vector<double> times;  // report times for the decay curve (default: t_end)
  PolicyFamily family = PolicyFamily::extreme_constants();
  std::size_t n_paths = 1000;
  std::uint64_t seed = 0;
  Method method = Method::Euler;
  std::optional<double> lambda;
  std::optional<double> c;
  std::vector<double> horizons{10.0, 100.0, 1000.0};  // bt_over_t
  std::size_t steps_per_horizon = 1000;

  void validate() const;
};

/// Decay rate and constant of |x0|^p C e^{-lambda t}. For the geometric
/// model: lambda = -p alpha - p (2 beta + gamma^2 (p - 1)) s / 2 with s the
/// upper variance when the bracket is nonnegative, the lower one otherwise;
/// C = 1. Throws ConfigError when lambda <= 0.
std::pair<double, double> decay_parameters(const ExperimentConfig& cfg);

struct DecayRow {
  double t;
  double estimate;
  double std_error;
  double bound;
  std::string argmax_policy;
  bool pass;
};

struct DecayTable {
  double lambda = 0.0;
  double c = 1.0;
  std::vector<DecayRow> rows;
  bool pass = false;
  std::vector<std::string> diagnostics;
};

/// Upper-expectation estimates of |X_t|^p at each report time against C |x0|^p e^{-lambda t}.
DecayTable moment_decay_curve(const ExperimentConfig& cfg);

struct ExponentReport {
  double max = 0.0;
  double median = 0.0;
  double bound = 0.0;   // -lambda / p
  double slack = 0.0;   // 3 / sqrt(T)
  std::size_t samples = 0;
  std::size_t floored = 0;  // paths with |X_T| below 1e-300
  bool pass = false;
  std::vector<std::string> diagnostics;
};

/// (1/T) log|X_T| over every path and policy.
ExponentReport lyapunov_exponent(const ExperimentConfig& cfg);

struct BtRow {
  double horizon;
  double median;
  double q90;
  double q99;
};

struct BtTable {
  std::vector<BtRow> rows;
  bool pass = false;
  std::vector<std::string> diagnostics;
};

/// Quantiles of |B_T| / T across paths and policies for each horizon.
BtTable bt_over_t(const CovarianceSet& set, const PolicyFamily& family, const std::vector<double>& horizons,
                  std::size_t steps_per_horizon, std::size_t n_paths, std::uint64_t seed);

/// Linear-interpolation quantile of unsorted data, q in [0, 1].
double quantile(std::vector<double> data, double q);

/// Provenance recorded at the top of every emitted table.
struct RunInfo {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string version;
};

void write_header_block(std::ostream& out, const RunInfo& info, const std::string& title);
void write_decay_csv(std::ostream& out, const DecayTable& table, const RunInfo& info);
void write_bt_csv(std::ostream& out, const BtTable& table, const RunInfo& info);
void write_exponent_csv(std::ostream& out, const ExponentReport& report, const RunInfo& info);

ExperimentConfig experiment_config_from_json(const ConfigNode& node, std::uint64_t seed);

}  // namespace gcalc
