#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gcalc/expr.hpp"
#include "gcalc/gsde.hpp"
#include "gcalc/uncertainty.hpp"
#include "gcalc/upper_expectation.hpp"

namespace gcalc {

/// A candidate Lyapunov function V(t, x1..xn) together with the way its
/// derivatives are obtained.
class LyapunovSpec {
 public:
  enum class Mode { Analytic, FiniteDifference };

  /// Derivatives supplied by the caller: vt, grad (n), hess (n*n row-major).
  static LyapunovSpec analytic(expr::Expression v, expr::Expression vt, std::vector<expr::Expression> grad,
                               std::vector<expr::Expression> hess, bool nonneg = true);
  /// Analytic mode with the derivatives taken symbolically from `v`.
  static LyapunovSpec symbolic(expr::Expression v, std::size_t n, bool nonneg = true);
  /// Central differences with step h * (1 + |coordinate|); the Hessian uses `h_hess` the same way.
  static LyapunovSpec finite_difference(expr::Expression v, std::size_t n, double h = 1e-5, double h_hess = 1e-4,
                                        bool nonneg = true);

  Mode mode() const noexcept { return mode_; }
  std::size_t n() const noexcept { return n_; }
  bool nonneg() const noexcept { return nonneg_; }
  const expr::Expression& v() const noexcept { return v_; }

  double value(double t, std::span<const double> x) const;
  /// dV/dt, gradient (n) and Hessian (n*n) at (t, x).
  void derivatives(double t, std::span<const double> x, double& vt, std::span<double> grad,
                   std::span<double> hess) const;

 private:
  LyapunovSpec(expr::Expression v, std::size_t n, Mode mode, bool nonneg);

  expr::Expression v_;
  std::size_t n_;
  Mode mode_;
  bool nonneg_;
  double h_ = 1e-5;
  double h_hess_ = 1e-4;
  std::optional<expr::Expression> vt_;
  std::vector<expr::Expression> grad_, hess_;
};

struct GridAxis {
  double lo;
  double hi;
  std::size_t count;
};

/// Tensor grid over [t_lo, t_hi] x box, minus the open ball |x| < exclude_r0.
struct CheckRegion {
  GridAxis time{0.0, 0.0, 1};
  std::vector<GridAxis> box;
  double exclude_r0 = 0.0;

  void validate(std::size_t n) const;
  std::size_t raw_size() const;
  bool contains(std::span<const double> x) const;
  /// Largest distance by which x lies outside the box along any axis (0 inside).
  double excursion(std::span<const double> x) const;
};

struct CheckReport {
  std::string condition;
  double max_violation = 0.0;
  double argmax_t = 0.0;
  std::vector<double> argmax_x;
  bool pass = false;
  std::size_t grid_size = 0;
  double tolerance = 0.0;
  /// Largest change of the violation between neighbouring grid points; a
  /// finer grid can reveal at most about this much more.
  double lipschitz_modulus = 0.0;
  std::vector<std::string> diagnostics;
};

/// LV = dV/dt + sum_nu dV/dx_nu f^nu + G(eta) with
/// eta^{ij} = sum_nu dV/dx_nu (h^{nu ij} + h^{nu ji}) + sum_{mu nu} d2V/dx_mu dx_nu g^{mu i} g^{nu j}.
double eval_L(const LyapunovSpec& spec, const CoefficientSet& coeffs, const CovarianceSet& set, double t,
              std::span<const double> x);

/// Grid maximum of LV - c_ly V.
CheckReport check_h3(const LyapunovSpec& spec, const CoefficientSet& coeffs, const CovarianceSet& set,
                     const CheckRegion& region, double c_ly);

struct ClyEstimate {
  double value = 0.0;  // max(raw, 0)
  double raw = 0.0;    // grid max of LV / V
  double argmax_t = 0.0;
  std::vector<double> argmax_x;
  std::vector<std::string> diagnostics;
};

/// Smallest grid-certified C_LY. Throws std::domain_error naming the point
/// where V < v_min.
ClyEstimate find_cly(const LyapunovSpec& spec, const CoefficientSet& coeffs, const CovarianceSet& set,
                     const CheckRegion& region, double v_min = 1e-8);

enum class StabilityCondition { Sandwich, Nonpositive, ExpStable, ExpUnstable };

struct StabilityParams {
  double p = 2.0;
  double c1 = 1.0;
  double c2 = 1.0;
  double lambda = 0.0;
};

/// sandwich: c1|x|^p <= V <= c2|x|^p; nonpositive: LV <= 0;
/// exp_stable: LV <= -lambda V; exp_unstable: LV >= lambda V.
CheckReport check_stability_conditions(const LyapunovSpec& spec, const CoefficientSet& coeffs,
                                       const CovarianceSet& set, const CheckRegion& region,
                                       const StabilityParams& params, StabilityCondition which);

StabilityCondition stability_condition_from_string(const std::string& name);
std::string to_string(StabilityCondition which);

struct MomentBoundSetup {
  std::vector<double> x0;
  std::vector<double> times;
  double dt = 1e-2;
  std::vector<VolatilityPolicy> policies;
  std::size_t n_paths = 1000;
  std::uint64_t seed = 0;
  double c_ly = 0.0;
  double rel_tol = 0.05;
  bool feedback = false;               // attach the GSDE as auxiliary state for the policies
  std::optional<CheckRegion> region;   // certified region the states must stay in
};

struct MomentBoundRow {
  double t;
  double estimate;
  double std_error;
  double bound;
  std::string argmax_policy;
  bool pass;
};

struct MomentBoundReport {
  std::vector<MomentBoundRow> rows;
  bool pass = false;
  bool region_exceeded = false;
  double max_excursion = 0.0;
  std::vector<std::string> diagnostics;
};

/// Estimates sup over the policies of E[V(t, X_t)] and compares with
/// e^{C_LY t} V(0, x0) (1 + rel_tol) + 3 se. A negative C_LY checks a decay rate.
MomentBoundReport verify_moment_bound(const LyapunovSpec& spec, const CoefficientSet& coeffs,
                                      const CovarianceSet& set, const MomentBoundSetup& setup);

json check_report_to_json(const CheckReport& report);
json moment_report_to_json(const MomentBoundReport& report);

}  // namespace gcalc
