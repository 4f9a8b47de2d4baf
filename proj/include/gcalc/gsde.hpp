#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcalc/config.hpp"
#include "gcalc/expr.hpp"
#include "gcalc/scenario.hpp"
#include "gcalc/upper_expectation.hpp"

namespace gcalc {

/// Deterministic coefficients of dX = f dt + h^{ij} d<B^i,B^j> + g^j dB^j.
/// Expressions are over (t, x1..xn). With a truncation radius N set, every
/// evaluation first maps x to N x / |x| when |x| > N.
class CoefficientSet {
 public:
  enum class Lipschitz { Global, Local };

  /// f: n entries; h: n*d*d entries indexed (nu*d + i)*d + j; g: n*d entries indexed nu*d + j.
  CoefficientSet(std::size_t n, std::size_t d, std::vector<expr::Expression> f, std::vector<expr::Expression> h,
                 std::vector<expr::Expression> g, Lipschitz tag = Lipschitz::Local);

  /// Parses source strings against (t, x1..xn) with a named-constant table.
  static CoefficientSet parse(std::size_t n, std::size_t d, const std::vector<std::string>& f,
                              const std::vector<std::string>& h, const std::vector<std::string>& g,
                              const expr::Expression::Constants& constants = {},
                              Lipschitz tag = Lipschitz::Local);
  static CoefficientSet zero(std::size_t n, std::size_t d, Lipschitz tag = Lipschitz::Global);

  std::size_t n() const noexcept { return n_; }
  std::size_t d() const noexcept { return d_; }
  Lipschitz lipschitz() const noexcept { return tag_; }
  std::optional<double> radius() const noexcept { return radius_; }

  const expr::Expression& f(std::size_t nu) const { return f_.at(nu); }
  const expr::Expression& h(std::size_t nu, std::size_t i, std::size_t j) const { return h_.at((nu * d_ + i) * d_ + j); }
  const expr::Expression& g(std::size_t nu, std::size_t j) const { return g_.at(nu * d_ + j); }

  /// All coefficients at (t, x), truncation applied. Buffers sized n, n*d*d, n*d.
  void evaluate(double t, std::span<const double> x, std::span<double> f, std::span<double> h,
                std::span<double> g) const;

  /// True when f(t,0) = h(t,0) = g(t,0) = 0 at the sampled times.
  bool vanishes_at_origin(std::span<const double> times) const;

  friend CoefficientSet truncate(const CoefficientSet& coeffs, double radius);

 private:
  std::size_t n_, d_;
  std::vector<expr::Expression> f_, h_, g_;
  Lipschitz tag_;
  std::optional<double> radius_;
};

/// Radially clamped copy: zeta^N(t, x) = zeta(t, N x / |x|) for |x| > N.
CoefficientSet truncate(const CoefficientSet& coeffs, double radius);

/// Increasing positive radii N_1 < N_2 < ...
class TruncationSchedule {
 public:
  explicit TruncationSchedule(std::vector<double> radii);
  /// {2, 4, 8, ..., 2^15}
  static TruncationSchedule doubling();
  const std::vector<double>& radii() const noexcept { return radii_; }

 private:
  std::vector<double> radii_;
};

struct ExitRecord {
  double radius;
  std::optional<std::size_t> exit_step;  // first k with |X_k| >= radius
};

struct SolutionPath {
  TimeGrid grid;
  std::size_t n;
  std::vector<double> x;  // (n_steps + 1) * n, row-major per step
  std::vector<ExitRecord> exits;
  std::optional<double> n0_used;
  std::vector<std::string> diagnostics;

  std::span<const double> state(std::size_t k) const {
    return std::span<const double>(x).subspan(k * n, n);
  }
  std::span<const double> terminal() const { return state(grid.n_steps()); }
};

/// Euler state became NaN/inf at `step`.
class BlowUpError : public std::runtime_error {
 public:
  BlowUpError(std::size_t step, double t);
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Every radius of the schedule was exited before T on this scenario.
class ExplosionError : public std::runtime_error {
 public:
  ExplosionError(std::vector<ExitRecord> exits, std::uint64_t path_index);
  const std::vector<ExitRecord>& exits() const noexcept { return exits_; }

 private:
  std::vector<ExitRecord> exits_;
};

/// One explicit Euler step; `out` may not alias `x`.
void euler_step(const CoefficientSet& coeffs, double t, double dt, std::span<const double> x,
                std::span<const double> db, std::span<const double> dq, std::span<double> out);

/// Euler scheme along a simulated path with left-endpoint sums.
SolutionPath integrate(const CoefficientSet& coeffs, std::span<const double> x0, const GPath& path);

/// First grid index with |X_k| >= radius.
std::optional<std::size_t> exit_step(const SolutionPath& sol, double radius);

/// Runs truncated systems for increasing radii until one is not exited
/// before T, checking that successive solutions agree bit for bit up to the
/// earlier exit step. Throws ExplosionError when the schedule runs out.
SolutionPath solve_localized(const CoefficientSet& coeffs, std::span<const double> x0, const GPath& path,
                             const TruncationSchedule& schedule = TruncationSchedule::doubling());

/// x0 exp(alpha t + (beta - gamma^2/2) <B>_t + gamma B_t) on the path grid (n = d = 1).
SolutionPath closed_form_geometric(double alpha, double beta, double gamma, double x0, const GPath& path);

/// Feedback process integrating the GSDE alongside the simulated path, so
/// policies can switch on the state X.
AuxFactory gsde_aux(const CoefficientSet& coeffs, std::vector<double> x0);

struct SensitivityReport {
  double ratio = 0.0;
  double distance = 0.0;
  double p = 2.0;
  EstimateReport estimate;
};

/// Upper-expectation estimate of sup_t |X^x_t - X^y_t|^p divided by |x - y|^p.
/// Requires globally Lipschitz coefficients; x == y reports ratio 0.
SensitivityReport initial_sensitivity(const CoefficientSet& coeffs, std::span<const double> x,
                                      std::span<const double> y, const std::vector<VolatilityPolicy>& policies,
                                      const MonteCarloSetup& mc, double p = 2.0);

void write_solution_csv(std::ostream& out, const SolutionPath& sol);

/// {"n", "d", "f": [...], "h": [...], "g": [...], "constants": {...}, "lipschitz": "global" | "local"}
/// Missing h or g default to zero.
CoefficientSet coefficient_set_from_json(const ConfigNode& node);

}  // namespace gcalc
