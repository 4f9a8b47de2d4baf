#include "gcalc/lyapunov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "gcalc/parallel.hpp"

namespace gcalc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<expr::Expression> rebind_all(std::vector<expr::Expression> es, const std::vector<std::string>& vars) {
  for (auto& e : es) e = e.rebind(vars);
  return es;
}

double euclid(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

double axis_value(const GridAxis& a, std::size_t i) {
  if (a.count == 1) return a.lo;
  if (i + 1 == a.count) return a.hi;
  return a.lo + (a.hi - a.lo) * static_cast<double>(i) / static_cast<double>(a.count - 1);
}

std::string point_string(double t, std::span<const double> x) {
  return fmt::format("t = {}, x = ({})", t, fmt::join(x, ", "));
}

struct Sample {
  double violation;
  double v;
};

// Evaluates `fn` on every grid point outside the exclusion ball and reduces
// to a report. Excluded points never enter the maximum or the modulus.
template <class Fn>
CheckReport scan_region(const CheckRegion& region, std::size_t n, std::string condition, bool nonneg, Fn&& fn) {
  region.validate(n);
  const std::size_t total = region.raw_size();
  std::vector<double> viol(total, kNaN);
  std::vector<double> vals(total, kNaN);

  std::vector<std::size_t> counts;
  counts.push_back(region.time.count);
  for (const auto& a : region.box) counts.push_back(a.count);

  auto decode = [&](std::size_t index, double& t, std::span<double> x) {
    // last axis varies fastest
    for (std::size_t ax = counts.size(); ax-- > 1;) {
      x[ax - 1] = axis_value(region.box[ax - 1], index % counts[ax]);
      index /= counts[ax];
    }
    t = axis_value(region.time, index);
  };

  parallel_for(total, [&](std::size_t i) {
    std::vector<double> x(n);
    double t = 0.0;
    decode(i, t, x);
    if (region.exclude_r0 > 0.0 && euclid(x) < region.exclude_r0) return;
    const Sample s = fn(t, std::span<const double>(x));
    viol[i] = s.violation;
    vals[i] = s.v;
  });

  CheckReport report;
  report.condition = std::move(condition);
  report.max_violation = -std::numeric_limits<double>::infinity();
  double scale = 0.0;
  double min_v = std::numeric_limits<double>::infinity();
  std::size_t argmax = total;
  std::size_t min_at = total;
  for (std::size_t i = 0; i < total; ++i) {
    if (std::isnan(vals[i])) continue;
    ++report.grid_size;
    scale = std::max(scale, std::abs(vals[i]));
    if (vals[i] < min_v) {
      min_v = vals[i];
      min_at = i;
    }
    if (viol[i] > report.max_violation) {
      report.max_violation = viol[i];
      argmax = i;
    }
  }
  if (report.grid_size == 0) throw std::invalid_argument("check region: every grid point lies in the exclusion ball");

  // neighbour differences along every axis, strides from the fastest axis up
  std::vector<std::size_t> stride(counts.size(), 1);
  for (std::size_t ax = counts.size() - 1; ax-- > 0;) stride[ax] = stride[ax + 1] * counts[ax + 1];
  for (std::size_t i = 0; i < total; ++i) {
    if (std::isnan(viol[i])) continue;
    for (std::size_t ax = 0; ax < counts.size(); ++ax) {
      if ((i / stride[ax]) % counts[ax] + 1 >= counts[ax]) continue;
      const std::size_t j = i + stride[ax];
      if (!std::isnan(viol[j])) report.lipschitz_modulus = std::max(report.lipschitz_modulus, std::abs(viol[j] - viol[i]));
    }
  }

  std::vector<double> x(n);
  decode(argmax, report.argmax_t, x);
  report.argmax_x = x;
  report.tolerance = 1e-9 * (1.0 + scale);
  report.pass = report.max_violation <= report.tolerance;
  report.diagnostics.push_back(
      fmt::format("grid certification only: {} points, neighbouring violations differ by up to {}", report.grid_size,
                  report.lipschitz_modulus));
  if (nonneg && min_v < -report.tolerance) {
    double t = 0.0;
    decode(min_at, t, x);
    report.pass = false;
    report.diagnostics.push_back(fmt::format("V is negative ({}) at {}", min_v, point_string(t, x)));
  }
  return report;
}

}  // namespace

LyapunovSpec::LyapunovSpec(expr::Expression v, std::size_t n, Mode mode, bool nonneg)
    : v_(v.rebind(expr::state_variables(n))), n_(n), mode_(mode), nonneg_(nonneg) {
  if (n == 0) throw std::invalid_argument("LyapunovSpec: n must be positive");
}

LyapunovSpec LyapunovSpec::analytic(expr::Expression v, expr::Expression vt, std::vector<expr::Expression> grad,
                                    std::vector<expr::Expression> hess, bool nonneg) {
  const std::size_t n = grad.size();
  if (hess.size() != n * n)
    throw std::invalid_argument(fmt::format("LyapunovSpec: Hessian needs {} entries, got {}", n * n, hess.size()));
  LyapunovSpec s(std::move(v), n, Mode::Analytic, nonneg);
  const auto vars = expr::state_variables(n);
  s.vt_ = vt.rebind(vars);
  s.grad_ = rebind_all(std::move(grad), vars);
  s.hess_ = rebind_all(std::move(hess), vars);
  return s;
}

LyapunovSpec LyapunovSpec::symbolic(expr::Expression v, std::size_t n, bool nonneg) {
  const auto vars = expr::state_variables(n);
  const expr::Expression bound = v.rebind(vars);
  std::vector<expr::Expression> grad, hess;
  for (std::size_t i = 1; i <= n; ++i) grad.push_back(bound.derivative(vars[i]));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 1; j <= n; ++j) hess.push_back(grad[i].derivative(vars[j]));
  return analytic(bound, bound.derivative("t"), std::move(grad), std::move(hess), nonneg);
}

LyapunovSpec LyapunovSpec::finite_difference(expr::Expression v, std::size_t n, double h, double h_hess,
                                             bool nonneg) {
  if (!(h > 0.0) || !(h_hess > 0.0)) throw std::invalid_argument("LyapunovSpec: finite-difference steps must be positive");
  LyapunovSpec s(std::move(v), n, Mode::FiniteDifference, nonneg);
  s.h_ = h;
  s.h_hess_ = h_hess;
  return s;
}

double LyapunovSpec::value(double t, std::span<const double> x) const {
  std::vector<double> p(n_ + 1);
  p[0] = t;
  std::copy(x.begin(), x.end(), p.begin() + 1);
  return v_.evaluate(p);
}

void LyapunovSpec::derivatives(double t, std::span<const double> x, double& vt, std::span<double> grad,
                               std::span<double> hess) const {
  if (x.size() != n_) throw std::invalid_argument(fmt::format("LyapunovSpec: expected {} coordinates", n_));
  std::vector<double> p(n_ + 1);
  p[0] = t;
  std::copy(x.begin(), x.end(), p.begin() + 1);
  if (mode_ == Mode::Analytic) {
    vt = vt_->evaluate(p);
    for (std::size_t i = 0; i < n_; ++i) grad[i] = grad_[i].evaluate(p);
    for (std::size_t i = 0; i < n_ * n_; ++i) hess[i] = hess_[i].evaluate(p);
  } else {
    vt = expr::differentiate_fd(v_, 0, p, h_ * (1.0 + std::abs(t)));
    for (std::size_t i = 0; i < n_; ++i) grad[i] = expr::differentiate_fd(v_, i + 1, p, h_ * (1.0 + std::abs(x[i])));
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = i; j < n_; ++j) {
        const double step = h_hess_ * (1.0 + std::max(std::abs(x[i]), std::abs(x[j])));
        hess[i * n_ + j] = hess[j * n_ + i] = expr::second_derivative_fd(v_, i + 1, j + 1, p, step);
      }
  }
  bool finite = std::isfinite(vt);
  for (double g : grad) finite = finite && std::isfinite(g);
  for (double h : hess) finite = finite && std::isfinite(h);
  if (!finite) throw expr::EvalError(fmt::format("non-finite derivative of V at {}", point_string(t, x)));
}

void CheckRegion::validate(std::size_t n) const {
  if (box.size() != n) throw std::invalid_argument(fmt::format("check region: box has {} axes, system has {}", box.size(), n));
  if (time.count < 1) throw std::invalid_argument("check region: time count must be at least 1");
  if (time.count > 1 && !(time.lo < time.hi)) throw std::invalid_argument("check region: need t_lo < t_hi");
  for (std::size_t i = 0; i < box.size(); ++i) {
    if (box[i].count < 2) throw std::invalid_argument(fmt::format("check region: axis {} needs count >= 2", i + 1));
    if (!(box[i].lo < box[i].hi)) throw std::invalid_argument(fmt::format("check region: axis {} needs lo < hi", i + 1));
  }
  if (!(exclude_r0 >= 0.0)) throw std::invalid_argument("check region: exclusion radius must be nonnegative");
}

std::size_t CheckRegion::raw_size() const {
  std::size_t total = time.count;
  for (const auto& a : box) total *= a.count;
  return total;
}

bool CheckRegion::contains(std::span<const double> x) const { return excursion(x) == 0.0; }

double CheckRegion::excursion(std::span<const double> x) const {
  double out = 0.0;
  for (std::size_t i = 0; i < box.size() && i < x.size(); ++i)
    out = std::max({out, box[i].lo - x[i], x[i] - box[i].hi});
  return out;
}

double eval_L(const LyapunovSpec& spec, const CoefficientSet& coeffs, const CovarianceSet& set, double t,
              std::span<const double> x) {
  const std::size_t n = coeffs.n();
  const std::size_t d = coeffs.d();
  if (spec.n() != n) throw std::invalid_argument(fmt::format("eval_L: V has {} state variables, system has {}", spec.n(), n));
  if (set.dim() != d) throw std::invalid_argument(fmt::format("eval_L: scenario set has dimension {}, system has d = {}", set.dim(), d));

  double vt = 0.0;
  std::vector<double> grad(n), hess(n * n), f(n), h(n * d * d), g(n * d);
  spec.derivatives(t, x, vt, grad, hess);
  coeffs.evaluate(t, x, f, h, g);

  double out = vt;
  for (std::size_t nu = 0; nu < n; ++nu) out += grad[nu] * f[nu];
  Matrix eta = Matrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double e = 0.0;
      for (std::size_t nu = 0; nu < n; ++nu) e += grad[nu] * (h[(nu * d + i) * d + j] + h[(nu * d + j) * d + i]);
      for (std::size_t mu = 0; mu < n; ++mu)
        for (std::size_t nu = 0; nu < n; ++nu) e += hess[mu * n + nu] * g[mu * d + i] * g[nu * d + j];
      eta(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = e;
    }
  out += g_matrix(set, eta);
  if (!std::isfinite(out)) throw expr::EvalError(fmt::format("LV is not finite at {}", point_string(t, x)));
  return out;
}

CheckReport check_h3(const LyapunovSpec& spec, const CoefficientSet& coeffs, const CovarianceSet& set,
                     const CheckRegion& region, double c_ly) {
  if (!(c_ly >= 0.0)) throw std::invalid_argument("check_h3: C_LY must be nonnegative");
  return scan_region(region, coeffs.n(), fmt::format("h3 (C_LY = {})", c_ly), spec.nonneg(),
                     [&](double t, std::span<const double> x) {
                       const double v = spec.value(t, x);
                       return Sample{eval_L(spec, coeffs, set, t, x) - c_ly * v, v};
                     });
}

ClyEstimate find_cly(const LyapunovSpec& spec, const CoefficientSet& coeffs, const CovarianceSet& set,
                     const CheckRegion& region, double v_min) {
  const CheckReport r = scan_region(region, coeffs.n(), "find_cly", false, [&](double t, std::span<const double> x) {
    const double v = spec.value(t, x);
    if (!(v >= v_min))
      throw std::domain_error(fmt::format("find_cly: V = {} < {} at {}; exclude a ball around it", v, v_min, point_string(t, x)));
    return Sample{eval_L(spec, coeffs, set, t, x) / v, v};
  });
  ClyEstimate out;
  out.raw = r.max_violation;
  out.value = std::max(0.0, r.max_violation);
  out.argmax_t = r.argmax_t;
  out.argmax_x = r.argmax_x;
  out.diagnostics = r.diagnostics;
  if (out.raw < 0.0) out.diagnostics.push_back(fmt::format("raw grid maximum of LV/V is {}; reporting 0", out.raw));
  return out;
}

StabilityCondition stability_condition_from_string(const std::string& name) {
  if (name == "sandwich") return StabilityCondition::Sandwich;
  if (name == "nonpositive") return StabilityCondition::Nonpositive;
  if (name == "exp_stable") return StabilityCondition::ExpStable;
  if (name == "exp_unstable") return StabilityCondition::ExpUnstable;
  throw std::invalid_argument(fmt::format("unknown stability condition '{}'", name));
}

std::string to_string(StabilityCondition which) {
  switch (which) {
    case StabilityCondition::Sandwich: return "sandwich";
    case StabilityCondition::Nonpositive: return "nonpositive";
    case StabilityCondition::ExpStable: return "exp_stable";
    case StabilityCondition::ExpUnstable: return "exp_unstable";
  }
  return "?";
}

CheckReport check_stability_conditions(const LyapunovSpec& spec, const CoefficientSet& coeffs,
                                       const CovarianceSet& set, const CheckRegion& region,
                                       const StabilityParams& params, StabilityCondition which) {
  if (!(params.p > 0.0)) throw std::invalid_argument("stability check: p must be positive");
  if (which == StabilityCondition::Sandwich && !(params.c1 > 0.0 && params.c2 > 0.0))
    throw std::invalid_argument("stability check: c1 and c2 must be positive");
  if ((which == StabilityCondition::ExpStable || which == StabilityCondition::ExpUnstable) && !(params.lambda > 0.0))
    throw std::invalid_argument("stability check: lambda must be positive");

  return scan_region(region, coeffs.n(), to_string(which), spec.nonneg(), [&](double t, std::span<const double> x) {
    const double v = spec.value(t, x);
    switch (which) {
      case StabilityCondition::Sandwich: {
        const double r = std::pow(euclid(x), params.p);
        return Sample{std::max(params.c1 * r - v, v - params.c2 * r), v};
      }
      case StabilityCondition::Nonpositive:
        return Sample{eval_L(spec, coeffs, set, t, x), v};
      case StabilityCondition::ExpStable:
        return Sample{eval_L(spec, coeffs, set, t, x) + params.lambda * v, v};
      case StabilityCondition::ExpUnstable:
        return Sample{params.lambda * v - eval_L(spec, coeffs, set, t, x), v};
    }
    return Sample{kNaN, v};
  });
}

MomentBoundReport verify_moment_bound(const LyapunovSpec& spec, const CoefficientSet& coeffs,
                                      const CovarianceSet& set, const MomentBoundSetup& setup) {
  if (setup.times.empty()) throw std::invalid_argument("verify_moment_bound: no report times");
  if (setup.x0.size() != coeffs.n()) throw std::invalid_argument("verify_moment_bound: x0 has the wrong dimension");
  if (!(setup.dt > 0.0)) throw std::invalid_argument("verify_moment_bound: dt must be positive");
  if (!std::isfinite(setup.c_ly)) throw std::invalid_argument("verify_moment_bound: C_LY must be finite");
  const double t_end = *std::max_element(setup.times.begin(), setup.times.end());
  if (!(t_end > 0.0)) throw std::invalid_argument("verify_moment_bound: need a positive report time");

  const auto n_steps = static_cast<std::size_t>(std::max(1.0, std::round(t_end / setup.dt)));
  const TimeGrid grid(t_end, n_steps);
  std::vector<std::size_t> at;
  for (double t : setup.times) {
    if (t < 0.0) throw std::invalid_argument("verify_moment_bound: negative report time");
    const auto k = static_cast<std::size_t>(std::llround(t / t_end * static_cast<double>(n_steps)));
    if (std::abs(grid.time(k) - t) > 1e-9 * std::max(1.0, t_end))
      throw std::invalid_argument(fmt::format("verify_moment_bound: t = {} is not on the dt grid", t));
    at.push_back(k);
  }

  std::mutex excursion_lock;
  double max_excursion = 0.0;
  const bool local = coeffs.lipschitz() == CoefficientSet::Lipschitz::Local;
  MultiPayoff payoff = [&](const GPath& path) {
    const SolutionPath sol = local ? solve_localized(coeffs, setup.x0, path) : integrate(coeffs, setup.x0, path);
    std::vector<double> out;
    out.reserve(at.size());
    for (std::size_t i = 0; i < at.size(); ++i) out.push_back(spec.value(setup.times[i], sol.state(at[i])));
    if (setup.region) {
      double worst = 0.0;
      for (std::size_t k = 0; k <= n_steps; ++k) worst = std::max(worst, setup.region->excursion(sol.state(k)));
      if (worst > 0.0) {
        std::lock_guard<std::mutex> guard(excursion_lock);
        max_excursion = std::max(max_excursion, worst);
      }
    }
    return out;
  };

  MonteCarloSetup mc{set, grid, setup.n_paths, setup.seed};
  if (setup.feedback) mc.aux = gsde_aux(coeffs, setup.x0);
  const auto reports = estimate_upper_multi(payoff, at.size(), setup.policies, mc);

  MomentBoundReport out;
  out.pass = true;
  const double v0 = spec.value(0.0, setup.x0);
  for (std::size_t i = 0; i < at.size(); ++i) {
    MomentBoundRow row;
    row.t = setup.times[i];
    row.estimate = reports[i].value;
    row.std_error = reports[i].std_error;
    row.bound = std::exp(setup.c_ly * row.t) * v0;
    row.argmax_policy = reports[i].argmax_policy.descriptor();
    row.pass = row.estimate <= row.bound * (1.0 + setup.rel_tol) + 3.0 * row.std_error;
    out.pass = out.pass && row.pass;
    out.rows.push_back(std::move(row));
  }
  if (max_excursion > 0.0) {
    out.region_exceeded = true;
    out.max_excursion = max_excursion;
    out.pass = false;
    out.diagnostics.push_back(fmt::format("region exceeded: simulated states left the certified box by up to {}", max_excursion));
  }
  return out;
}

json check_report_to_json(const CheckReport& report) {
  return {{"condition", report.condition},
          {"verdict", report.pass ? "pass" : "fail"},
          {"max_violation", report.max_violation},
          {"tolerance", report.tolerance},
          {"argmax", {{"t", report.argmax_t}, {"x", report.argmax_x}}},
          {"grid_size", report.grid_size},
          {"lipschitz_modulus", report.lipschitz_modulus},
          {"diagnostics", report.diagnostics}};
}

json moment_report_to_json(const MomentBoundReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"t", r.t},
                    {"estimate", r.estimate},
                    {"std_error", r.std_error},
                    {"bound", r.bound},
                    {"argmax_policy", r.argmax_policy},
                    {"pass", r.pass}});
  json out = {{"verdict", report.pass ? "pass" : "fail"}, {"rows", rows}, {"diagnostics", report.diagnostics}};
  if (report.region_exceeded) out["max_excursion"] = report.max_excursion;
  return out;
}

}  // namespace gcalc
