#include "gcalc/gsde.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <fmt/format.h>

namespace gcalc {
namespace {

constexpr std::size_t kInlineState = 16;

double norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

void check_arity(const std::vector<expr::Expression>& es, std::size_t n, const char* what) {
  const auto vars = expr::state_variables(n);
  for (const auto& e : es)
    for (const auto& v : e.free_variables())
      if (std::find(vars.begin(), vars.end(), v) == vars.end())
        throw std::invalid_argument(fmt::format("CoefficientSet: {} uses '{}' outside (t, x1..x{})", what, v, n));
}

}  // namespace

CoefficientSet::CoefficientSet(std::size_t n, std::size_t d, std::vector<expr::Expression> f,
                               std::vector<expr::Expression> h, std::vector<expr::Expression> g, Lipschitz tag)
    : n_(n), d_(d), f_(std::move(f)), h_(std::move(h)), g_(std::move(g)), tag_(tag) {
  if (n_ < 1 || d_ < 1) throw std::invalid_argument("CoefficientSet: n and d must be at least 1");
  if (f_.size() != n_) throw std::invalid_argument(fmt::format("CoefficientSet: f needs {} entries", n_));
  if (h_.size() != n_ * d_ * d_)
    throw std::invalid_argument(fmt::format("CoefficientSet: h needs {} entries", n_ * d_ * d_));
  if (g_.size() != n_ * d_) throw std::invalid_argument(fmt::format("CoefficientSet: g needs {} entries", n_ * d_));
  check_arity(f_, n_, "f");
  check_arity(h_, n_, "h");
  check_arity(g_, n_, "g");
  const auto vars = expr::state_variables(n_);
  for (auto* group : {&f_, &h_, &g_})
    for (auto& e : *group)
      if (e.variables() != vars) e = e.rebind(vars);
}

CoefficientSet CoefficientSet::parse(std::size_t n, std::size_t d, const std::vector<std::string>& f,
                                     const std::vector<std::string>& h, const std::vector<std::string>& g,
                                     const expr::Expression::Constants& constants, Lipschitz tag) {
  const auto vars = expr::state_variables(n);
  auto parse_all = [&](const std::vector<std::string>& src) {
    std::vector<expr::Expression> out;
    for (const auto& s : src) out.push_back(expr::Expression::parse(s, vars, constants));
    return out;
  };
  return CoefficientSet(n, d, parse_all(f), parse_all(h), parse_all(g), tag);
}

CoefficientSet CoefficientSet::zero(std::size_t n, std::size_t d, Lipschitz tag) {
  const auto vars = expr::state_variables(n);
  auto zeros = [&](std::size_t count) {
    return std::vector<expr::Expression>(count, expr::Expression::constant(0.0, vars));
  };
  return CoefficientSet(n, d, zeros(n), zeros(n * d * d), zeros(n * d), tag);
}

void CoefficientSet::evaluate(double t, std::span<const double> x, std::span<double> f, std::span<double> h,
                              std::span<double> g) const {
  double inline_vars[kInlineState + 1];
  std::vector<double> heap;
  double* vars = inline_vars;
  if (n_ > kInlineState) {
    heap.resize(n_ + 1);
    vars = heap.data();
  }
  vars[0] = t;
  const double r = radius_ ? norm(x) : 0.0;
  if (radius_ && r > *radius_) {
    const double scale = *radius_ / r;
    for (std::size_t i = 0; i < n_; ++i) vars[i + 1] = x[i] * scale;
  } else {
    for (std::size_t i = 0; i < n_; ++i) vars[i + 1] = x[i];
  }
  const std::span<const double> args(vars, n_ + 1);
  for (std::size_t i = 0; i < f_.size(); ++i) f[i] = f_[i].evaluate(args);
  for (std::size_t i = 0; i < h_.size(); ++i) h[i] = h_[i].evaluate(args);
  for (std::size_t i = 0; i < g_.size(); ++i) g[i] = g_[i].evaluate(args);
}

bool CoefficientSet::vanishes_at_origin(std::span<const double> times) const {
  std::vector<double> zero(n_, 0.0), f(n_), h(n_ * d_ * d_), g(n_ * d_);
  for (double t : times) {
    evaluate(t, zero, f, h, g);
    auto nonzero = [](double v) { return v != 0.0; };
    if (std::any_of(f.begin(), f.end(), nonzero) || std::any_of(h.begin(), h.end(), nonzero) ||
        std::any_of(g.begin(), g.end(), nonzero))
      return false;
  }
  return true;
}

CoefficientSet truncate(const CoefficientSet& coeffs, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("truncate: radius must be positive");
  CoefficientSet out = coeffs;
  out.radius_ = radius;
  return out;
}

TruncationSchedule::TruncationSchedule(std::vector<double> radii) : radii_(std::move(radii)) {
  if (radii_.empty()) throw std::invalid_argument("TruncationSchedule: no radii");
  for (std::size_t i = 0; i < radii_.size(); ++i) {
    if (!(radii_[i] > 0.0)) throw std::invalid_argument("TruncationSchedule: radii must be positive");
    if (i > 0 && !(radii_[i] > radii_[i - 1]))
      throw std::invalid_argument("TruncationSchedule: radii must be strictly increasing");
  }
}

TruncationSchedule TruncationSchedule::doubling() {
  std::vector<double> radii;
  for (int k = 1; k <= 15; ++k) radii.push_back(std::ldexp(1.0, k));
  return TruncationSchedule(std::move(radii));
}

BlowUpError::BlowUpError(std::size_t step, double t)
    : std::runtime_error(fmt::format("GSDE state became non-finite at step {} (t = {}); the truncation radius "
                                     "may be too large for this step size",
                                     step, t)),
      step_(step) {}

namespace {
std::string describe_exits(const std::vector<ExitRecord>& exits) {
  std::string s;
  for (const auto& e : exits) {
    if (!s.empty()) s += ", ";
    s += e.exit_step ? fmt::format("N={} exits at step {}", e.radius, *e.exit_step)
                     : fmt::format("N={} no exit", e.radius);
  }
  return s;
}
}  // namespace

ExplosionError::ExplosionError(std::vector<ExitRecord> exits, std::uint64_t path_index)
    : std::runtime_error(fmt::format("possible explosion on this scenario (path {}): {}", path_index,
                                     describe_exits(exits))),
      exits_(std::move(exits)) {}

void euler_step(const CoefficientSet& coeffs, double t, double dt, std::span<const double> x,
                std::span<const double> db, std::span<const double> dq, std::span<double> out) {
  const std::size_t n = coeffs.n();
  const std::size_t d = coeffs.d();
  double fbuf[kInlineState], hbuf[kInlineState * 4], gbuf[kInlineState * 2];
  std::vector<double> fh, hh, gh;
  std::span<double> f(fbuf, n), h, g;
  if (n <= kInlineState && n * d * d <= kInlineState * 4 && n * d <= kInlineState * 2) {
    h = std::span<double>(hbuf, n * d * d);
    g = std::span<double>(gbuf, n * d);
  } else {
    fh.resize(n);
    hh.resize(n * d * d);
    gh.resize(n * d);
    f = fh;
    h = hh;
    g = gh;
  }
  coeffs.evaluate(t, x, f, h, g);
  for (std::size_t nu = 0; nu < n; ++nu) {
    double acc = x[nu] + f[nu] * dt;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) acc += h[(nu * d + i) * d + j] * dq[i * d + j];
    for (std::size_t j = 0; j < d; ++j) acc += g[nu * d + j] * db[j];
    out[nu] = acc;
  }
}

SolutionPath integrate(const CoefficientSet& coeffs, std::span<const double> x0, const GPath& path) {
  const std::size_t n = coeffs.n();
  const std::size_t d = coeffs.d();
  if (x0.size() != n) throw std::invalid_argument(fmt::format("integrate: x0 has {} entries, need {}", x0.size(), n));
  if (path.dim() != d)
    throw std::invalid_argument(fmt::format("integrate: path dimension {} differs from d = {}", path.dim(), d));

  const TimeGrid& grid = path.grid();
  SolutionPath sol{grid, n, std::vector<double>((grid.n_steps() + 1) * n), {}, std::nullopt, {}};
  std::copy(x0.begin(), x0.end(), sol.x.begin());
  std::vector<double> db(d), dq(d * d);
  for (std::size_t k = 0; k < grid.n_steps(); ++k) {
    const auto b0 = path.b(k), b1 = path.b(k + 1);
    const auto q0 = path.qvar(k), q1 = path.qvar(k + 1);
    for (std::size_t j = 0; j < d; ++j) db[j] = b1[j] - b0[j];
    for (std::size_t j = 0; j < d * d; ++j) dq[j] = q1[j] - q0[j];
    const std::span<const double> xk(sol.x.data() + k * n, n);
    const std::span<double> xk1(sol.x.data() + (k + 1) * n, n);
    euler_step(coeffs, grid.time(k), grid.dt(), xk, db, dq, xk1);
    for (double v : xk1)
      if (!std::isfinite(v)) throw BlowUpError(k + 1, grid.time(k + 1));
  }
  return sol;
}

std::optional<std::size_t> exit_step(const SolutionPath& sol, double radius) {
  for (std::size_t k = 0; k <= sol.grid.n_steps(); ++k)
    if (norm(sol.state(k)) >= radius) return k;
  return std::nullopt;
}

SolutionPath solve_localized(const CoefficientSet& coeffs, std::span<const double> x0, const GPath& path,
                             const TruncationSchedule& schedule) {
  std::vector<ExitRecord> exits;
  std::optional<SolutionPath> previous;
  std::optional<std::size_t> previous_exit;
  for (double radius : schedule.radii()) {
    SolutionPath sol = integrate(truncate(coeffs, radius), x0, path);
    const std::optional<std::size_t> tau = exit_step(sol, radius);
    if (previous_exit && tau && *tau < *previous_exit)
      throw std::logic_error(fmt::format("solve_localized: exit time decreased at radius {}", radius));
    if (previous) {
      // Both clamps are inactive up to the earlier exit, so the arithmetic is identical.
      const std::size_t upto = (*previous_exit + 1) * sol.n;
      if (std::memcmp(sol.x.data(), previous->x.data(), upto * sizeof(double)) != 0)
        throw std::logic_error(
            fmt::format("solve_localized: radius {} solution differs before the previous exit step", radius));
    }
    exits.push_back(ExitRecord{radius, tau});
    if (!tau) {
      sol.exits = std::move(exits);
      sol.n0_used = radius;
      return sol;
    }
    previous = std::move(sol);
    previous_exit = tau;
  }
  throw ExplosionError(std::move(exits), path.path_index());
}

SolutionPath closed_form_geometric(double alpha, double beta, double gamma, double x0, const GPath& path) {
  if (path.dim() != 1) throw std::invalid_argument("closed_form_geometric: requires d = 1");
  const TimeGrid& grid = path.grid();
  SolutionPath sol{grid, 1, std::vector<double>(grid.n_steps() + 1), {}, std::nullopt, {}};
  for (std::size_t k = 0; k <= grid.n_steps(); ++k) {
    const double t = grid.time(k);
    sol.x[k] = x0 * std::exp(alpha * t + (beta - 0.5 * gamma * gamma) * path.qvar(k)[0] + gamma * path.b(k)[0]);
  }
  return sol;
}

namespace {

class GsdeAux final : public AuxProcess {
 public:
  GsdeAux(std::shared_ptr<const CoefficientSet> coeffs, const std::vector<double>& x0)
      : coeffs_(std::move(coeffs)), x_(x0), next_(x0.size()) {}
  std::span<const double> state() const override { return x_; }
  void advance(std::size_t k, double t, double dt, std::span<const double> db,
               std::span<const double> dq) override {
    euler_step(*coeffs_, t, dt, x_, db, dq, next_);
    for (double v : next_)
      if (!std::isfinite(v)) throw BlowUpError(k + 1, t + dt);
    x_.swap(next_);
  }

 private:
  std::shared_ptr<const CoefficientSet> coeffs_;
  std::vector<double> x_, next_;
};

}  // namespace

AuxFactory gsde_aux(const CoefficientSet& coeffs, std::vector<double> x0) {
  if (x0.size() != coeffs.n()) throw std::invalid_argument("gsde_aux: x0 has the wrong dimension");
  auto shared = std::make_shared<const CoefficientSet>(coeffs);
  return [shared, x0 = std::move(x0)]() -> std::unique_ptr<AuxProcess> {
    return std::make_unique<GsdeAux>(shared, x0);
  };
}

SensitivityReport initial_sensitivity(const CoefficientSet& coeffs, std::span<const double> x,
                                      std::span<const double> y, const std::vector<VolatilityPolicy>& policies,
                                      const MonteCarloSetup& mc, double p) {
  if (coeffs.lipschitz() != CoefficientSet::Lipschitz::Global)
    throw std::invalid_argument("initial_sensitivity: coefficients must be tagged globally Lipschitz");
  if (!(p > 0.0)) throw std::invalid_argument("initial_sensitivity: p must be positive");
  if (x.size() != coeffs.n() || y.size() != coeffs.n())
    throw std::invalid_argument("initial_sensitivity: initial states have the wrong dimension");
  double dist2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) dist2 += (x[i] - y[i]) * (x[i] - y[i]);
  SensitivityReport report;
  report.p = p;
  report.distance = std::sqrt(dist2);
  if (report.distance == 0.0) return report;

  const std::vector<double> xs(x.begin(), x.end()), ys(y.begin(), y.end());
  Payoff payoff = [&](const GPath& path) {
    const SolutionPath a = integrate(coeffs, xs, path);
    const SolutionPath b = integrate(coeffs, ys, path);
    double worst = 0.0;
    for (std::size_t k = 0; k <= path.n_steps(); ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < coeffs.n(); ++i) {
        const double e = a.state(k)[i] - b.state(k)[i];
        s += e * e;
      }
      worst = std::max(worst, std::pow(std::sqrt(s), p));
    }
    return worst;
  };
  report.estimate = estimate_upper(payoff, policies, mc);
  report.ratio = report.estimate.value / std::pow(report.distance, p);
  return report;
}

void write_solution_csv(std::ostream& out, const SolutionPath& sol) {
  out << "t";
  for (std::size_t i = 1; i <= sol.n; ++i) out << ",x" << i;
  out << "\n";
  for (std::size_t k = 0; k <= sol.grid.n_steps(); ++k) {
    out << fmt::format("{}", sol.grid.time(k));
    for (double v : sol.state(k)) out << fmt::format(",{}", v);
    out << "\n";
  }
}

namespace {

std::vector<expr::Expression> parse_list(const ConfigNode& parent, const char* key, std::size_t count,
                                         const std::vector<std::string>& vars,
                                         const expr::Expression::Constants& constants) {
  std::vector<expr::Expression> out;
  if (!parent.has(key)) {
    for (std::size_t i = 0; i < count; ++i) out.push_back(expr::Expression::constant(0.0, vars));
    return out;
  }
  const ConfigNode list = parent.at(key);
  if (list.size() != count) list.fail(fmt::format("expected {} expressions, got {}", count, list.size()));
  for (std::size_t i = 0; i < count; ++i) {
    const ConfigNode item = list.at(i);
    try {
      out.push_back(expr::Expression::parse(item.string(), vars, constants));
    } catch (const expr::ParseError& e) {
      item.fail(e.what());
    }
  }
  return out;
}

}  // namespace

CoefficientSet coefficient_set_from_json(const ConfigNode& node) {
  const std::int64_t n = node.at("n").integer();
  const std::int64_t d = node.integer_or("d", 1);
  if (n < 1) node.at("n").fail("must be at least 1");
  if (d < 1) node.at("d").fail("must be at least 1");
  const auto nn = static_cast<std::size_t>(n);
  const auto dd = static_cast<std::size_t>(d);

  expr::Expression::Constants constants;
  if (node.has("constants"))
    for (const auto& [name, value] : node.at("constants").number_table()) constants.emplace(name, value);

  const std::string tag = node.string_or("lipschitz", "local");
  if (tag != "global" && tag != "local") node.at("lipschitz").fail("expected \"global\" or \"local\"");

  const auto vars = expr::state_variables(nn);
  auto f = parse_list(node, "f", nn, vars, constants);
  auto h = parse_list(node, "h", nn * dd * dd, vars, constants);
  auto g = parse_list(node, "g", nn * dd, vars, constants);
  return CoefficientSet(nn, dd, std::move(f), std::move(h), std::move(g),
                        tag == "global" ? CoefficientSet::Lipschitz::Global : CoefficientSet::Lipschitz::Local);
}

}  // namespace gcalc
