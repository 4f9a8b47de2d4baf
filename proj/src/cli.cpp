#include "gcalc/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "gcalc/experiments.hpp"
#include "gcalc/gheat.hpp"
#include "gcalc/gsde.hpp"
#include "gcalc/linstab.hpp"
#include "gcalc/lyapunov.hpp"
#include "gcalc/parallel.hpp"
#include "gcalc/upper_expectation.hpp"

namespace gcalc::cli {

namespace {

struct Options {
  std::string config;
  std::string out;
  std::string format;
  std::string plot;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  bool force = false;
};

struct TidyRow {
  std::string series;
  double x;
  double y;
};

// Everything a subcommand needs; it writes its result into `result` and
// optional long-format plot rows into `tidy`.
struct Context {
  std::string subcommand;
  const Options& opt;
  json config;
  std::string hash;
  std::ostringstream result;
  std::vector<TidyRow> tidy;
  std::ostream& err;

  ConfigNode root() const { return ConfigNode(config); }
  bool json_out(const char* fallback) const { return (opt.format.empty() ? fallback : opt.format) == std::string("json"); }
  RunInfo info() const { return RunInfo{hash, opt.seed, GCALC_VERSION}; }
  json meta() const {
    return {{"subcommand", subcommand}, {"config_hash", hash}, {"seed", opt.seed}, {"version", GCALC_VERSION}};
  }
  void emit_json(json body) {
    body["meta"] = meta();
    result << body.dump(2) << "\n";
  }
};

// --- config helpers -------------------------------------------------------

CovarianceSet set_from(const ConfigNode& node) {
  const ConfigNode src = node.has("set") ? node.at("set") : node;
  if (!src.has("band") && !src.has("members")) node.fail("need a 'band' or a 'set' of covariance members");
  return covariance_set_from_json(src);
}

SigmaBand band_from(const ConfigNode& node) {
  const ConfigNode b = node.at("band");
  const std::vector<double> v = b.numbers();
  if (v.size() != 2) b.fail("expected [sigma2_lo, sigma2_hi]");
  try {
    return SigmaBand(v[0], v[1]);
  } catch (const std::invalid_argument& e) {
    b.fail(e.what());
  }
}

std::size_t positive_count(const ConfigNode& node, std::string_view key, std::int64_t fallback) {
  const std::int64_t v = node.integer_or(key, fallback);
  if (v < 1) node.at(key).fail("must be at least 1");
  return static_cast<std::size_t>(v);
}

std::size_t member_index(const ConfigNode& node, const CovarianceSet& set) {
  const std::int64_t m = node.integer();
  if (m < 0 || static_cast<std::size_t>(m) >= set.size())
    node.fail(fmt::format("member index {} outside 0..{}", m, set.size() - 1));
  return static_cast<std::size_t>(m);
}

VolatilityPolicy policy_from_json(const ConfigNode& node, const CovarianceSet& set) {
  const std::string kind = node.at("kind").string();
  VolatilityPolicy policy = VolatilityPolicy::constant_member(0);
  if (kind == "constant") {
    if (node.has("member")) policy = VolatilityPolicy::constant_member(member_index(node.at("member"), set));
    else if (node.has("variance")) policy = VolatilityPolicy::constant_variance(node.at("variance").number());
    else node.fail("constant policy needs 'member' or 'variance'");
  } else if (kind == "piecewise") {
    const ConfigNode sched = node.at("schedule");
    std::vector<std::pair<std::size_t, std::size_t>> s;
    for (std::size_t i = 0; i < sched.size(); ++i) {
      const ConfigNode entry = sched.at(i);
      if (entry.size() != 2) entry.fail("expected [first_step, member]");
      const std::int64_t step = entry.at(std::size_t{0}).integer();
      if (step < 0) entry.at(std::size_t{0}).fail("must be nonnegative");
      s.emplace_back(static_cast<std::size_t>(step), member_index(entry.at(1), set));
    }
    try {
      policy = VolatilityPolicy::piecewise(std::move(s));
    } catch (const std::invalid_argument& e) {
      sched.fail(e.what());
    }
  } else if (kind == "threshold") {
    const std::int64_t component = node.integer_or("component", 0);
    if (component < 0 || static_cast<std::size_t>(component) >= set.dim()) node.at("component").fail("out of range");
    policy = VolatilityPolicy::threshold(node.at("threshold").number(), member_index(node.at("above"), set),
                                         member_index(node.at("below"), set), static_cast<std::size_t>(component));
  } else {
    node.at("kind").fail(fmt::format("unknown policy '{}' (constant, piecewise, threshold)", kind));
  }
  try {
    policy.validate(set);
  } catch (const std::invalid_argument& e) {
    node.fail(e.what());
  }
  return policy;
}

TimeGrid grid_from(const ConfigNode& node) {
  const double t_end = node.at("T").number();
  if (!(t_end > 0.0)) node.at("T").fail("must be positive");
  return TimeGrid(t_end, positive_count(node, "n_steps", 100));
}

expr::Expression parse_expression(const ConfigNode& node, std::vector<std::string> vars,
                                  const expr::Expression::Constants& constants = {}) {
  try {
    return expr::Expression::parse(node.string(), std::move(vars), constants);
  } catch (const expr::ParseError& e) {
    node.fail(e.what());
  }
}

void write_header_comments(std::ostream& os, const Context& ctx, const std::string& title) {
  write_header_block(os, ctx.info(), title);
}

// --- subcommands ----------------------------------------------------------

int cmd_simulate(Context& ctx) {
  const ConfigNode root = ctx.root();
  const CovarianceSet set = set_from(root);
  const TimeGrid grid = grid_from(root);
  const VolatilityPolicy policy = policy_from_json(root.at("policy"), set);
  const std::int64_t index = root.integer_or("path_index", 0);
  if (index < 0) root.at("path_index").fail("must be nonnegative");
  const GPath path = simulate(policy, set, grid, ctx.opt.seed, static_cast<std::uint64_t>(index));

  const std::size_t d = set.dim();
  for (std::size_t k = 0; k <= grid.n_steps(); ++k)
    for (std::size_t i = 0; i < d; ++i) {
      ctx.tidy.push_back({fmt::format("b_{}", i + 1), grid.time(k), path.b(k)[i]});
      ctx.tidy.push_back({fmt::format("qvar_{}{}", i + 1, i + 1), grid.time(k), path.qvar(k)[i * d + i]});
    }

  if (ctx.json_out("csv")) {
    json t = json::array(), b = json::array(), q = json::array(), choice = json::array();
    for (std::size_t k = 0; k <= grid.n_steps(); ++k) {
      t.push_back(grid.time(k));
      b.push_back(std::vector<double>(path.b(k).begin(), path.b(k).end()));
      q.push_back(std::vector<double>(path.qvar(k).begin(), path.qvar(k).end()));
      choice.push_back(k < grid.n_steps() ? path.member(k) : -1);
    }
    ctx.emit_json({{"policy", policy.descriptor()}, {"t", t}, {"b", b}, {"qvar", q}, {"policy_choice", choice}});
  } else {
    write_header_comments(ctx.result, ctx, "simulate");
    ctx.result << "# policy: " << policy.descriptor() << "\n";
    write_path_csv(ctx.result, path);
  }
  return kOk;
}

int cmd_upper(Context& ctx) {
  const ConfigNode root = ctx.root();
  const CovarianceSet set = set_from(root);
  const TimeGrid grid = grid_from(root);
  const std::size_t n_paths = positive_count(root, "n_paths", 10000);
  if (n_paths < 2) root.at("n_paths").fail("must be at least 2");

  const std::size_t d = set.dim();
  std::vector<std::string> vars;
  for (std::size_t i = 1; i <= d; ++i) vars.push_back(fmt::format("b{}", i));
  for (std::size_t i = 1; i <= d; ++i)
    for (std::size_t j = 1; j <= d; ++j) vars.push_back(fmt::format("q{}{}", i, j));
  expr::Expression::Constants constants;
  if (root.has("constants"))
    for (const auto& [k, v] : root.at("constants").number_table()) constants.emplace(k, v);
  const expr::Expression phi = parse_expression(root.at("payoff"), vars, constants);

  const Payoff payoff = [&](const GPath& path) {
    std::vector<double> args(vars.size());
    const auto b = path.b(path.n_steps());
    const auto q = path.qvar(path.n_steps());
    std::copy(b.begin(), b.end(), args.begin());
    std::copy(q.begin(), q.end(), args.begin() + static_cast<std::ptrdiff_t>(d));
    return phi.evaluate(args);
  };

  MonteCarloSetup mc{set, grid, n_paths, ctx.opt.seed};
  EstimateReport report;
  if (root.has("thresholds")) {
    const std::vector<double> th = root.at("thresholds").numbers();
    if (th.empty()) root.at("thresholds").fail("threshold grid is empty");
    if (!set.band()) root.at("thresholds").fail("bang-bang search needs a one-dimensional band");
    report = optimize_bangbang(payoff, th, mc);
  } else {
    const PolicyFamily family = root.has("family") ? policy_family_from_json(root.at("family")) : PolicyFamily::extreme_constants();
    report = estimate_upper(payoff, family, mc);
  }
  for (std::size_t i = 0; i < report.table.size(); ++i)
    ctx.tidy.push_back({report.table[i].descriptor, static_cast<double>(i), report.table[i].mean});

  if (ctx.json_out("json")) {
    ctx.emit_json({{"report", report_to_json(report)}});
  } else {
    write_header_comments(ctx.result, ctx, "upper expectation");
    ctx.result << fmt::format("# value: {}\n# std_error: {}\n# argmax_policy: {}\n", report.value, report.std_error,
                              report.argmax_policy.descriptor());
    ctx.result << "descriptor,mean,se\n";
    for (const auto& row : report.table) ctx.result << fmt::format("\"{}\",{},{}\n", row.descriptor, row.mean, row.std_error);
  }
  return kOk;
}

int cmd_gheat(Context& ctx) {
  const ConfigNode root = ctx.root();
  const SigmaBand band = band_from(root);
  const double t_end = root.at("T").number();
  if (!(t_end > 0.0)) root.at("T").fail("must be positive");
  const expr::Expression phi = parse_expression(root.at("payoff"), {"x"});
  const std::size_t nx = positive_count(root, "nx", 401);

  double lo, hi;
  if (root.has("x_range")) {
    const std::vector<double> r = root.at("x_range").numbers();
    if (r.size() != 2 || !(r[0] < r[1])) root.at("x_range").fail("expected [lo, hi] with lo < hi");
    lo = r[0];
    hi = r[1];
  } else {
    const double half = padded_half_width(band, t_end, root.number_or("reach", 0.0));
    lo = -half;
    hi = half;
  }
  const std::size_t nt = root.has("nt") ? positive_count(root, "nt", 1) : SpaceTimeGrid::min_steps(lo, hi, nx, t_end, band);
  const SpaceTimeGrid grid(lo, hi, nx, t_end, nt);
  const TerminalPayoff payoff{[&](double x) { return phi(std::span<const double>(&x, 1)); }};
  const ValueFunction v = solve_terminal(band, payoff, grid);
  const bool has_origin = lo <= 0.0 && 0.0 <= hi;
  for (std::size_t i = 0; i < v.x.size(); ++i) ctx.tidy.push_back({"u", v.x[i], v.u[i]});

  if (ctx.json_out("csv")) {
    json body = {{"x", v.x}, {"u", v.u}, {"nt", nt}};
    if (has_origin) body["u_at_0"] = v.at(0.0);
    ctx.emit_json(body);
  } else {
    write_header_comments(ctx.result, ctx, "gheat");
    ctx.result << fmt::format("# grid: x in [{}, {}], nx = {}, nt = {}\n", lo, hi, nx, nt);
    if (has_origin) ctx.result << fmt::format("# u(0,0): {}\n", v.at(0.0));
    write_value_csv(ctx.result, v);
  }
  return kOk;
}

int cmd_gsde(Context& ctx) {
  const ConfigNode root = ctx.root();
  const CoefficientSet coeffs = coefficient_set_from_json(root.at("system"));
  const CovarianceSet set = set_from(root);
  if (set.dim() != coeffs.d()) root.fail(fmt::format("scenario set has dimension {}, system has d = {}", set.dim(), coeffs.d()));
  const std::vector<double> x0 = root.at("x0").numbers();
  if (x0.size() != coeffs.n()) root.at("x0").fail(fmt::format("expected {} entries", coeffs.n()));
  const TimeGrid grid = grid_from(root);
  const VolatilityPolicy policy = policy_from_json(root.at("policy"), set);
  const std::int64_t index = root.integer_or("path_index", 0);
  if (index < 0) root.at("path_index").fail("must be nonnegative");
  const GPath path = simulate(policy, set, grid, ctx.opt.seed, static_cast<std::uint64_t>(index));
  const bool localize = root.boolean_or("localize", coeffs.lipschitz() == CoefficientSet::Lipschitz::Local);

  SolutionPath sol = [&] {
    try {
      return localize ? solve_localized(coeffs, x0, path) : integrate(coeffs, x0, path);
    } catch (const ExplosionError& e) {
      ctx.err << "gcalc: " << e.what() << "\n";
      throw;
    }
  }();
  for (std::size_t k = 0; k <= grid.n_steps(); ++k)
    for (std::size_t i = 0; i < sol.n; ++i) ctx.tidy.push_back({fmt::format("x{}", i + 1), grid.time(k), sol.state(k)[i]});

  if (ctx.json_out("csv")) {
    json t = json::array(), x = json::array();
    for (std::size_t k = 0; k <= grid.n_steps(); ++k) {
      t.push_back(grid.time(k));
      x.push_back(std::vector<double>(sol.state(k).begin(), sol.state(k).end()));
    }
    json body = {{"policy", policy.descriptor()}, {"t", t}, {"x", x}, {"diagnostics", sol.diagnostics}};
    if (sol.n0_used) body["radius_used"] = *sol.n0_used;
    ctx.emit_json(body);
  } else {
    write_header_comments(ctx.result, ctx, "gsde");
    ctx.result << "# policy: " << policy.descriptor() << "\n";
    if (sol.n0_used) ctx.result << fmt::format("# truncation radius used: {}\n", *sol.n0_used);
    for (const auto& d : sol.diagnostics) ctx.result << "# " << d << "\n";
    write_solution_csv(ctx.result, sol);
  }
  return kOk;
}

GridAxis axis_from(const ConfigNode& node, bool time) {
  const std::vector<double> v = node.numbers();
  if (v.size() == 2 && time) {
    if (!(v[0] <= v[1])) node.fail("expected [lo, hi] with lo <= hi");
    return GridAxis{v[0], v[1], v[0] < v[1] ? std::size_t{5} : std::size_t{1}};
  }
  if (v.size() != 3) node.fail(time ? "expected [lo, hi] or [lo, hi, count]" : "expected [lo, hi, count]");
  if (!(v[2] >= 1.0) || v[2] != std::floor(v[2])) node.fail("count must be a positive integer");
  return GridAxis{v[0], v[1], static_cast<std::size_t>(v[2])};
}

CheckRegion region_from(const ConfigNode& node, std::size_t n) {
  CheckRegion region;
  if (node.has("t")) region.time = axis_from(node.at("t"), true);
  const ConfigNode box = node.at("box");
  for (std::size_t i = 0; i < box.size(); ++i) region.box.push_back(axis_from(box.at(i), false));
  region.exclude_r0 = node.number_or("exclude_r0", 0.0);
  try {
    region.validate(n);
  } catch (const std::invalid_argument& e) {
    node.fail(e.what());
  }
  return region;
}

LyapunovSpec lyapunov_spec_from(const ConfigNode& root, std::size_t n, const expr::Expression::Constants& constants) {
  const auto vars = expr::state_variables(n);
  const expr::Expression v = parse_expression(root.at("V"), vars, constants);
  const bool nonneg = root.boolean_or("nonneg", true);
  const std::string mode = root.string_or("mode", "analytic");
  if (mode == "finite_difference") {
    const double h = root.number_or("h_fd", 1e-5);
    const double hh = root.number_or("h_fd_hessian", 1e-4);
    if (!(h > 0.0)) root.at("h_fd").fail("must be positive");
    if (!(hh > 0.0)) root.at("h_fd_hessian").fail("must be positive");
    return LyapunovSpec::finite_difference(v, n, h, hh, nonneg);
  }
  if (mode != "analytic") root.at("mode").fail("expected \"analytic\" or \"finite_difference\"");
  if (!root.has("grad")) {
    try {
      return LyapunovSpec::symbolic(v, n, nonneg);
    } catch (const std::domain_error& e) {
      root.at("V").fail(fmt::format("cannot differentiate symbolically ({}); supply grad/hess or use finite_difference", e.what()));
    }
  }
  const ConfigNode grad = root.at("grad");
  const ConfigNode hess = root.at("hess");
  if (grad.size() != n) grad.fail(fmt::format("expected {} expressions", n));
  if (hess.size() != n * n) hess.fail(fmt::format("expected {} expressions (row-major)", n * n));
  std::vector<expr::Expression> g, h;
  for (std::size_t i = 0; i < n; ++i) g.push_back(parse_expression(grad.at(i), vars, constants));
  for (std::size_t i = 0; i < n * n; ++i) h.push_back(parse_expression(hess.at(i), vars, constants));
  const expr::Expression vt = root.has("Vt") ? parse_expression(root.at("Vt"), vars, constants)
                                             : expr::Expression::constant(0.0, vars);
  return LyapunovSpec::analytic(v, vt, std::move(g), std::move(h), nonneg);
}

int cmd_lyapunov(Context& ctx) {
  const ConfigNode root = ctx.root();
  const ConfigNode sys = root.at("system");
  const CoefficientSet coeffs = coefficient_set_from_json(sys);
  const CovarianceSet set = set_from(root);
  if (set.dim() != coeffs.d()) root.fail(fmt::format("scenario set has dimension {}, system has d = {}", set.dim(), coeffs.d()));

  expr::Expression::Constants constants;
  if (sys.has("constants"))
    for (const auto& [k, v] : sys.at("constants").number_table()) constants.emplace(k, v);
  if (root.has("constants"))
    for (const auto& [k, v] : root.at("constants").number_table()) constants.insert_or_assign(k, v);
  const LyapunovSpec spec = lyapunov_spec_from(root, coeffs.n(), constants);

  const std::string condition = root.at("condition").string();
  const ConfigNode params = root.has("params") ? root.at("params") : root;
  json report;
  bool pass = true;

  if (condition == "moment_bound") {
    const ConfigNode m = root.at("moment");
    MomentBoundSetup setup;
    setup.x0 = m.at("x0").numbers();
    if (setup.x0.size() != coeffs.n()) m.at("x0").fail(fmt::format("expected {} entries", coeffs.n()));
    setup.times = m.at("times").numbers();
    setup.dt = m.number_or("dt", 1e-2);
    setup.n_paths = positive_count(m, "n_paths", 1000);
    setup.seed = ctx.opt.seed;
    setup.c_ly = params.at("C_LY").number();
    setup.feedback = m.boolean_or("feedback", false);
    const PolicyFamily family = m.has("family") ? policy_family_from_json(m.at("family")) : PolicyFamily::extreme_constants();
    setup.policies = family.policies(set);
    if (root.has("region")) setup.region = region_from(root.at("region"), coeffs.n());
    const MomentBoundReport r = verify_moment_bound(spec, coeffs, set, setup);
    for (const auto& row : r.rows) {
      ctx.tidy.push_back({"estimate", row.t, row.estimate});
      ctx.tidy.push_back({"bound", row.t, row.bound});
    }
    report = moment_report_to_json(r);
    pass = r.pass;
  } else {
    const CheckRegion region = region_from(root.at("region"), coeffs.n());
    if (condition == "h3") {
      const CheckReport r = check_h3(spec, coeffs, set, region, params.at("C_LY").number());
      report = check_report_to_json(r);
      pass = r.pass;
    } else if (condition == "find_cly") {
      const ClyEstimate c = find_cly(spec, coeffs, set, region, params.number_or("v_min", 1e-8));
      report = {{"condition", "find_cly"},
                {"C_LY", c.value},
                {"raw", c.raw},
                {"argmax", {{"t", c.argmax_t}, {"x", c.argmax_x}}},
                {"diagnostics", c.diagnostics}};
    } else {
      StabilityCondition which;
      try {
        which = stability_condition_from_string(condition);
      } catch (const std::invalid_argument&) {
        root.at("condition").fail(fmt::format(
            "unknown condition '{}' (h3, find_cly, moment_bound, sandwich, nonpositive, exp_stable, exp_unstable)",
            condition));
      }
      StabilityParams sp;
      sp.p = params.number_or("p", sp.p);
      sp.c1 = params.number_or("c1", sp.c1);
      sp.c2 = params.number_or("c2", sp.c2);
      sp.lambda = params.number_or("lambda", sp.lambda);
      const CheckReport r = check_stability_conditions(spec, coeffs, set, region, sp, which);
      report = check_report_to_json(r);
      pass = r.pass;
    }
  }

  if (ctx.json_out("json")) {
    ctx.emit_json({{"report", report}});
  } else {
    write_header_comments(ctx.result, ctx, "lyapunov");
    ctx.result << "key,value\n";
    for (const auto& [k, v] : report.items())
      if (v.is_primitive()) ctx.result << k << "," << v.dump() << "\n";
  }
  if (!pass) ctx.err << "gcalc: lyapunov condition '" << condition << "' failed\n";
  return pass ? kOk : kCheckFailed;
}

Matrix matrix_from(const ConfigNode& node, std::size_t n) {
  const std::vector<double> v = node.numbers();
  if (v.size() != n * n) node.fail(fmt::format("expected {} row-major entries", n * n));
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[i * n + j];
  return m;
}

int cmd_linstab(Context& ctx) {
  const ConfigNode root = ctx.root();
  const std::string mode = root.string_or("mode", "stable");
  json body;
  bool pass = true;

  if (mode == "p_range") {
    const PRange r = corollary_p_range(root.at("alpha1").number(), root.number_or("alpha2", 0.0), root.at("alpha3").number());
    body = {{"empty", r.empty}, {"case", std::string(1, r.which_case)}, {"reason", r.reason}};
    if (!r.empty) body["interval"] = {r.lo, r.hi};
    pass = !r.empty;
  } else {
    const LinearGSystem sys = linear_system_from_json(root);
    const std::size_t n = sys.n();
    std::optional<Matrix> p;
    if (root.has("P")) p = matrix_from(root.at("P"), n);
    auto checked = [&](auto&& fn) {
      try {
        return fn();
      } catch (const std::invalid_argument& e) {
        root.at("P").fail(e.what());
      }
    };
    const Matrix p_or_i = p.value_or(Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)));
    if (mode == "stable") {
      const Certificate cert = checked([&] {
        if (p) return lmi_stable(sys, *p);
        return search_p(sys, default_p_candidates(n, 50, ctx.opt.seed));
      });
      body = {{"certificate", certificate_to_json(cert)}};
      pass = cert.kind == Certificate::Kind::MsStable;
    } else if (mode == "unstable") {
      const Certificate cert = checked([&] { return lmi_unstable(sys, p_or_i); });
      body = {{"certificate", certificate_to_json(cert)}};
      pass = cert.kind == Certificate::Kind::QUnstable;
    } else if (mode == "riccati") {
      const ConfigNode pts = root.at("points");
      json values = json::array();
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const std::vector<double> x = pts.at(i).numbers();
        if (x.size() != n) pts.at(i).fail(fmt::format("expected {} entries", n));
        const Vector xv = Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(n));
        double value = 0.0;
        try {
          value = riccati_value(sys, p_or_i, xv);
        } catch (const std::invalid_argument& e) {
          pts.at(i).fail(e.what());
        }
        values.push_back(value);
        ctx.tidy.push_back({"riccati", static_cast<double>(i), value});
        pass = pass && value <= 0.0;
      }
      body = {{"riccati_values", values}};
    } else {
      root.at("mode").fail(fmt::format("unknown mode '{}' (stable, unstable, riccati, p_range)", mode));
    }
  }

  if (ctx.json_out("json")) {
    ctx.emit_json(body);
  } else {
    write_header_comments(ctx.result, ctx, "linstab");
    const json& flat = body.contains("certificate") ? body["certificate"] : body;
    ctx.result << "key,value\n";
    for (const auto& [k, v] : flat.items()) ctx.result << k << "," << v.dump() << "\n";
  }
  if (!pass) ctx.err << "gcalc: linstab " << mode << " check did not certify\n";
  return pass ? kOk : kCheckFailed;
}

int cmd_experiment(Context& ctx) {
  const ConfigNode root = ctx.root();
  const std::string kind = root.at("kind").string();
  bool pass = false;
  if (kind == "bt") {
    const SigmaBand band = band_from(root);
    const CovarianceSet set = CovarianceSet::from_band(band);
    const PolicyFamily family = root.has("family") ? policy_family_from_json(root.at("family")) : PolicyFamily::extreme_constants();
    std::vector<double> horizons{10.0, 100.0, 1000.0};
    if (root.has("horizons")) horizons = root.at("horizons").numbers();
    for (std::size_t i = 0; i < horizons.size(); ++i)
      if (!(horizons[i] > 0.0) || (i > 0 && !(horizons[i] > horizons[i - 1])))
        root.at("horizons").fail("must be positive and strictly increasing");
    const BtTable t = bt_over_t(set, family, horizons, positive_count(root, "steps_per_horizon", 1000),
                                positive_count(root, "n_paths", 1000), ctx.opt.seed);
    for (const auto& r : t.rows) {
      ctx.tidy.push_back({"median", r.horizon, r.median});
      ctx.tidy.push_back({"q99", r.horizon, r.q99});
    }
    pass = t.pass;
    if (ctx.json_out("csv")) {
      json rows = json::array();
      for (const auto& r : t.rows) rows.push_back({{"T", r.horizon}, {"median", r.median}, {"q90", r.q90}, {"q99", r.q99}});
      ctx.emit_json({{"kind", kind}, {"verdict", pass ? "pass" : "fail"}, {"rows", rows}, {"diagnostics", t.diagnostics}});
    } else {
      write_bt_csv(ctx.result, t, ctx.info());
    }
  } else if (kind == "decay" || kind == "exponent") {
    const ExperimentConfig cfg = experiment_config_from_json(root, ctx.opt.seed);
    if (kind == "decay") {
      const DecayTable t = moment_decay_curve(cfg);
      for (const auto& r : t.rows) {
        ctx.tidy.push_back({"estimate", r.t, r.estimate});
        ctx.tidy.push_back({"bound", r.t, r.bound});
      }
      pass = t.pass;
      if (ctx.json_out("csv")) {
        json rows = json::array();
        for (const auto& r : t.rows)
          rows.push_back({{"t", r.t}, {"estimate", r.estimate}, {"std_error", r.std_error}, {"bound", r.bound},
                          {"argmax_policy", r.argmax_policy}, {"pass", r.pass}});
        ctx.emit_json({{"kind", kind}, {"lambda", t.lambda}, {"C", t.c}, {"verdict", pass ? "pass" : "fail"},
                       {"rows", rows}, {"diagnostics", t.diagnostics}});
      } else {
        write_decay_csv(ctx.result, t, ctx.info());
      }
    } else {
      const ExponentReport r = lyapunov_exponent(cfg);
      ctx.tidy.push_back({"max", cfg.t_end, r.max});
      ctx.tidy.push_back({"median", cfg.t_end, r.median});
      ctx.tidy.push_back({"bound", cfg.t_end, r.bound});
      pass = r.pass;
      if (ctx.json_out("csv")) {
        ctx.emit_json({{"kind", kind}, {"max", r.max}, {"median", r.median}, {"bound", r.bound}, {"slack", r.slack},
                       {"samples", r.samples}, {"floored", r.floored}, {"verdict", pass ? "pass" : "fail"},
                       {"diagnostics", r.diagnostics}});
      } else {
        write_exponent_csv(ctx.result, r, ctx.info());
      }
    }
  } else {
    root.at("kind").fail(fmt::format("unknown experiment '{}' (decay, exponent, bt)", kind));
  }
  if (!pass) ctx.err << "gcalc: experiment '" << kind << "' check failed\n";
  return pass ? kOk : kCheckFailed;
}

// --- plumbing ---------------------------------------------------------------

bool write_output(const std::string& path, const std::string& text, bool force, std::ostream& err) {
  if (std::filesystem::exists(path) && !force) {
    err << "gcalc: refusing to overwrite " << path << " (pass --force)\n";
    return false;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << text;
  f.close();
  if (!f) {
    err << "gcalc: cannot write " << path << "\n";
    return false;
  }
  return true;
}

std::string tidy_csv(const Context& ctx) {
  std::ostringstream os;
  write_header_block(os, ctx.info(), ctx.subcommand + " plot data");
  os << "series,x,y\n";
  for (const auto& r : ctx.tidy) os << fmt::format("\"{}\",{},{}\n", r.series, r.x, r.y);
  return os.str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options opt;
  CLI::App app{"Sublinear-expectation toolkit: G-Brownian paths, G-heat, GSDEs and stability checks", "gcalc"};
  app.set_version_flag("--version", GCALC_VERSION);
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--config", opt.config, "JSON configuration file");
  app.add_option("--seed", opt.seed, "Random seed (default 0)");
  app.add_option("--out", opt.out, "Result path (default: standard output)");
  app.add_option("--format", opt.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--threads", opt.threads, "Worker thread cap (0 = all cores)");
  app.add_flag("--force", opt.force, "Overwrite existing output files");
  app.add_option("--emit-plot-data", opt.plot, "Also write long-format CSV (series,x,y) to this path");

  using Handler = int (*)(Context&);
  const std::vector<std::pair<std::string, std::pair<Handler, std::string>>> commands{
      {"simulate", {cmd_simulate, "Simulate one G-Brownian path under a volatility policy"}},
      {"upper", {cmd_upper, "Monte Carlo upper-expectation estimate of a terminal payoff"}},
      {"gheat", {cmd_gheat, "Solve the G-heat equation for a terminal payoff"}},
      {"gsde", {cmd_gsde, "Integrate a GSDE along one simulated path"}},
      {"lyapunov", {cmd_lyapunov, "Grid-certify Lyapunov conditions"}},
      {"linstab", {cmd_linstab, "Matrix-inequality certificates for linear G-systems"}},
      {"experiment", {cmd_experiment, "Stability experiments (decay, exponent, bt)"}},
  };
  for (const auto& [name, entry] : commands) app.add_subcommand(name, entry.second);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  const std::string sub = app.get_subcommands().front()->get_name();
  if (opt.config.empty()) {
    err << "gcalc " << sub << ": --config is required\n";
    return kUsage;
  }
  std::ifstream in(opt.config, std::ios::binary);
  if (!in) {
    err << "gcalc: cannot read config " << opt.config << "\n";
    return kUsage;
  }
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (!opt.out.empty() && std::filesystem::exists(opt.out) && !opt.force) {
    err << "gcalc: refusing to overwrite " << opt.out << " (pass --force)\n";
    return kUsage;
  }
  if (!opt.plot.empty() && std::filesystem::exists(opt.plot) && !opt.force) {
    err << "gcalc: refusing to overwrite " << opt.plot << " (pass --force)\n";
    return kUsage;
  }
  set_thread_limit(opt.threads);

  Context ctx{sub, opt, {}, fnv1a_hex(bytes), {}, {}, err};
  int code = kOk;
  try {
    ctx.config = json::parse(bytes);
    if (!ctx.config.is_object()) throw ConfigError("", "top level must be a JSON object");
    for (const auto& [name, entry] : commands)
      if (name == sub) code = entry.first(ctx);
  } catch (const json::parse_error& e) {
    err << "gcalc: config " << opt.config << " is not valid JSON: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    err << "gcalc: " << e.what() << "\n";
    return kUsage;
  } catch (const ExplosionError& e) {
    err << "gcalc " << sub << ": " << e.what() << "\n";
    return kCheckFailed;
  } catch (const std::exception& e) {
    err << "gcalc " << sub << ": " << e.what() << "\n";
    return kUsage;
  }

  if (opt.out.empty()) out << ctx.result.str();
  else if (!write_output(opt.out, ctx.result.str(), opt.force, err)) return kUsage;
  if (!opt.plot.empty() && !write_output(opt.plot, tidy_csv(ctx), opt.force, err)) return kUsage;
  return code;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  return run(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace gcalc::cli
