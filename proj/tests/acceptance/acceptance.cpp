// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "gcalc/experiments.hpp"
#include "gcalc/gheat.hpp"
#include "gcalc/gsde.hpp"
#include "gcalc/linstab.hpp"
#include "gcalc/lyapunov.hpp"
#include "gcalc/scenario.hpp"
#include "gcalc/upper_expectation.hpp"

using namespace gcalc;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

const SigmaBand kBand(1.0, 2.0);
const CovarianceSet kSet = CovarianceSet::from_band(kBand);

CoefficientSet duffing() {
  return CoefficientSet::parse(2, 1, {"0", "0"}, {"x2", "-alpha*x1 - beta*x1^3 - gamma*x2"}, {"0", "sigma"},
                               {{"alpha", 1.0}, {"beta", 1.0}, {"gamma", 1.0}, {"sigma", 1.0}});
}

std::vector<VolatilityPolicy> mixed_policies() {
  auto out = PolicyFamily::extreme_constants().policies(kSet);
  for (auto& p : PolicyFamily::bangbang_threshold({-0.5, 0.0, 0.5}).policies(kSet)) out.push_back(p);
  return out;
}

// 1. G-heat vs Monte Carlo for x^2
Outcome c1() {
  const auto t0 = Clock::now();
  const double w = padded_half_width(kBand, 1.0);
  const auto grid = SpaceTimeGrid::with_min_steps(-w, w, 401, 1.0, kBand);
  const double u = solve_terminal(kBand, {[](double x) { return x * x; }, Growth::Polynomial}, grid).at(0.0);
  const auto mc = estimate_upper([](const GPath& p) { return p.b_terminal() * p.b_terminal(); },
                                 PolicyFamily::extreme_constants(), MonteCarloSetup{kSet, TimeGrid(1.0, 1), 100000, 0});
  const double secs = seconds_since(t0);
  const double rel = std::abs(mc.value - u) / std::abs(u);
  return {std::abs(u - 2.0) <= 1e-3 && rel <= 0.02 && secs <= 30.0,
          fmt::format("u(0,0) = {:.9f}, MC = {:.5f} (rel diff {:.4f}), {:.2f} s", u, mc.value, rel, secs)};
}

// 2. M-process inequality and quadratic-variation bounds
Outcome c2() {
  const auto t0 = Clock::now();
  Matrix a(2, 2), b(2, 2);
  a << 1.0, 0.3, 0.3, 0.5;
  b << 2.0, -0.4, -0.4, 1.0;
  const CovarianceSet set2({a, b});
  const std::size_t n_steps = 100;
  const TimeGrid grid(1.0, n_steps);
  std::mt19937_64 gen(2);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  double worst_m = -1e300, worst_q = -1e300;
  for (int trial = 0; trial < 10000; ++trial) {
    const bool two = trial % 2 == 1;
    const CovarianceSet& set = two ? set2 : kSet;
    const std::size_t d = set.dim();
    const double th = u(gen);
    const VolatilityPolicy pol =
        two ? VolatilityPolicy::bang_bang([th](const PolicyState& s) -> std::size_t { return s.b[0] - s.b[1] >= th; },
                                          "bangbang(b1 - b2)")
            : VolatilityPolicy::threshold(th, trial % 4 == 0, trial % 4 != 0);
    const GPath path = simulate(pol, set, grid, 2, trial);
    std::vector<Matrix> eta(n_steps);
    for (auto& e : eta) {
      Matrix m(d, d);
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) m(i, j) = z(gen);
      e = symmetrize(m);
    }
    worst_m = std::max(worst_m, appendix_m_check(path, set, [&](std::size_t k) { return eta[k]; }));
    if (!two) worst_q = std::max(worst_q, qvar_bounds_check(path, kBand));
  }
  const double secs = seconds_since(t0);
  return {worst_m <= 1e-10 * n_steps && worst_q <= 1e-12 && secs <= 60.0,
          fmt::format("max M = {:.3e}, max qvar violation = {:.3e}, {:.2f} s", worst_m, worst_q, secs)};
}

// 3. Stochastic exponential has unit upper mean under every policy
Outcome c3() {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> ug(0.1, 0.6), up(0.5, 1.5), ut(0.5, 1.0);
  const auto pols = mixed_policies();
  double worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    const double gamma = ug(gen), p = up(gen), t = ut(gen);
    const double a = gamma * p;
    const auto r = estimate_upper([a](const GPath& path) {
      return std::exp(a * path.b_terminal() - 0.5 * a * a * path.qvar_terminal());
    }, pols, MonteCarloSetup{kSet, TimeGrid(t, 50), 100000, static_cast<std::uint64_t>(30 + i)});
    for (const auto& row : r.table) worst = std::max(worst, std::abs(row.mean - 1.0));
  }
  return {worst <= 0.02, fmt::format("max |mean - 1| = {:.4f} over 10 draws x {} policies", worst, pols.size())};
}

// 4. Euler strong rate against the geometric closed form. Each level's
// noise is the aggregate of the next finer one, so all levels share a path.
Outcome c4() {
  const auto c = CoefficientSet::parse(1, 1, {"-x1"}, {"0.5*x1"}, {"x1"});
  const std::vector<double> dts{1e-2, 2.5e-3, 1e-3, 2.5e-4, 1e-4, 2.5e-5};
  const int n = 1000;
  std::vector<double> sq(dts.size(), 0.0);
  for (int p = 0; p < n; ++p) {
    const VolatilityPolicy pol = p % 3 == 0   ? VolatilityPolicy::constant_member(1)
                                 : p % 3 == 1 ? VolatilityPolicy::constant_member(0)
                                              : VolatilityPolicy::threshold(0.0, 1, 0);
    for (std::size_t pair = 0; pair < dts.size(); pair += 2) {
      const auto fine_steps = static_cast<std::size_t>(std::llround(1.0 / dts[pair + 1]));
      const GPath fine = simulate(pol, kSet, TimeGrid(1.0, fine_steps), 4, p);
      std::vector<double> coarse_noise(fine_steps / 4);
      for (std::size_t k = 0; k < coarse_noise.size(); ++k)
        coarse_noise[k] = 0.5 * (fine.noise(4 * k)[0] + fine.noise(4 * k + 1)[0] + fine.noise(4 * k + 2)[0] +
                                 fine.noise(4 * k + 3)[0]);
      const GPath coarse = simulate_from_noise(pol, kSet, TimeGrid(1.0, fine_steps / 4), coarse_noise);
      const double x0[] = {1.0};
      for (int level = 0; level < 2; ++level) {
        const GPath& path = level == 0 ? coarse : fine;
        const double e =
            integrate(c, x0, path).terminal()[0] - closed_form_geometric(-1, 0.5, 1, 1.0, path).terminal()[0];
        sq[pair + level] += e * e;
      }
    }
  }
  bool ok = true;
  std::string detail;
  for (std::size_t pair = 0; pair < dts.size(); pair += 2) {
    const double ratio = std::sqrt(sq[pair] / sq[pair + 1]);
    ok = ok && ratio >= 1.4 && ratio <= 2.6;
    detail += fmt::format("dt={:g}: rms {:.3e}, ratio {:.3f}; ", dts[pair], std::sqrt(sq[pair] / n), ratio);
  }
  return {ok, detail};
}

// 5. Localization consistency on Duffing-van der Pol
Outcome c5() {
  const auto c = duffing();
  const auto radii = TruncationSchedule::doubling().radii();
  const double x0[] = {1.0, 0.0};
  const auto pols = mixed_policies();
  std::vector<std::size_t> exits(radii.size(), 0);
  bool bitwise = true;
  const int n = 1000;
  for (int p = 0; p < n; ++p) {
    const GPath path = simulate(pols[p % pols.size()], kSet, TimeGrid(5.0, 500), 5, p);
    std::optional<SolutionPath> prev;
    std::optional<std::size_t> prev_tau;
    for (std::size_t r = 0; r < radii.size(); ++r) {
      SolutionPath sol = integrate(truncate(c, radii[r]), x0, path);
      const auto tau = exit_step(sol, radii[r]);
      if (tau) ++exits[r];
      if (prev && prev_tau &&
          std::memcmp(sol.x.data(), prev->x.data(), (*prev_tau + 1) * 2 * sizeof(double)) != 0)
        bitwise = false;
      if (!tau) {
        for (std::size_t q = r + 1; q < radii.size(); ++q) {
          // larger radii see the same arithmetic: no exit there either
          const auto later = integrate(truncate(c, radii[q]), x0, path);
          if (std::memcmp(later.x.data(), sol.x.data(), sol.x.size() * sizeof(double)) != 0) bitwise = false;
          if (exit_step(later, radii[q])) ++exits[q];
        }
        break;
      }
      prev = std::move(sol);
      prev_tau = tau;
    }
  }
  bool monotone = true;
  for (std::size_t r = 1; r < radii.size(); ++r) monotone = monotone && exits[r] <= exits[r - 1];
  std::string fr;
  for (std::size_t r = 0; r < radii.size() && (r == 0 || exits[r - 1] > 0); ++r)
    fr += fmt::format("N={:g}:{:.3f} ", radii[r], double(exits[r]) / n);
  return {bitwise && monotone && exits.back() == 0,
          fmt::format("bitwise {}, exit fractions {}", bitwise ? "ok" : "MISMATCH", fr)};
}

// 6. Moment bound for Duffing-van der Pol
Outcome c6() {
  const auto v = LyapunovSpec::symbolic(
      expr::Expression::parse("1 + 0.5*x2^2 + 1/2*x1^2 + 1/4*x1^4", {"t", "x1", "x2"}), 2);
  const double c_ly = 0.5 * kBand.hi() * 1.0;
  CheckRegion region{{0.0, 5.0, 2}, {{-10, 10, 81}, {-10, 10, 81}}};
  const auto h3 = check_h3(v, duffing(), kSet, region, c_ly);
  MomentBoundSetup s;
  s.x0 = {1.0, 0.0};
  s.times = {1, 2, 3, 4, 5};
  s.dt = 1e-2;
  s.policies = mixed_policies();
  s.n_paths = 1000;
  s.seed = 6;
  s.c_ly = c_ly;
  s.region = region;
  const auto r = verify_moment_bound(v, duffing(), kSet, s);
  std::string rows;
  for (const auto& row : r.rows) rows += fmt::format("t={:g}: {:.4f} <= {:.4f}; ", row.t, row.estimate, row.bound);
  return {h3.pass && r.pass, fmt::format("check_h3 {}, {}{}", h3.pass ? "pass" : "fail", rows,
                                         r.region_exceeded ? "region exceeded" : "states inside region")};
}

ExperimentConfig decay_model() {
  ExperimentConfig cfg;
  cfg.geometric = GeometricModel{-1.0, 0.5, 1.0};
  cfg.band = kBand;
  cfg.p = 0.5;
  cfg.x0 = 1.0;
  cfg.family = PolicyFamily::constants_only(5);
  return cfg;
}

// 7. Moment decay curve
Outcome c7() {
  auto cfg = decay_model();
  cfg.t_end = 10;
  cfg.dt = 1e-2;
  cfg.times = {1, 2, 5, 10};
  cfg.n_paths = 1000;
  cfg.seed = 7;
  const auto t = moment_decay_curve(cfg);
  std::string rows;
  for (const auto& row : t.rows)
    rows += fmt::format("t={:g}: {:.4f} (se {:.4f}) vs {:.4f}; ", row.t, row.estimate, row.std_error, row.bound);
  return {t.pass && t.lambda == 0.25, rows};
}

// 8. Quasi-sure exponent
Outcome c8() {
  auto cfg = decay_model();
  cfg.family = PolicyFamily::extreme_constants();
  cfg.t_end = 50;
  cfg.dt = 1e-2;
  cfg.n_paths = 1000;
  cfg.seed = 8;
  const auto r = lyapunov_exponent(cfg);
  const double limit = -0.5 + 3.0 / std::sqrt(50.0);
  return {r.pass && r.max <= limit,
          fmt::format("max {:.4f}, median {:.4f}, limit {:.4f}, {} samples", r.max, r.median, limit, r.samples)};
}

// 9. Linear certificates
Outcome c9() {
  const LinearGSystem s(Matrix::Constant(1, 1, -3), Matrix::Constant(1, 1, -1), Matrix::Constant(1, 1, 1), kBand);
  const Matrix p = Matrix::Constant(1, 1, 1);
  const auto cert = lmi_stable(s, p);
  std::mt19937_64 gen(9);
  std::normal_distribution<double> z;
  double worst = -1e300;
  for (int i = 0; i < 10000; ++i) {
    Vector x(1);
    do x[0] = z(gen);
    while (x[0] == 0.0);
    x /= x.norm();
    worst = std::max(worst, riccati_value(s, p, x));
  }
  const LinearGSystem u(Matrix::Constant(1, 1, 1), Matrix::Constant(1, 1, 1), Matrix::Zero(1, 1), kBand);
  const auto un = lmi_unstable(u, p);
  const bool ok = cert.kind == Certificate::Kind::MsStable && std::abs(cert.margin - 5.5) <= 1e-9 && worst <= 1e-9 &&
                  un.kind == Certificate::Kind::QUnstable;
  return {ok, fmt::format("stable margin {:.12f}, max riccati {:.3f}, unstable example {}", cert.margin, worst,
                          to_string(un.kind))};
}

// 10. p-ranges
Outcome c10() {
  const auto a = corollary_p_range(-1.0, 0.0, 1.0);
  const auto b = corollary_p_range(0.0, 1.0, 2.0);
  const bool ok = !a.empty && a.lo == 0.0 && a.hi == 3.0 && !b.empty && b.lo == 0.0 && b.hi == 2.0;
  return {ok, fmt::format("case {}: ({}, {}), case {}: ({}, {})", a.which_case, a.lo, a.hi, b.which_case, b.lo, b.hi)};
}

// 11. |B_T| / T
Outcome c11() {
  const auto t = bt_over_t(kSet, PolicyFamily::bangbang_threshold({0.0}), {10, 100, 1000}, 1000, 1000, 11);
  std::string rows;
  for (const auto& r : t.rows) rows += fmt::format("T={:g}: q99 {:.4f}; ", r.horizon, r.q99);
  return {t.pass, rows + fmt::format("limit {:.4f}", 0.2 * std::sqrt(kBand.hi()))};
}

// 12. Initial-condition sensitivity for the linear system
Outcome c12() {
  const auto c = CoefficientSet::parse(1, 1, {"-x1"}, {"0.5*x1"}, {"x1"}, {}, CoefficientSet::Lipschitz::Global);
  const MonteCarloSetup mc{kSet, TimeGrid(1.0, 100), 1000, 12};
  const auto pols = mixed_policies();
  std::vector<double> ratios;
  const double x[] = {1.0};
  for (double gap : {1e-1, 1e-2, 1e-3}) {
    const double y[] = {1.0 + gap};
    ratios.push_back(initial_sensitivity(c, x, y, pols, mc).ratio);
  }
  const double hi = *std::max_element(ratios.begin(), ratios.end());
  const double lo = *std::min_element(ratios.begin(), ratios.end());
  return {lo > 0.0 && hi <= 2.0 * lo, fmt::format("ratios {:.6f}, {:.6f}, {:.6f}", ratios[0], ratios[1], ratios[2])};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"G-expectation oracle agreement", c1},
      {"M-process inequality suite", c2},
      {"G-martingale normalization", c3},
      {"Euler vs closed form", c4},
      {"localization consistency", c5},
      {"moment bound", c6},
      {"exponential p-stability curve", c7},
      {"quasi-sure exponent", c8},
      {"linear certificates", c9},
      {"p-ranges", c10},
      {"|B_t|/t decay", c11},
      {"initial-condition Lipschitz property", c12},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = Clock::now();
    Outcome o{false, ""};
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << fmt::format("{} criterion {}: {} [{:.1f} s] {}\n", o.pass ? "PASS" : "FAIL", i + 1,
                             criteria[i].first, seconds_since(t0), o.detail)
              << std::flush;
  }
  std::cout << fmt::format("{} of {} criteria passed\n", criteria.size() - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
