#include "gcalc/gheat.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace gcalc {

CflViolation::CflViolation(std::size_t nt, std::size_t min_nt)
    : std::invalid_argument(
          fmt::format("G-heat grid violates the CFL bound with nt = {}; need nt >= {}", nt, min_nt)),
      min_nt_(min_nt) {}

SpaceTimeGrid::SpaceTimeGrid(double x_lo, double x_hi, std::size_t nx, double t_end, std::size_t nt)
    : x_lo_(x_lo), x_hi_(x_hi), nx_(nx), t_end_(t_end), nt_(nt) {
  if (!(x_lo < x_hi)) throw std::invalid_argument("SpaceTimeGrid: need x_lo < x_hi");
  if (nx < 3) throw std::invalid_argument("SpaceTimeGrid: nx must be at least 3");
  if (!(t_end > 0.0)) throw std::invalid_argument("SpaceTimeGrid: T must be positive");
  if (nt < 1) throw std::invalid_argument("SpaceTimeGrid: nt must be at least 1");
}

std::size_t SpaceTimeGrid::min_steps(double x_lo, double x_hi, std::size_t nx, double t_end,
                                     const SigmaBand& band) {
  const double dx = (x_hi - x_lo) / static_cast<double>(nx - 1);
  const double dt_max = dx * dx / band.hi();
  auto nt = static_cast<std::size_t>(std::ceil(t_end / dt_max));
  nt = std::max<std::size_t>(nt, 1);
  while (t_end / static_cast<double>(nt) > dt_max) ++nt;
  return nt;
}

SpaceTimeGrid SpaceTimeGrid::with_min_steps(double x_lo, double x_hi, std::size_t nx, double t_end,
                                            const SigmaBand& band) {
  SpaceTimeGrid(x_lo, x_hi, nx, t_end, 1);  // validates the layout before min_steps divides by nx - 1
  return SpaceTimeGrid(x_lo, x_hi, nx, t_end, min_steps(x_lo, x_hi, nx, t_end, band));
}

void SpaceTimeGrid::check_cfl(const SigmaBand& band) const {
  if (dt() > dx() * dx() / band.hi()) throw CflViolation(nt_, min_steps(x_lo_, x_hi_, nx_, t_end_, band));
}

double ValueFunction::at(double point) const {
  if (x.size() < 2 || point < x.front() || point > x.back())
    throw std::out_of_range(fmt::format("ValueFunction: {} outside the grid", point));
  auto it = std::upper_bound(x.begin(), x.end(), point);
  std::size_t i = it == x.end() ? x.size() - 2 : static_cast<std::size_t>(it - x.begin()) - 1;
  if (x[i] == point) return u[i];
  const double w = (point - x[i]) / (x[i + 1] - x[i]);
  return (1.0 - w) * u[i] + w * u[i + 1];
}

namespace {

void step_backward(const SigmaBand& band, std::vector<double>& v, std::vector<double>& next, double dt,
                   double inv_dx2) {
  const std::size_t n = v.size();
  next[0] = v[0];
  next[n - 1] = v[n - 1];
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double d2 = (v[i + 1] - 2.0 * v[i] + v[i - 1]) * inv_dx2;
    next[i] = v[i] + dt * g_scalar(band, d2);
  }
  v.swap(next);
}

std::vector<double> march(const SigmaBand& band, std::vector<double> v, const SpaceTimeGrid& grid) {
  grid.check_cfl(band);
  const double dx = grid.dx();
  const double inv_dx2 = 1.0 / (dx * dx);
  const double dt = grid.dt();
  std::vector<double> next(v.size());
  for (std::size_t k = 0; k < grid.nt(); ++k) step_backward(band, v, next, dt, inv_dx2);
  return v;
}

}  // namespace

ValueFunction solve_terminal(const SigmaBand& band, const TerminalPayoff& payoff, const SpaceTimeGrid& grid) {
  grid.check_cfl(band);
  ValueFunction out;
  out.x.resize(grid.nx());
  std::vector<double> v(grid.nx());
  for (std::size_t i = 0; i < grid.nx(); ++i) {
    out.x[i] = grid.x(i);
    v[i] = payoff.phi(out.x[i]);
    if (!std::isfinite(v[i]))
      throw std::domain_error(fmt::format("solve_terminal: payoff is not finite at x = {}", out.x[i]));
  }
  out.u = march(band, std::move(v), grid);
  return out;
}

double solve_two_step(const SigmaBand& band, const std::function<double(double, double)>& phi2, double t1,
                      double t2, double x_lo, double x_hi, std::size_t nx) {
  if (!(t1 > 0.0) || !(t1 < t2)) throw std::invalid_argument("solve_two_step: need 0 < t1 < t2");
  const SpaceTimeGrid inner = SpaceTimeGrid::with_min_steps(x_lo, x_hi, nx, t2 - t1, band);
  const SpaceTimeGrid outer = SpaceTimeGrid::with_min_steps(x_lo, x_hi, nx, t1, band);

  ValueFunction stage;
  stage.x.resize(nx);
  stage.u.resize(nx);
  for (std::size_t i = 0; i < nx; ++i) {
    const double x1 = outer.x(i);
    stage.x[i] = x1;
    const TerminalPayoff inner_payoff{[&](double increment) { return phi2(x1, increment); }};
    stage.u[i] = solve_terminal(band, inner_payoff, inner).at(0.0);
  }
  std::vector<double> u = march(band, stage.u, outer);
  ValueFunction result{stage.x, std::move(u)};
  return result.at(0.0);
}

double padded_half_width(const SigmaBand& band, double t_end, double reach) {
  return reach + 6.0 * band.sigma_hi() * std::sqrt(t_end);
}

void write_value_csv(std::ostream& out, const ValueFunction& v) {
  out << "x,u\n";
  for (std::size_t i = 0; i < v.x.size(); ++i) out << fmt::format("{},{}\n", v.x[i], v.u[i]);
}

}  // namespace gcalc
