#pragma once

#include <functional>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "gcalc/uncertainty.hpp"

namespace gcalc {

/// Space-time grid for the explicit G-heat scheme. The explicit step is only
/// monotone when dt <= dx^2 / sigma2_hi; a violating grid is rejected.
class SpaceTimeGrid {
 public:
  SpaceTimeGrid(double x_lo, double x_hi, std::size_t nx, double t_end, std::size_t nt);

  /// Grid with the smallest admissible nt for `band`.
  static SpaceTimeGrid with_min_steps(double x_lo, double x_hi, std::size_t nx, double t_end,
                                      const SigmaBand& band);
  /// Smallest nt satisfying the CFL bound.
  static std::size_t min_steps(double x_lo, double x_hi, std::size_t nx, double t_end, const SigmaBand& band);

  double x_lo() const noexcept { return x_lo_; }
  double x_hi() const noexcept { return x_hi_; }
  std::size_t nx() const noexcept { return nx_; }
  double t_end() const noexcept { return t_end_; }
  std::size_t nt() const noexcept { return nt_; }
  double dx() const noexcept { return (x_hi_ - x_lo_) / static_cast<double>(nx_ - 1); }
  double dt() const noexcept { return t_end_ / static_cast<double>(nt_); }
  double x(std::size_t i) const noexcept { return i + 1 == nx_ ? x_hi_ : x_lo_ + static_cast<double>(i) * dx(); }

  /// Throws CflViolation if the grid is not monotone for `band`.
  void check_cfl(const SigmaBand& band) const;

 private:
  double x_lo_, x_hi_;
  std::size_t nx_;
  double t_end_;
  std::size_t nt_;
};

class CflViolation : public std::invalid_argument {
 public:
  CflViolation(std::size_t nt, std::size_t min_nt);
  std::size_t min_nt() const noexcept { return min_nt_; }

 private:
  std::size_t min_nt_;
};

enum class Growth { Bounded, Polynomial };

struct TerminalPayoff {
  std::function<double(double)> phi;
  Growth growth = Growth::Bounded;
};

struct ValueFunction {
  std::vector<double> x;
  std::vector<double> u;
  /// Linear interpolation on the grid; throws outside [x_lo, x_hi].
  double at(double point) const;
};

/// u(0, .) for du/dt + G(u_xx) = 0, u(T, .) = phi, stepped backward in time
/// with the explicit monotone scheme. Boundary nodes see a zero second
/// difference (linear extrapolation through a ghost node) and so keep their
/// terminal values.
ValueFunction solve_terminal(const SigmaBand& band, const TerminalPayoff& payoff, const SpaceTimeGrid& grid);

/// Backward recursion for phi(B_t1, B_t2 - B_t1): the inner problem on
/// [t1, t2] is solved for every outer grid value, then the outer problem on
/// [0, t1]. Both stages share the spatial grid (x_lo, x_hi, nx) and use
/// CFL-minimal time steps. Returns u(0, 0).
double solve_two_step(const SigmaBand& band, const std::function<double(double, double)>& phi2, double t1,
                      double t2, double x_lo, double x_hi, std::size_t nx);

/// Half-width 6 * sigma_hi * sqrt(T) beyond `reach`, the padding the solver expects.
double padded_half_width(const SigmaBand& band, double t_end, double reach = 0.0);

void write_value_csv(std::ostream& out, const ValueFunction& v);

}  // namespace gcalc
