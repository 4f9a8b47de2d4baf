#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gcalc/linalg.hpp"
#include "gcalc/uncertainty.hpp"

namespace gcalc {

/// Uniform time grid on [0, t_end].
class TimeGrid {
 public:
  TimeGrid(double t_end, std::size_t n_steps);

  double t_end() const noexcept { return t_end_; }
  std::size_t n_steps() const noexcept { return n_steps_; }
  double dt() const noexcept { return dt_; }
  double time(std::size_t k) const noexcept { return k == n_steps_ ? t_end_ : static_cast<double>(k) * dt_; }

 private:
  double t_end_;
  std::size_t n_steps_;
  double dt_;
};

/// What a policy may look at when choosing the covariance for step k:
/// the step, its start time, B_k and the current auxiliary state (empty when
/// no auxiliary process is attached).
struct PolicyState {
  std::size_t step;
  double t;
  std::span<const double> b;
  std::span<const double> aux;
};

/// Covariance used on one step: a member of the set, or (d = 1 only) an
/// explicit variance inside the band.
struct VolChoice {
  int member = -1;
  double variance = 0.0;
};

/// An adapted volatility control. Each policy picks one martingale measure
/// out of the scenario family.
class VolatilityPolicy {
 public:
  enum class Kind { Constant, PiecewiseConstant, BangBang };
  using Rule = std::function<std::size_t(const PolicyState&)>;

  static VolatilityPolicy constant_member(std::size_t member);
  static VolatilityPolicy constant_variance(double variance);
  /// `schedule` holds (first step, member) pairs; the first entry must start at step 0.
  static VolatilityPolicy piecewise(std::vector<std::pair<std::size_t, std::size_t>> schedule);
  /// `rule` returns a member index; it must depend only on its arguments.
  static VolatilityPolicy bang_bang(Rule rule, std::string descriptor);
  /// Member `above` while signal >= threshold, `below` otherwise. The signal
  /// is b[component], or aux[component] when `on_aux` is set.
  static VolatilityPolicy threshold(double threshold, std::size_t above, std::size_t below,
                                    std::size_t component = 0, bool on_aux = false);

  Kind kind() const noexcept { return kind_; }
  const std::string& descriptor() const noexcept { return descriptor_; }
  VolChoice choose(const PolicyState& state) const;
  /// Throws std::invalid_argument if a fixed choice is outside the set.
  void validate(const CovarianceSet& set) const;

 private:
  Kind kind_ = Kind::Constant;
  std::string descriptor_;
  VolChoice fixed_;
  std::vector<std::pair<std::size_t, std::size_t>> schedule_;
  Rule rule_;
};

/// A process driven by the simulated path that policies may feed back on
/// (typically the GSDE solution). One instance per path; not shared.
class AuxProcess {
 public:
  virtual ~AuxProcess() = default;
  virtual std::span<const double> state() const = 0;
  /// Advance from t_k to t_{k+1} given the increments of B and <B> (d*d, row-major).
  virtual void advance(std::size_t k, double t, double dt, std::span<const double> db,
                       std::span<const double> dq) = 0;
};
using AuxFactory = std::function<std::unique_ptr<AuxProcess>()>;

/// A simulated G-Brownian trajectory. Storage is row-major per step.
class GPath {
 public:
  GPath(TimeGrid grid, std::size_t dim, std::uint64_t seed, std::uint64_t path_index);

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t n_steps() const noexcept { return grid_.n_steps(); }
  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t path_index() const noexcept { return path_index_; }

  /// B at grid point k (k = 0..n_steps).
  std::span<const double> b(std::size_t k) const;
  /// <B^i, B^j> at grid point k as a d*d row-major block.
  std::span<const double> qvar(std::size_t k) const;
  Matrix qvar_matrix(std::size_t k) const;
  /// Covariance applied on step k (k = 0..n_steps-1).
  std::span<const double> gamma(std::size_t k) const;
  int member(std::size_t k) const { return members_.at(k); }
  std::span<const double> noise(std::size_t k) const;

  double b_terminal(std::size_t component = 0) const { return b(n_steps())[component]; }
  double qvar_terminal(std::size_t i = 0, std::size_t j = 0) const { return qvar(n_steps())[i * dim_ + j]; }

 private:
  friend GPath simulate_impl(const VolatilityPolicy&, const CovarianceSet&, const TimeGrid&, std::uint64_t,
                             std::uint64_t, const std::function<double(std::size_t, std::size_t)>&, AuxProcess*);
  TimeGrid grid_;
  std::size_t dim_;
  std::uint64_t seed_;
  std::uint64_t path_index_;
  std::vector<double> b_;
  std::vector<double> qvar_;
  std::vector<double> gamma_;
  std::vector<int> members_;
  std::vector<double> noise_;
};

/// B_{k+1} = B_k + L_k Z_k sqrt(dt), <B>_{k+1} = <B>_k + gamma_k dt with
/// L_k L_k^T = gamma_k and Z drawn from the counter-based stream addressed by
/// (seed, path_index, k, i).
GPath simulate(const VolatilityPolicy& policy, const CovarianceSet& set, const TimeGrid& grid,
               std::uint64_t seed, std::uint64_t path_index = 0, AuxProcess* aux = nullptr);

/// Same recursion with caller-supplied standard normals (n_steps * d values).
GPath simulate_from_noise(const VolatilityPolicy& policy, const CovarianceSet& set, const TimeGrid& grid,
                          std::span<const double> noise, AuxProcess* aux = nullptr);

/// Largest signed violation of lo*(t2-t1) <= <B>_t2 - <B>_t1 <= hi*(t2-t1)
/// over all grid pairs t1 <= t2. Exact linear-time scan. Requires d = 1.
double qvar_bounds_check(const GPath& path, const SigmaBand& band);

using EtaFn = std::function<Matrix(std::size_t step)>;

/// M_t = sum_k tr(eta_k d<B>_k) - sum_k 2 G(eta_k) dt at every grid point.
std::vector<double> appendix_m_series(const GPath& path, const CovarianceSet& set, const EtaFn& eta);
/// max_t M_t (M_0 = 0 included).
double appendix_m_check(const GPath& path, const CovarianceSet& set, const EtaFn& eta);

/// CSV with columns t, b_1..b_d, qvar_11..qvar_dd, policy_choice. The choice
/// column holds the member index used on [t_k, t_k+1); -1 for an explicit
/// variance and on the final row.
void write_path_csv(std::ostream& out, const GPath& path);

}  // namespace gcalc
