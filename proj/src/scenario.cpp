#include "gcalc/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

#include "gcalc/rng.hpp"

namespace gcalc {

TimeGrid::TimeGrid(double t_end, std::size_t n_steps) : t_end_(t_end), n_steps_(n_steps), dt_(0.0) {
  if (!(t_end > 0.0) || !std::isfinite(t_end)) throw std::invalid_argument("TimeGrid: t_end must be positive");
  if (n_steps < 1) throw std::invalid_argument("TimeGrid: n_steps must be at least 1");
  dt_ = t_end / static_cast<double>(n_steps);
}

VolatilityPolicy VolatilityPolicy::constant_member(std::size_t member) {
  VolatilityPolicy p;
  p.kind_ = Kind::Constant;
  p.fixed_ = VolChoice{static_cast<int>(member), 0.0};
  p.descriptor_ = fmt::format("constant(member={})", member);
  return p;
}

VolatilityPolicy VolatilityPolicy::constant_variance(double variance) {
  if (!(variance >= 0.0) || !std::isfinite(variance))
    throw std::invalid_argument("constant_variance: variance must be finite and nonnegative");
  VolatilityPolicy p;
  p.kind_ = Kind::Constant;
  p.fixed_ = VolChoice{-1, variance};
  p.descriptor_ = fmt::format("constant(variance={})", variance);
  return p;
}

VolatilityPolicy VolatilityPolicy::piecewise(std::vector<std::pair<std::size_t, std::size_t>> schedule) {
  if (schedule.empty()) throw std::invalid_argument("piecewise: schedule is empty");
  if (schedule.front().first != 0) throw std::invalid_argument("piecewise: schedule must start at step 0");
  for (std::size_t i = 1; i < schedule.size(); ++i)
    if (schedule[i].first <= schedule[i - 1].first)
      throw std::invalid_argument("piecewise: schedule steps must be strictly increasing");
  VolatilityPolicy p;
  p.kind_ = Kind::PiecewiseConstant;
  std::string desc = "piecewise(";
  for (std::size_t i = 0; i < schedule.size(); ++i)
    desc += fmt::format("{}{}:{}", i ? "," : "", schedule[i].first, schedule[i].second);
  p.descriptor_ = desc + ")";
  p.schedule_ = std::move(schedule);
  return p;
}

VolatilityPolicy VolatilityPolicy::bang_bang(Rule rule, std::string descriptor) {
  if (!rule) throw std::invalid_argument("bang_bang: rule is empty");
  VolatilityPolicy p;
  p.kind_ = Kind::BangBang;
  p.rule_ = std::move(rule);
  p.descriptor_ = std::move(descriptor);
  return p;
}

VolatilityPolicy VolatilityPolicy::threshold(double level, std::size_t above, std::size_t below,
                                             std::size_t component, bool on_aux) {
  Rule rule = [=](const PolicyState& s) -> std::size_t {
    const std::span<const double> signal = on_aux ? s.aux : s.b;
    if (component >= signal.size()) throw std::out_of_range("threshold policy: signal component out of range");
    return signal[component] >= level ? above : below;
  };
  return bang_bang(std::move(rule), fmt::format("bangbang({}{} >= {} ? {} : {})", on_aux ? "x" : "b",
                                                component + 1, level, above, below));
}

VolChoice VolatilityPolicy::choose(const PolicyState& state) const {
  switch (kind_) {
    case Kind::Constant:
      return fixed_;
    case Kind::PiecewiseConstant: {
      auto it = std::upper_bound(schedule_.begin(), schedule_.end(), state.step,
                                 [](std::size_t k, const auto& e) { return k < e.first; });
      return VolChoice{static_cast<int>(std::prev(it)->second), 0.0};
    }
    case Kind::BangBang:
      return VolChoice{static_cast<int>(rule_(state)), 0.0};
  }
  return fixed_;
}

void VolatilityPolicy::validate(const CovarianceSet& set) const {
  auto check_member = [&](std::size_t m) {
    if (m >= set.size())
      throw std::invalid_argument(
          fmt::format("policy {}: member {} outside the set of {} members", descriptor_, m, set.size()));
  };
  if (kind_ == Kind::Constant) {
    if (fixed_.member >= 0) {
      check_member(static_cast<std::size_t>(fixed_.member));
    } else {
      if (set.dim() != 1)
        throw std::invalid_argument("policy: explicit variances require a one-dimensional set");
      double lo = set.member(set.lowest_member())(0, 0);
      double hi = set.member(set.highest_member())(0, 0);
      if (fixed_.variance < lo || fixed_.variance > hi)
        throw std::invalid_argument(
            fmt::format("policy {}: variance {} outside [{}, {}]", descriptor_, fixed_.variance, lo, hi));
    }
  } else if (kind_ == Kind::PiecewiseConstant) {
    for (const auto& e : schedule_) check_member(e.second);
  }
}

GPath::GPath(TimeGrid grid, std::size_t dim, std::uint64_t seed, std::uint64_t path_index)
    : grid_(grid), dim_(dim), seed_(seed), path_index_(path_index) {
  const std::size_t n = grid_.n_steps();
  b_.assign((n + 1) * dim_, 0.0);
  qvar_.assign((n + 1) * dim_ * dim_, 0.0);
  gamma_.assign(n * dim_ * dim_, 0.0);
  members_.assign(n, -1);
  noise_.assign(n * dim_, 0.0);
}

std::span<const double> GPath::b(std::size_t k) const {
  return std::span<const double>(b_).subspan(k * dim_, dim_);
}
std::span<const double> GPath::qvar(std::size_t k) const {
  return std::span<const double>(qvar_).subspan(k * dim_ * dim_, dim_ * dim_);
}
Matrix GPath::qvar_matrix(std::size_t k) const {
  auto q = qvar(k);
  Matrix m(dim_, dim_);
  for (std::size_t i = 0; i < dim_; ++i)
    for (std::size_t j = 0; j < dim_; ++j) m(i, j) = q[i * dim_ + j];
  return m;
}
std::span<const double> GPath::gamma(std::size_t k) const {
  return std::span<const double>(gamma_).subspan(k * dim_ * dim_, dim_ * dim_);
}
std::span<const double> GPath::noise(std::size_t k) const {
  return std::span<const double>(noise_).subspan(k * dim_, dim_);
}

GPath simulate_impl(const VolatilityPolicy& policy, const CovarianceSet& set, const TimeGrid& grid,
                    std::uint64_t seed, std::uint64_t path_index,
                    const std::function<double(std::size_t, std::size_t)>& normal, AuxProcess* aux) {
  policy.validate(set);
  const std::size_t d = set.dim();
  const std::size_t dd = d * d;
  const double dt = grid.dt();
  const double sqrt_dt = std::sqrt(dt);

  std::vector<Matrix> roots;
  roots.reserve(set.size());
  for (const Matrix& m : set.members()) roots.push_back(psd_sqrt(m));

  GPath path(grid, d, seed, path_index);
  std::vector<double> db(d), dq(dd);
  std::vector<double> z(d);
  for (std::size_t k = 0; k < grid.n_steps(); ++k) {
    const PolicyState state{k, grid.time(k), path.b(k),
                            aux ? aux->state() : std::span<const double>{}};
    const VolChoice choice = policy.choose(state);

    const Matrix* gamma = nullptr;
    const Matrix* root = nullptr;
    Matrix explicit_gamma, explicit_root;
    if (choice.member >= 0) {
      if (static_cast<std::size_t>(choice.member) >= set.size())
        throw std::invalid_argument(fmt::format("policy {} chose member {} outside the set at step {}",
                                                policy.descriptor(), choice.member, k));
      gamma = &set.member(static_cast<std::size_t>(choice.member));
      root = &roots[static_cast<std::size_t>(choice.member)];
    } else {
      explicit_gamma = Matrix::Constant(1, 1, choice.variance);
      explicit_root = Matrix::Constant(1, 1, std::sqrt(choice.variance));
      gamma = &explicit_gamma;
      root = &explicit_root;
    }

    for (std::size_t i = 0; i < d; ++i) {
      z[i] = normal(k, i);
      path.noise_[k * d + i] = z[i];
    }
    for (std::size_t i = 0; i < d; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += (*root)(i, j) * z[j];
      db[i] = acc * sqrt_dt;
      path.b_[(k + 1) * d + i] = path.b_[k * d + i] + db[i];
    }
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        const double g = (*gamma)(i, j);
        dq[i * d + j] = g * dt;
        path.gamma_[k * dd + i * d + j] = g;
        path.qvar_[(k + 1) * dd + i * d + j] = path.qvar_[k * dd + i * d + j] + g * dt;
      }
    }
    path.members_[k] = choice.member;
    if (aux) {
      // Hand over the increments exactly as consumers recompute them from the stored path.
      for (std::size_t i = 0; i < d; ++i) db[i] = path.b_[(k + 1) * d + i] - path.b_[k * d + i];
      for (std::size_t i = 0; i < dd; ++i) dq[i] = path.qvar_[(k + 1) * dd + i] - path.qvar_[k * dd + i];
      aux->advance(k, grid.time(k), dt, db, dq);
    }
  }
  return path;
}

GPath simulate(const VolatilityPolicy& policy, const CovarianceSet& set, const TimeGrid& grid,
               std::uint64_t seed, std::uint64_t path_index, AuxProcess* aux) {
  auto normal = [&](std::size_t k, std::size_t i) {
    return rng::standard_normal(seed, path_index, k, static_cast<std::uint32_t>(i));
  };
  return simulate_impl(policy, set, grid, seed, path_index, normal, aux);
}

GPath simulate_from_noise(const VolatilityPolicy& policy, const CovarianceSet& set, const TimeGrid& grid,
                          std::span<const double> noise, AuxProcess* aux) {
  const std::size_t d = set.dim();
  if (noise.size() != grid.n_steps() * d)
    throw std::invalid_argument(
        fmt::format("simulate_from_noise: expected {} normals, got {}", grid.n_steps() * d, noise.size()));
  auto normal = [&](std::size_t k, std::size_t i) { return noise[k * d + i]; };
  return simulate_impl(policy, set, grid, 0, 0, normal, aux);
}

double qvar_bounds_check(const GPath& path, const SigmaBand& band) {
  if (path.dim() != 1)
    throw std::invalid_argument(fmt::format("qvar_bounds_check: unsupported dimension {}", path.dim()));
  // Both bounds have the form f_j - f_i <= 0 for i < j, with f = lo*t - Q and
  // f = Q - hi*t, so a running minimum gives the exact worst pair.
  const TimeGrid& grid = path.grid();
  double worst = -std::numeric_limits<double>::infinity();
  double min_lower = std::numeric_limits<double>::infinity();
  double min_upper = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k <= grid.n_steps(); ++k) {
    const double t = grid.time(k);
    const double q = path.qvar(k)[0];
    const double f_lower = band.lo() * t - q;
    const double f_upper = q - band.hi() * t;
    if (k > 0) worst = std::max({worst, f_lower - min_lower, f_upper - min_upper});
    min_lower = std::min(min_lower, f_lower);
    min_upper = std::min(min_upper, f_upper);
  }
  return worst;
}

std::vector<double> appendix_m_series(const GPath& path, const CovarianceSet& set, const EtaFn& eta) {
  const std::size_t d = path.dim();
  if (set.dim() != d) throw std::invalid_argument("appendix_m_series: set and path dimensions differ");
  const double dt = path.grid().dt();
  std::vector<double> m(path.n_steps() + 1, 0.0);
  double integral = 0.0;
  double drift = 0.0;
  for (std::size_t k = 0; k < path.n_steps(); ++k) {
    const Matrix e = eta(k);
    if (static_cast<std::size_t>(e.rows()) != d || static_cast<std::size_t>(e.cols()) != d)
      throw std::invalid_argument(fmt::format("appendix_m_series: eta at step {} has wrong shape", k));
    const auto q0 = path.qvar(k);
    const auto q1 = path.qvar(k + 1);
    double tr = 0.0;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) tr += e(i, j) * (q1[i * d + j] - q0[i * d + j]);
    integral += tr;
    drift += 2.0 * g_matrix(set, e) * dt;
    m[k + 1] = integral - drift;
  }
  return m;
}

double appendix_m_check(const GPath& path, const CovarianceSet& set, const EtaFn& eta) {
  const auto m = appendix_m_series(path, set, eta);
  return *std::max_element(m.begin(), m.end());
}

void write_path_csv(std::ostream& out, const GPath& path) {
  const std::size_t d = path.dim();
  out << "t";
  for (std::size_t i = 1; i <= d; ++i) out << ",b_" << i;
  for (std::size_t i = 1; i <= d; ++i)
    for (std::size_t j = 1; j <= d; ++j) out << ",qvar_" << i << j;
  out << ",policy_choice\n";
  for (std::size_t k = 0; k <= path.n_steps(); ++k) {
    out << fmt::format("{}", path.grid().time(k));
    for (double v : path.b(k)) out << fmt::format(",{}", v);
    for (double v : path.qvar(k)) out << fmt::format(",{}", v);
    out << "," << (k < path.n_steps() ? path.member(k) : -1) << "\n";
  }
}

}  // namespace gcalc
