#pragma once

// Independent reference computations for the tests. Each one deliberately
// takes a different (slower, simpler) route than the library code it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

#include "gcalc/scenario.hpp"

namespace oracle {

// sup over a fine grid of sigma^2 in [lo, hi] of sigma^2 a / 2
inline double g_grid(double lo, double hi, double a, int points = 2001) {
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < points; ++i) {
    const double s = lo + (hi - lo) * i / (points - 1);
    best = std::max(best, 0.5 * s * a);
  }
  return best;
}

// sup of tr(gamma A) / 2 over random convex combinations of the members plus
// the members themselves; a finite set's hull adds nothing above its vertices.
inline double g_hull(const std::vector<gcalc::Matrix>& members, const gcalc::Matrix& a, int mixes = 200) {
  double best = -std::numeric_limits<double>::infinity();
  auto tr = [&](const gcalc::Matrix& g) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < g.rows(); ++i)
      for (Eigen::Index j = 0; j < g.cols(); ++j) s += g(i, j) * a(j, i);
    return 0.5 * s;
  };
  for (const auto& m : members) best = std::max(best, tr(m));
  unsigned state = 12345u;
  for (int k = 0; k < mixes; ++k) {
    gcalc::Matrix mix = gcalc::Matrix::Zero(a.rows(), a.cols());
    double total = 0.0;
    std::vector<double> w(members.size());
    for (auto& x : w) {
      state = state * 1664525u + 1013904223u;
      x = (state >> 8) / double(1u << 24);
      total += x;
    }
    for (std::size_t i = 0; i < members.size(); ++i) mix += (w[i] / total) * members[i];
    best = std::max(best, tr(mix));
  }
  return best;
}

// Gauss-Hermite nodes/weights for the weight e^{-x^2} (Newton on the
// three-term recurrence), then E f(s Z) = pi^{-1/2} sum w f(s sqrt2 x).
inline double normal_expectation(const std::function<double(double)>& f, double sd, int n = 80) {
  std::vector<double> x(n), w(n);
  const int m = (n + 1) / 2;
  double z = 0.0;
  for (int i = 0; i < m; ++i) {
    if (i == 0) z = std::sqrt(2.0 * n + 1) - 1.85575 * std::pow(2.0 * n + 1, -0.16667);
    else if (i == 1) z -= 1.14 * std::pow(double(n), 0.426) / z;
    else if (i == 2) z = 1.86 * z - 0.86 * x[0];
    else if (i == 3) z = 1.91 * z - 0.91 * x[1];
    else z = 2.0 * z - x[i - 2];
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = std::pow(std::numbers::pi, -0.25), p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(double(j) / (j + 1)) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-14) break;
    }
    x[i] = z;
    x[n - 1 - i] = -z;
    w[i] = w[n - 1 - i] = 2.0 / (pp * pp);
  }
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += w[i] * f(sd * std::numbers::sqrt2 * x[i]);
  return s / std::sqrt(std::numbers::pi);
}

// O(n^2) scan of every grid pair.
inline double qvar_pairs(const gcalc::GPath& path, double lo, double hi) {
  double worst = -std::numeric_limits<double>::infinity();
  const auto& g = path.grid();
  for (std::size_t i = 0; i <= path.n_steps(); ++i)
    for (std::size_t j = i + 1; j <= path.n_steps(); ++j) {
      const double dq = path.qvar(j)[0] - path.qvar(i)[0];
      const double dt = g.time(j) - g.time(i);
      worst = std::max({worst, lo * dt - dq, dq - hi * dt});
    }
  return worst;
}

// Standard normal quantile by bisection on erfc.
inline double normal_quantile(double p) {
  double a = -10.0, b = 10.0;
  for (int i = 0; i < 200; ++i) {
    const double m = 0.5 * (a + b);
    if (0.5 * std::erfc(-m / std::numbers::sqrt2) < p) a = m;
    else b = m;
  }
  return 0.5 * (a + b);
}

}  // namespace oracle
