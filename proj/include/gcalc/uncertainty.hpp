#pragma once

#include <optional>
#include <vector>

#include "gcalc/config.hpp"
#include "gcalc/linalg.hpp"

namespace gcalc {

/// Volatility band [sigma2_lo, sigma2_hi] for a scalar G-Brownian motion.
/// Degenerate (zero) lower variance is rejected.
class SigmaBand {
 public:
  SigmaBand(double sigma2_lo, double sigma2_hi);

  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  double sigma_hi() const;
  double sigma_lo() const;
  bool contains(double variance) const noexcept { return variance >= lo_ && variance <= hi_; }

 private:
  double lo_;
  double hi_;
};

/// G(a) = (sigma2_hi * a^+ - sigma2_lo * a^-) / 2
double g_scalar(const SigmaBand& band, double a) noexcept;

/// Finite scenario set of covariance matrices; G(A) is half the largest
/// tr(gamma A) over the members.
class CovarianceSet {
 public:
  explicit CovarianceSet(std::vector<Matrix> members);
  static CovarianceSet from_band(const SigmaBand& band);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return members_.size(); }
  const Matrix& member(std::size_t i) const { return members_.at(i); }
  const std::vector<Matrix>& members() const noexcept { return members_; }

  /// Set when the set was built from a band (members {lo, hi} in that order).
  const std::optional<SigmaBand>& band() const noexcept { return band_; }

  /// Members with smallest / largest trace; for a band these are lo and hi.
  std::size_t lowest_member() const;
  std::size_t highest_member() const;

 private:
  std::size_t dim_;
  std::vector<Matrix> members_;
  std::optional<SigmaBand> band_;
};

/// Throws std::invalid_argument on dimension mismatch. The argument is
/// symmetrized first.
double g_matrix(const CovarianceSet& set, const Matrix& a);

/// {"band": [lo, hi]} or {"dim": d, "members": [[row-major d*d], ...]}
CovarianceSet covariance_set_from_json(const ConfigNode& node);

}  // namespace gcalc
