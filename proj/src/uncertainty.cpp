#include "gcalc/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace gcalc {

SigmaBand::SigmaBand(double sigma2_lo, double sigma2_hi) : lo_(sigma2_lo), hi_(sigma2_hi) {
  if (!std::isfinite(lo_) || !std::isfinite(hi_))
    throw std::invalid_argument("SigmaBand: variances must be finite");
  if (!(lo_ > 0.0))
    throw std::invalid_argument(fmt::format("SigmaBand: lower variance must be positive, got {}", lo_));
  if (lo_ > hi_)
    throw std::invalid_argument(fmt::format("SigmaBand: lower variance {} exceeds upper {}", lo_, hi_));
}

double SigmaBand::sigma_hi() const { return std::sqrt(hi_); }
double SigmaBand::sigma_lo() const { return std::sqrt(lo_); }

double g_scalar(const SigmaBand& band, double a) noexcept {
  return 0.5 * (band.hi() * std::max(a, 0.0) - band.lo() * std::max(-a, 0.0));
}

CovarianceSet::CovarianceSet(std::vector<Matrix> members) : dim_(0), members_(std::move(members)) {
  if (members_.empty()) throw std::invalid_argument("CovarianceSet: member list is empty");
  dim_ = static_cast<std::size_t>(members_.front().rows());
  if (dim_ == 0) throw std::invalid_argument("CovarianceSet: dimension must be at least 1");
  for (std::size_t k = 0; k < members_.size(); ++k) {
    Matrix& m = members_[k];
    if (static_cast<std::size_t>(m.rows()) != dim_ || static_cast<std::size_t>(m.cols()) != dim_)
      throw std::invalid_argument(fmt::format("CovarianceSet: member {} is not {}x{}", k, dim_, dim_));
    if (!m.allFinite()) throw std::invalid_argument(fmt::format("CovarianceSet: member {} is not finite", k));
    if (!is_symmetric(m, 1e-12))
      throw std::invalid_argument(fmt::format("CovarianceSet: member {} is not symmetric", k));
    m = symmetrize(m);
    if (lambda_min(m) < -1e-12)
      throw std::invalid_argument(fmt::format("CovarianceSet: member {} is not positive semidefinite", k));
  }
}

CovarianceSet CovarianceSet::from_band(const SigmaBand& band) {
  CovarianceSet set({Matrix::Constant(1, 1, band.lo()), Matrix::Constant(1, 1, band.hi())});
  set.band_ = band;
  return set;
}

std::size_t CovarianceSet::lowest_member() const {
  auto it = std::min_element(members_.begin(), members_.end(),
                             [](const Matrix& a, const Matrix& b) { return a.trace() < b.trace(); });
  return static_cast<std::size_t>(it - members_.begin());
}

std::size_t CovarianceSet::highest_member() const {
  auto it = std::max_element(members_.begin(), members_.end(),
                             [](const Matrix& a, const Matrix& b) { return a.trace() < b.trace(); });
  return static_cast<std::size_t>(it - members_.begin());
}

double g_matrix(const CovarianceSet& set, const Matrix& a) {
  if (static_cast<std::size_t>(a.rows()) != set.dim() || static_cast<std::size_t>(a.cols()) != set.dim())
    throw std::invalid_argument(
        fmt::format("g_matrix: argument is {}x{}, set dimension is {}", a.rows(), a.cols(), set.dim()));
  if (set.band()) return g_scalar(*set.band(), a(0, 0));
  const Matrix s = symmetrize(a);
  double best = -std::numeric_limits<double>::infinity();
  for (const Matrix& gamma : set.members()) best = std::max(best, (gamma.cwiseProduct(s)).sum());
  return 0.5 * best;
}

CovarianceSet covariance_set_from_json(const ConfigNode& node) {
  if (node.has("band")) {
    const ConfigNode b = node.at("band");
    if (b.size() != 2) b.fail("band must be [lo, hi]");
    try {
      return CovarianceSet::from_band(SigmaBand(b.at(0).number(), b.at(1).number()));
    } catch (const std::invalid_argument& e) {
      b.fail(e.what());
    }
  }
  if (!node.has("members")) node.fail("expected either \"band\" or \"dim\" + \"members\"");
  const auto dim = node.at("dim").integer();
  if (dim < 1) node.at("dim").fail("dim must be at least 1");
  const ConfigNode members = node.at("members");
  if (members.size() == 0) members.fail("member list is empty");
  std::vector<Matrix> out;
  for (std::size_t k = 0; k < members.size(); ++k) {
    const ConfigNode m = members.at(k);
    const std::vector<double> flat = m.numbers();
    if (flat.size() != static_cast<std::size_t>(dim * dim))
      m.fail(fmt::format("expected {} row-major entries", dim * dim));
    Matrix mat(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i)
      for (Eigen::Index j = 0; j < dim; ++j) mat(i, j) = flat[static_cast<std::size_t>(i * dim + j)];
    out.push_back(std::move(mat));
  }
  try {
    return CovarianceSet(std::move(out));
  } catch (const std::invalid_argument& e) {
    members.fail(e.what());
  }
}

}  // namespace gcalc
