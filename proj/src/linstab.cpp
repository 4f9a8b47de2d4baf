#include "gcalc/linstab.hpp"

#include <cmath>
#include <optional>

#include <fmt/format.h>

#include "gcalc/parallel.hpp"
#include "gcalc/rng.hpp"

namespace gcalc {

namespace {

void check_square(const Matrix& m, Eigen::Index n, const char* name) {
  if (m.rows() != n || m.cols() != n)
    throw std::invalid_argument(fmt::format("linear system: {} must be {}x{}", name, n, n));
  if (!m.allFinite()) throw std::invalid_argument(fmt::format("linear system: {} has non-finite entries", name));
}

void require_spd(const Matrix& p, std::size_t n) {
  const auto dim = static_cast<Eigen::Index>(n);
  if (p.rows() != dim || p.cols() != dim) throw std::invalid_argument(fmt::format("P must be {}x{}", n, n));
  if (!p.allFinite()) throw std::invalid_argument("P has non-finite entries");
  const double scale = std::max(1.0, p.cwiseAbs().maxCoeff());
  if ((p - p.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) throw std::invalid_argument("P is not symmetric");
  const double lmin = lambda_min(p);
  if (!(lmin > 0.0)) throw std::invalid_argument(fmt::format("P is not positive definite (smallest eigenvalue {})", lmin));
}

Matrix alpha_matrix(const LinearGSystem& sys, const Matrix& p) {
  return symmetrize(2.0 * p * sys.H + sys.C.transpose() * p * sys.C);
}

Matrix identity(std::size_t n) {
  return Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
}

}  // namespace

LinearGSystem::LinearGSystem(Matrix f, Matrix h, Matrix c, SigmaBand b)
    : F(std::move(f)), H(std::move(h)), C(std::move(c)), band(b) {
  if (F.rows() == 0) throw std::invalid_argument("linear system: F is empty");
  check_square(F, F.rows(), "F");
  check_square(H, F.rows(), "H");
  check_square(C, F.rows(), "C");
}

std::string to_string(Certificate::Kind kind) {
  switch (kind) {
    case Certificate::Kind::MsStable: return "ms_stable";
    case Certificate::Kind::QUnstable: return "q_unstable";
    case Certificate::Kind::Inconclusive: return "inconclusive";
  }
  return "?";
}

double riccati_value(const LinearGSystem& sys, const Matrix& p, const Vector& x) {
  require_spd(p, sys.n());
  if (x.size() != static_cast<Eigen::Index>(sys.n())) throw std::invalid_argument("riccati_value: x has the wrong dimension");
  if (std::abs(x.norm() - 1.0) > 1e-9) throw std::invalid_argument("riccati_value: x must be a unit vector");
  const double lin = x.dot(symmetrize(p * sys.F + identity(sys.n())) * x);
  return lin + g_scalar(sys.band, x.dot(alpha_matrix(sys, p) * x));
}

Certificate lmi_stable(const LinearGSystem& sys, const Matrix& p) {
  require_spd(p, sys.n());
  Certificate cert;
  cert.P = p;
  cert.alpha = lambda_max(alpha_matrix(sys, p));
  const double threshold = -g_scalar(sys.band, cert.alpha);
  const double lhs = lambda_max(symmetrize(2.0 * p * sys.F) + identity(sys.n()));
  cert.margin = threshold - lhs;
  cert.kind = cert.margin >= 0.0 ? Certificate::Kind::MsStable : Certificate::Kind::Inconclusive;
  const double riccati_lhs = lambda_max(symmetrize(p * sys.F) + identity(sys.n()));
  cert.riccati_implied = riccati_lhs <= threshold;
  cert.details = fmt::format("lambda_max(sym(2PF) + I) = {} vs -G(alpha) = {}; lambda_max(sym(PF) + I) = {}", lhs,
                             threshold, riccati_lhs);
  return cert;
}

Certificate lmi_unstable(const LinearGSystem& sys, const Matrix& p) {
  require_spd(p, sys.n());
  Certificate cert;
  cert.P = p;
  cert.alpha = lambda_min(alpha_matrix(sys, p));
  const double threshold = -g_scalar(sys.band, cert.alpha);
  const double lhs = lambda_min(symmetrize(2.0 * p * sys.F) - identity(sys.n()));
  cert.margin = lhs - threshold;
  cert.kind = cert.margin >= 0.0 ? Certificate::Kind::QUnstable : Certificate::Kind::Inconclusive;
  cert.details = fmt::format("lambda_min(sym(2PF) - I) = {} vs -G(alpha) = {}", lhs, threshold);
  return cert;
}

PRange corollary_p_range(double alpha1, double alpha2, double alpha3) {
  if (!(alpha2 >= 0.0) || !(alpha2 < alpha3))
    throw std::invalid_argument(fmt::format("corollary_p_range: need 0 <= alpha2 < alpha3, got {} and {}", alpha2, alpha3));
  PRange r;
  if (alpha1 < 0.0) {
    r.empty = false;
    r.hi = 2.0 + std::abs(alpha1) / (alpha3 * alpha3);
    r.which_case = 'a';
  } else if (alpha1 < alpha2 * alpha2) {
    r.empty = false;
    r.hi = 2.0 - 2.0 * alpha1 / (alpha2 * alpha2);
    r.which_case = 'b';
  } else {
    r.reason = fmt::format("alpha1 = {} is neither negative nor below alpha2^2 = {}", alpha1, alpha2 * alpha2);
  }
  return r;
}

std::vector<Matrix> default_p_candidates(std::size_t n, std::size_t count, std::uint64_t seed) {
  std::vector<Matrix> out{identity(n)};
  const double lo = std::log(0.01);
  const double span = std::log(10.0) - lo;
  for (std::size_t c = 0; c < count; ++c) {
    Matrix p = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
      p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) =
          std::exp(lo + span * rng::uniform(seed, c, 0, static_cast<std::uint32_t>(i)));
    out.push_back(std::move(p));
  }
  return out;
}

Certificate search_p(const LinearGSystem& sys, const std::vector<Matrix>& candidates) {
  if (candidates.empty()) throw std::invalid_argument("search_p: candidate list is empty");
  std::vector<Certificate> certs(candidates.size());
  parallel_for(candidates.size(), [&](std::size_t i) { certs[i] = lmi_stable(sys, candidates[i]); });
  std::size_t best = 0;
  for (std::size_t i = 1; i < certs.size(); ++i)
    if (certs[i].margin > certs[best].margin) best = i;
  Certificate out = certs[best];
  out.details += fmt::format("; best of {} candidates (#{})", candidates.size(), best);
  return out;
}

namespace {

Matrix square_from_json(const ConfigNode& node, std::size_t n) {
  const std::vector<double> v = node.numbers();
  if (v.size() != n * n) node.fail(fmt::format("expected {} row-major entries, got {}", n * n, v.size()));
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[i * n + j];
  return m;
}

}  // namespace

LinearGSystem linear_system_from_json(const ConfigNode& node) {
  const std::int64_t n = node.at("n").integer();
  if (n < 1) node.at("n").fail("must be at least 1");
  const auto dim = static_cast<std::size_t>(n);
  const Matrix zero = Matrix::Zero(n, n);
  Matrix f = square_from_json(node.at("F"), dim);
  Matrix h = node.has("H") ? square_from_json(node.at("H"), dim) : zero;
  Matrix c = node.has("C") ? square_from_json(node.at("C"), dim) : zero;
  const std::vector<double> b = node.at("band").numbers();
  if (b.size() != 2) node.at("band").fail("expected [sigma2_lo, sigma2_hi]");
  std::optional<SigmaBand> band;
  try {
    band.emplace(b[0], b[1]);
  } catch (const std::invalid_argument& e) {
    node.at("band").fail(e.what());
  }
  try {
    return LinearGSystem(std::move(f), std::move(h), std::move(c), *band);
  } catch (const std::invalid_argument& e) {
    node.fail(e.what());
  }
}

json certificate_to_json(const Certificate& cert) {
  json p = json::array();
  for (Eigen::Index i = 0; i < cert.P.rows(); ++i)
    for (Eigen::Index j = 0; j < cert.P.cols(); ++j) p.push_back(cert.P(i, j));
  return {{"kind", to_string(cert.kind)},
          {"alpha", cert.alpha},
          {"margin", cert.margin},
          {"riccati_implied", cert.riccati_implied},
          {"P", p},
          {"details", cert.details}};
}

}  // namespace gcalc
