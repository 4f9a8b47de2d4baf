#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gcalc/config.hpp"
#include "gcalc/linalg.hpp"
#include "gcalc/uncertainty.hpp"

namespace gcalc {

/// dX = F X dt + H X d<B> + C X dB with scalar B.
struct LinearGSystem {
  Matrix F, H, C;
  SigmaBand band;

  LinearGSystem(Matrix f, Matrix h, Matrix c, SigmaBand b);
  std::size_t n() const noexcept { return static_cast<std::size_t>(F.rows()); }
};

struct Certificate {
  enum class Kind { MsStable, QUnstable, Inconclusive };
  Kind kind = Kind::Inconclusive;
  Matrix P;
  double alpha = 0.0;   // extreme eigenvalue of sym(2PH + C^T P C)
  double margin = 0.0;  // eigenvalue slack of the deciding inequality
  // lambda_max(sym(PF) + I) <= -G(alpha): the stability LMI alone does not
  // imply the Riccati inequality (it bounds 2PF, not PF), this does.
  bool riccati_implied = false;
  std::string details;
};

std::string to_string(Certificate::Kind kind);

/// x^T sym(PF + I) x + G(x^T sym(2PH + C^T P C) x) for unit x.
double riccati_value(const LinearGSystem& sys, const Matrix& p, const Vector& x);

/// alpha = lambda_max(sym(2PH + C^T P C)); mean-square stable when
/// lambda_max(sym(2PF) + I) <= -G(alpha).
Certificate lmi_stable(const LinearGSystem& sys, const Matrix& p);

/// alpha = lambda_min(sym(2PH + C^T P C)); unstable when
/// lambda_min(sym(2PF) - I) >= -G(alpha).
Certificate lmi_unstable(const LinearGSystem& sys, const Matrix& p);

struct PRange {
  bool empty = true;
  double lo = 0.0;  // open interval (lo, hi)
  double hi = 0.0;
  char which_case = '-';
  std::string reason;
};

/// Admissible p for the scalar model with drift alpha1 and noise bounds
/// alpha2 <= |noise| <= alpha3.
PRange corollary_p_range(double alpha1, double alpha2, double alpha3);

/// I followed by `count` diagonal matrices with log-uniform entries in [0.01, 10].
std::vector<Matrix> default_p_candidates(std::size_t n, std::size_t count = 50, std::uint64_t seed = 0);

/// Best lmi_stable margin over the candidates.
Certificate search_p(const LinearGSystem& sys, const std::vector<Matrix>& candidates);

LinearGSystem linear_system_from_json(const ConfigNode& node);
json certificate_to_json(const Certificate& cert);

}  // namespace gcalc
