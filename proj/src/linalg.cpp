#include "gcalc/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace gcalc {

Matrix symmetrize(const Matrix& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("symmetrize: matrix is not square");
  return 0.5 * (a + a.transpose());
}

SymmetricEigen jacobi_eigen(const Matrix& input, double tol, int max_sweeps) {
  Matrix a = symmetrize(input);
  const Eigen::Index n = a.rows();
  Matrix v = Matrix::Identity(n, n);

  const double scale = std::max(a.norm(), 1e-300);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(2.0 * off) <= tol * scale) break;

    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto i, auto j) { return a(i, i) < a(j, j); });

  SymmetricEigen out{Vector(n), Matrix(n, n)};
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values(k) = a(order[k], order[k]);
    out.vectors.col(k) = v.col(order[k]);
  }
  return out;
}

double lambda_max(const Matrix& a) { return jacobi_eigen(a).values.maxCoeff(); }
double lambda_min(const Matrix& a) { return jacobi_eigen(a).values.minCoeff(); }

bool is_symmetric(const Matrix& a, double tol) {
  if (a.rows() != a.cols()) return false;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = i + 1; j < a.cols(); ++j)
      if (std::abs(a(i, j) - a(j, i)) > tol) return false;
  return true;
}

Matrix psd_sqrt(const Matrix& a, double clamp) {
  const Matrix s = symmetrize(a);
  Eigen::LLT<Matrix> llt(s);
  if (llt.info() == Eigen::Success) {
    Matrix l = llt.matrixL();
    if (l.allFinite()) return l;
  }
  SymmetricEigen eig = jacobi_eigen(s);
  if (eig.values.minCoeff() < -clamp)
    throw std::invalid_argument("psd_sqrt: matrix has a negative eigenvalue");
  Vector root = eig.values.unaryExpr([clamp](double x) { return x < clamp ? 0.0 : std::sqrt(x); });
  return eig.vectors * root.asDiagonal();
}

}  // namespace gcalc
