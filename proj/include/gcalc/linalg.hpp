#pragma once

#include <Eigen/Dense>

namespace gcalc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// (A + A^T) / 2
Matrix symmetrize(const Matrix& a);

struct SymmetricEigen {
  Vector values;   // ascending
  Matrix vectors;  // columns
};

/// Cyclic Jacobi rotations for a symmetric matrix. Only the symmetric part of
/// `a` is used. Converges when the off-diagonal Frobenius norm drops below
/// `tol` times the matrix norm.
SymmetricEigen jacobi_eigen(const Matrix& a, double tol = 1e-12, int max_sweeps = 100);

double lambda_max(const Matrix& a);
double lambda_min(const Matrix& a);

bool is_symmetric(const Matrix& a, double tol = 1e-12);

/// Square root L with L L^T = a. Cholesky first; for semidefinite input the
/// eigen-decomposition fallback clamps eigenvalues below `clamp` to zero.
/// Throws std::invalid_argument if an eigenvalue is below -clamp.
Matrix psd_sqrt(const Matrix& a, double clamp = 1e-12);

}  // namespace gcalc
