#include "doctest.h"

#include <random>

#include "gcalc/linalg.hpp"

using namespace gcalc;

TEST_CASE("jacobi eigenvalues match a known spectrum") {
  Matrix a(3, 3);
  a << 2, -1, 0, -1, 2, -1, 0, -1, 2;
  const auto e = jacobi_eigen(a);
  // tridiagonal Toeplitz: 2 - 2 cos(k pi / 4)
  CHECK(e.values(0) == doctest::Approx(2.0 - std::sqrt(2.0)).epsilon(1e-12));
  CHECK(e.values(1) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(e.values(2) == doctest::Approx(2.0 + std::sqrt(2.0)).epsilon(1e-12));
  const Matrix back = e.vectors * e.values.asDiagonal() * e.vectors.transpose();
  CHECK((back - a).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("jacobi agrees with Eigen's self-adjoint solver on random matrices") {
  std::mt19937_64 gen(7);
  std::normal_distribution<double> z;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + trial % 8;
    Matrix a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = z(gen);
    const Matrix s = symmetrize(a);
    Eigen::SelfAdjointEigenSolver<Matrix> ref(s);
    const auto mine = jacobi_eigen(a);
    for (int i = 0; i < n; ++i) CHECK(mine.values(i) == doctest::Approx(ref.eigenvalues()(i)).epsilon(1e-10));
    CHECK(lambda_max(a) == doctest::Approx(ref.eigenvalues()(n - 1)).epsilon(1e-10));
    CHECK(lambda_min(a) == doctest::Approx(ref.eigenvalues()(0)).epsilon(1e-10));
  }
}

TEST_CASE("psd_sqrt handles definite, semidefinite and indefinite input") {
  Matrix spd(2, 2);
  spd << 2, 0.5, 0.5, 1;
  Matrix l = psd_sqrt(spd);
  CHECK((l * l.transpose() - spd).cwiseAbs().maxCoeff() < 1e-14);

  Matrix rank1(2, 2);
  rank1 << 1, 1, 1, 1;
  l = psd_sqrt(rank1);
  CHECK((l * l.transpose() - rank1).cwiseAbs().maxCoeff() < 1e-12);

  Matrix zero = Matrix::Zero(2, 2);
  l = psd_sqrt(zero);
  CHECK(l.cwiseAbs().maxCoeff() == 0.0);

  Matrix bad(2, 2);
  bad << 1, 0, 0, -1;
  CHECK_THROWS_AS(psd_sqrt(bad), std::invalid_argument);
}

TEST_CASE("symmetry helpers") {
  Matrix a(2, 2);
  a << 1, 2, 4, 3;
  CHECK_FALSE(is_symmetric(a));
  CHECK(is_symmetric(symmetrize(a)));
  CHECK(symmetrize(a)(0, 1) == 3.0);
}
