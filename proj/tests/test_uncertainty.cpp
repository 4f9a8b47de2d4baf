#include "doctest.h"

#include <random>

#include "gcalc/uncertainty.hpp"
#include "oracles.hpp"

using namespace gcalc;

namespace {

Matrix random_symmetric(std::mt19937_64& gen, int d) {
  std::normal_distribution<double> z;
  Matrix a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = z(gen);
  return symmetrize(a);
}

Matrix random_psd(std::mt19937_64& gen, int d) {
  std::normal_distribution<double> z;
  Matrix a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = z(gen);
  return a * a.transpose();
}

}  // namespace

TEST_CASE("band validation") {
  CHECK_THROWS_AS(SigmaBand(0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(SigmaBand(2.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(SigmaBand(1.0, INFINITY), std::invalid_argument);
  CHECK_NOTHROW(SigmaBand(1.0, 1.0));
  const SigmaBand b(1.0, 4.0);
  CHECK(b.sigma_hi() == 2.0);
  CHECK(b.contains(2.5));
  CHECK_FALSE(b.contains(4.5));
}

TEST_CASE("g_scalar against the sigma grid") {
  const SigmaBand band(1.0, 2.0);
  CHECK(g_scalar(band, 0.0) == 0.0);
  CHECK(g_scalar(band, 1.0) == doctest::Approx(oracle::g_grid(1.0, 2.0, 1.0)));
  CHECK(g_scalar(band, 1.0) == 1.0);
  CHECK(g_scalar(band, -1.0) == -0.5);
  CHECK(g_scalar(band, -1.0) == doctest::Approx(oracle::g_grid(1.0, 2.0, -1.0)));
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int i = 0; i < 500; ++i) {
    const double a = u(gen);
    CHECK(g_scalar(band, a) == doctest::Approx(oracle::g_grid(1.0, 2.0, a)).epsilon(1e-12));
  }
}

TEST_CASE("g_matrix examples") {
  CovarianceSet identity({Matrix::Identity(2, 2)});
  CHECK(g_matrix(identity, Matrix::Identity(2, 2)) == 1.0);

  const auto band_set = CovarianceSet::from_band(SigmaBand(1.0, 2.0));
  CHECK(g_matrix(band_set, Matrix::Constant(1, 1, 1.0)) == 1.0);
  CHECK(band_set.size() == 2);
  CHECK(band_set.lowest_member() == 0);
  CHECK(band_set.highest_member() == 1);

  Matrix e1 = Matrix::Zero(2, 2), e2 = Matrix::Zero(2, 2);
  e1(0, 0) = 1;
  e2(1, 1) = 1;
  CovarianceSet axes({e1, e2});
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 4;
  a(1, 1) = -4;
  CHECK(g_matrix(axes, a) == 2.0);
  CHECK(g_matrix(axes, a) == doctest::Approx(oracle::g_hull(axes.members(), a)));
  CHECK_THROWS_AS(g_matrix(axes, Matrix::Identity(3, 3)), std::invalid_argument);
}

TEST_CASE("covariance set validation") {
  Matrix asym(2, 2);
  asym << 1, 0.5, 0, 1;
  CHECK_THROWS_AS(CovarianceSet({asym}), std::invalid_argument);
  Matrix indefinite(2, 2);
  indefinite << 1, 0, 0, -1;
  CHECK_THROWS_AS(CovarianceSet({indefinite}), std::invalid_argument);
  CHECK_THROWS_AS(CovarianceSet(std::vector<Matrix>{}), std::invalid_argument);
  CHECK_THROWS_AS(CovarianceSet({Matrix::Identity(2, 2), Matrix::Identity(3, 3)}), std::invalid_argument);
}

TEST_CASE("sublinearity, monotonicity and homogeneity on random inputs") {
  std::mt19937_64 gen(2);
  for (int d : {1, 2, 3}) {
    std::vector<Matrix> members;
    for (int k = 0; k < 4; ++k) members.push_back(random_psd(gen, d));
    const CovarianceSet set(members);
    for (int trial = 0; trial < 1000; ++trial) {
      const Matrix a = random_symmetric(gen, d);
      const Matrix b = random_symmetric(gen, d);
      CHECK(g_matrix(set, a + b) <= g_matrix(set, a) + g_matrix(set, b) + 1e-10);
      const Matrix bigger = a + random_psd(gen, d);
      CHECK(g_matrix(set, a) <= g_matrix(set, bigger) + 1e-10);
      const double lambda = std::uniform_real_distribution<double>(0, 5)(gen);
      CHECK(g_matrix(set, lambda * a) == doctest::Approx(lambda * g_matrix(set, a)).epsilon(1e-14));
    }
    const Matrix a = random_symmetric(gen, d);
    CHECK(g_matrix(set, a) == doctest::Approx(oracle::g_hull(members, a)).epsilon(1e-12));
  }
}

TEST_CASE("band and two-member set agree") {
  const SigmaBand band(0.5, 3.0);
  const CovarianceSet explicit_set({Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, 3.0)});
  for (double a : {-3.0, -0.1, 0.0, 0.2, 7.0}) {
    CHECK(g_matrix(explicit_set, Matrix::Constant(1, 1, a)) == doctest::Approx(g_scalar(band, a)));
    CHECK(g_scalar(band, a) == doctest::Approx(oracle::g_grid(0.5, 3.0, a)));
  }
}

TEST_CASE("covariance sets from JSON") {
  const json band = json::parse(R"({"band": [1, 2]})");
  const auto s1 = covariance_set_from_json(ConfigNode(band));
  CHECK(s1.band().has_value());
  CHECK(s1.band()->hi() == 2.0);

  const json members = json::parse(R"({"dim": 2, "members": [[1,0,0,1],[2,0.5,0.5,1]]})");
  const auto s2 = covariance_set_from_json(ConfigNode(members));
  CHECK(s2.dim() == 2);
  CHECK(s2.size() == 2);
  CHECK(s2.member(1)(0, 1) == 0.5);

  const json bad = json::parse(R"({"dim": 2, "members": [[1,0,0]]})");
  try {
    covariance_set_from_json(ConfigNode(bad));
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(e.pointer().find("/members/0") == 0);
  }
}
