#include "doctest.h"

#include <cmath>
#include <set>

#include "gcalc/rng.hpp"
#include "oracles.hpp"

using namespace gcalc::rng;

TEST_CASE("philox4x32-10 known-answer vectors") {
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == Counter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        Counter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        Counter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("open unit interval excludes both ends") {
  CHECK(to_open_unit(0) > 0.0);
  CHECK(to_open_unit(~0ULL) < 1.0);
}

TEST_CASE("draws are pure functions of their address") {
  CHECK(standard_normal(1, 2, 3, 4) == standard_normal(1, 2, 3, 4));
  CHECK(standard_normal(1, 2, 3, 4) != standard_normal(1, 2, 3, 5));
  CHECK(standard_normal(1, 2, 3, 4) != standard_normal(1, 3, 3, 4));
  CHECK(standard_normal(1, 2, 3, 4) != standard_normal(2, 2, 3, 4));
  CHECK(uniform(1, 2, 3, 4) != uniform(1, 2, 3, 5));
  CHECK_THROWS_AS(standard_normal(0, 0, 1ULL << 32, 0), std::out_of_range);
}

TEST_CASE("normal moments and tail frequencies") {
  const int n = 200000;
  double s1 = 0, s2 = 0, s3 = 0, s4 = 0;
  int tail = 0;
  const double q975 = oracle::normal_quantile(0.975);
  for (int i = 0; i < n; ++i) {
    const double z = standard_normal(42, static_cast<std::uint64_t>(i / 4), 0, static_cast<std::uint32_t>(i % 4));
    s1 += z;
    s2 += z * z;
    s3 += z * z * z;
    s4 += z * z * z * z;
    if (std::abs(z) > q975) ++tail;
  }
  CHECK(std::abs(s1 / n) < 5.0 / std::sqrt(double(n)));
  CHECK(std::abs(s2 / n - 1.0) < 5.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(s3 / n) < 5.0 * std::sqrt(15.0 / n));
  CHECK(std::abs(s4 / n - 3.0) < 5.0 * std::sqrt(96.0 / n));
  const double freq = double(tail) / n;
  CHECK(std::abs(freq - 0.05) < 5.0 * std::sqrt(0.05 * 0.95 / n));
}

TEST_CASE("paired Box-Muller components are uncorrelated") {
  const int n = 100000;
  double cross = 0;
  for (int i = 0; i < n; ++i) cross += standard_normal(9, i, 0, 0) * standard_normal(9, i, 0, 1);
  CHECK(std::abs(cross / n) < 5.0 / std::sqrt(double(n)));
}

TEST_CASE("uniform lane is uniform") {
  const int n = 100000;
  int bins[10] = {};
  for (int i = 0; i < n; ++i) {
    const double u = uniform(3, i, 7, 0);
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    ++bins[static_cast<int>(u * 10)];
  }
  double chi2 = 0;
  for (int b : bins) chi2 += (b - n / 10.0) * (b - n / 10.0) / (n / 10.0);
  CHECK(chi2 < 27.9);  // 99.9% point of chi^2_9
}
