#include "gcalc/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gcalc::rng {
namespace {

constexpr std::uint32_t kMulA = 0xD2511F53;
constexpr std::uint32_t kMulB = 0xCD9E8D57;
constexpr std::uint32_t kWeylA = 0x9E3779B9;
constexpr std::uint32_t kWeylB = 0xBB67AE85;

// The top bit of the component word separates the uniform lane from the normal lane.
constexpr std::uint32_t kUniformLane = 0x80000000u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo, std::uint32_t& hi) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  lo = static_cast<std::uint32_t>(p);
  hi = static_cast<std::uint32_t>(p >> 32);
}

Counter block(std::uint64_t seed, std::uint64_t stream, std::uint64_t step, std::uint32_t word) {
  if (step >> 32) throw std::out_of_range("rng: step index exceeds 32 bits");
  const Counter ctr{static_cast<std::uint32_t>(step), word, static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32)};
  const Key key{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return philox4x32(ctr, key);
}

}  // namespace

Counter philox4x32(Counter ctr, Key key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t lo0, hi0, lo1, hi1;
    mulhilo(kMulA, ctr[0], lo0, hi0);
    mulhilo(kMulB, ctr[2], lo1, hi1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeylA;
    key[1] += kWeylB;
  }
  return ctr;
}

double to_open_unit(std::uint64_t bits) {
  return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

double standard_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t step,
                       std::uint32_t component) {
  // Box-Muller: one Philox block gives two uniforms, hence two normals.
  const Counter r = block(seed, stream, step, (component / 2) & ~kUniformLane);
  const double u1 = to_open_unit((static_cast<std::uint64_t>(r[0]) << 32) | r[1]);
  const double u2 = to_open_unit((static_cast<std::uint64_t>(r[2]) << 32) | r[3]);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return (component % 2 == 0) ? radius * std::cos(angle) : radius * std::sin(angle);
}

double uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t step, std::uint32_t component) {
  const Counter r = block(seed, stream, step, (component / 2) | kUniformLane);
  const std::size_t off = (component % 2) * 2;
  return to_open_unit((static_cast<std::uint64_t>(r[off]) << 32) | r[off + 1]);
}

}  // namespace gcalc::rng
