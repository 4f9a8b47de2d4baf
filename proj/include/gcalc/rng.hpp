#pragma once

#include <array>
#include <cstdint>

namespace gcalc::rng {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Every draw is
// a pure function of (key, counter), so streams can be addressed directly.
using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

Counter philox4x32(Counter ctr, Key key);

/// Uniform on the open interval (0, 1) from 64 random bits.
double to_open_unit(std::uint64_t bits);

/// Standard normal draw addressed by (seed, stream, step, component).
/// `stream` is the path index; `step` must fit in 32 bits.
double standard_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t step,
                       std::uint32_t component);

/// Uniform (0,1) draw addressed the same way, on a separate lane from the normals.
double uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t step, std::uint32_t component);

}  // namespace gcalc::rng
