#pragma once

#include <array>
#include <cstdint>

namespace blockcs {

// splitmix64: advances `state` and returns the next output.
uint64_t splitmix64_next(uint64_t& state);

// xoshiro256** seeded through splitmix64. The exact sequence is part of the
// artifact's reproducibility contract and is documented in the README so
// fixtures can be regenerated independently.
struct Xoshiro256 {
  std::array<uint64_t, 4> state{};

  explicit Xoshiro256(uint64_t seed, uint64_t stream = 0);

  uint64_t next();

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n), n >= 1, via the 128-bit multiply-high map.
  uint64_t bounded(uint64_t n) {
    return static_cast<uint64_t>((static_cast<__uint128_t>(next()) * n) >> 64);
  }
};

}  // namespace blockcs
