#pragma once

// Portable draws on top of mt19937_64. The standard distributions are
// implementation-defined, so schedules would differ between standard
// libraries; these do not.

#include <cstdint>
#include <random>

namespace tesim::detail {

// Uniform integer in [lo, hi] by rejection.
inline std::int64_t uniform_int(std::mt19937_64& rng, std::int64_t lo,
                                std::int64_t hi) {
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return lo + static_cast<std::int64_t>(rng());
  const std::uint64_t threshold = (0 - span) % span;
  for (;;) {
    const std::uint64_t x = rng();
    if (x >= threshold) return lo + static_cast<std::int64_t>(x % span);
  }
}

inline double unit_closed_open(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double unit_open_closed(std::mt19937_64& rng) {
  return static_cast<double>((rng() >> 11) + 1) * 0x1.0p-53;
}

}  // namespace tesim::detail
