#pragma once

#include <cstdint>
#include <random>

namespace robrad::rng {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of the stream used by replication `index` (and redraw `attempt`)
/// under base seed `seed`. Streams depend only on (seed, index, attempt),
/// never on thread assignment, so serial and parallel runs agree.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index,
                                    std::uint64_t attempt = 0) noexcept {
  return mix64(mix64(seed) ^ mix64(index * 0x632be59bd9b4e019ULL + attempt + 1));
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed, std::uint64_t index,
                          std::uint64_t attempt = 0) {
  return Engine(stream_seed(seed, index, attempt));
}

}  // namespace robrad::rng
