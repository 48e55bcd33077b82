#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace pcdiag {

using Rng = std::mt19937_64;

/// Stable (platform-independent) stream derivation: splitmix64 over the seed,
/// an FNV-1a hash of the tag, and an index. Used so that parallel jobs draw
/// from streams that depend only on (seed, sample index, metric name).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
  return Rng(derive_seed(seed, tag, index));
}

}  // namespace pcdiag
