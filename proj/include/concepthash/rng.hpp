// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace concepthash {

using Rng = std::mt19937_64;

/// Mixes a base seed with a stream id (splitmix64 finalizer) so that
/// independent consumers get decorrelated, reproducible streams.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Normal(0, stddev) truncated to [-2 stddev, 2 stddev] by resampling.
inline double truncated_normal(Rng& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (;;) {
    const double v = dist(rng);
    if (v >= -2.0 * stddev && v <= 2.0 * stddev) return v;
  }
}

inline std::vector<double> truncated_normal_vector(Rng& rng, std::size_t n, double stddev) {
  std::vector<double> out(n);
  for (auto& v : out) v = truncated_normal(rng, stddev);
  return out;
}

}  // namespace concepthash
