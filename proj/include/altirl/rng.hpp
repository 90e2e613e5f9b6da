#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include <Eigen/Core>

namespace altirl {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Counter-based substream seed: the same (master, tags) always yields the same
// seed, independently of any other stream.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = splitmix64(master);
  for (const std::uint64_t t : tags) {
    h = splitmix64(h ^ splitmix64(t + 0x632BE59BD9B4E019ULL));
  }
  return h;
}

// Stable tag for a string literal, so stream names read well at call sites.
constexpr std::uint64_t stream_tag(const char* name) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const char* p = name; *p != '\0'; ++p) {
    h ^= static_cast<unsigned char>(*p);
    h *= 1099511628211ULL;
  }
  return h;
}

inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

// Draws an index from the (unnormalized is fine) nonnegative weights.
template <typename Derived>
Eigen::Index sample_categorical(const Eigen::DenseBase<Derived>& weights, Rng& rng) {
  const double total = weights.sum();
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  const Eigen::Index n = weights.size();
  for (Eigen::Index k = 0; k < n; ++k) {
    acc += weights(k);
    if (u < acc) return k;
  }
  for (Eigen::Index k = n - 1; k >= 0; --k) {
    if (weights(k) > 0.0) return k;
  }
  return n - 1;
}

}  // namespace altirl
