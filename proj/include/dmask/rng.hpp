#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace dmask {

/// splitmix64 finalizer; derives well-mixed child seeds from a root.
inline uint64_t derive_seed(uint64_t root, uint64_t index) {
  uint64_t x = root + 0x9E3779B97F4A7C15ULL * (index + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seeded random stream derived from a root seed and a stream name.
///
/// All randomness in the project flows through named streams ("init",
/// "gumbel", "data-shuffle", ...) so that components can be reproduced
/// independently of each other. The generator and all variate
/// constructions below are fully pinned: the same (root, name, index)
/// yields the same values on every run.
class RngStream {
 public:
  RngStream(uint64_t root_seed, std::string_view name, uint64_t index = 0)
      : engine_(mix(root_seed ^ fnv1a(name), index)) {}

  uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1), 53-bit mantissa.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform in the open interval (0, 1); safe under log().
  double uniform_open() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Box-Muller normal; always consumes exactly two uniforms.
  double normal(double mu = 0.0, double sigma = 1.0) {
    const double u1 = uniform_open();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mu + sigma * r * std::cos(2.0 * M_PI * u2);
  }

  /// Standard Gumbel(0, 1) variate.
  double gumbel() { return -std::log(-std::log(uniform_open())); }

  /// Uniform integer in [0, n).
  int uniform_int(int n) {
    return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(uniform_int(static_cast<int>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static uint64_t fnv1a(std::string_view s) {
    uint64_t h = 1469598103934665603ULL;
    for (const char c : s) {
      h ^= static_cast<uint8_t>(c);
      h *= 1099511628211ULL;
    }
    return h;
  }

  static uint64_t mix(uint64_t x, uint64_t index) { return derive_seed(x, index); }

  std::mt19937_64 engine_;
};

}  // namespace dmask
