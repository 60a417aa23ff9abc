#pragma once

#include <cmath>
#include <cstdint>

namespace netscope {

// Counter-based splitmix64 generator. The n-th output is a pure function of
// (seed, n), so independent streams can be derived per image / batch / worker
// and results do not depend on execution order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), counter_(0) {}

  // Derives an independent stream keyed by `key` (image index, batch index,
  // epoch...). Derivation is from the seed only, not from consumed state.
  Rng split(std::uint64_t key) const {
    return Rng(mix(seed_ + 0x9E3779B97F4A7C15ULL * (key + 1)));
  }

  std::uint64_t next_u64() {
    return mix(seed_ + 0x9E3779B97F4A7C15ULL * ++counter_);
  }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Standard normal via Box-Muller. Consumes two uniforms per draw; no
  // cached second value, so the draw count per element is fixed.
  double gaussian() {
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

}  // namespace netscope
