#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace pointfuse {

// Deterministic RNG. All draws go through explicit arithmetic on the raw
// mt19937_64 stream so results never depend on the standard library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed), seed_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), n > 0.
  int uniform_int(int n) {
    auto wide = static_cast<unsigned __int128>(engine_());
    return static_cast<int>((wide * static_cast<uint64_t>(n)) >> 64);
  }

  // Box-Muller; second value cached.
  double normal(double mean = 0.0, double stddev = 1.0) {
    if (has_cached_) {
      has_cached_ = false;
      return mean + stddev * cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return mean + stddev * r * std::cos(a);
  }

  // Independent stream derived from the original seed and a stream tag.
  Rng fork(uint64_t stream) const {
    return Rng(splitmix(seed_ ^ (0x9E3779B97F4A7C15ULL * (stream + 1))));
  }

  uint64_t seed() const { return seed_; }

  static uint64_t splitmix(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

 private:
  std::mt19937_64 engine_;
  uint64_t seed_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace pointfuse
