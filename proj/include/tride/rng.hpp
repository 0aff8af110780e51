#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace tride {

// Deterministic RNG with platform-independent sample paths. std::mt19937_64
// itself is fully specified; the distribution shims below avoid the
// implementation-defined behaviour of std::*_distribution so that identical
// seeds give identical streams on any standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be > 0; modulo bias is negligible at
  // desk-scale n.
  std::uint64_t uniform_int(std::uint64_t n) { return engine_() % n; }

  // Box-Muller; one spare value cached.
  double normal(double mean = 0.0, double stddev = 1.0) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return mean + stddev * r * std::cos(theta);
  }

  // Mix a stream id into a seed (splitmix64 finalizer).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream_id) {
    std::uint64_t h = seed ^ (0x9e3779b97f4a7c15ull + stream_id);
    h ^= h >> 30;
    h *= 0xbf58476d1ce4e5b9ull;
    h ^= h >> 27;
    h *= 0x94d049bb133111ebull;
    h ^= h >> 31;
    return h;
  }

  // Derive an independent substream. Used to keep e.g. radar sampling
  // byte-identical across weather variants of the same scene seed.
  Rng split(std::uint64_t stream_id) const { return Rng(derive(seed_, stream_id)); }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace tride
