#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace stereo {

// Seeded RNG with hand-rolled distributions so that draws are reproducible
// across standard library implementations (std::*_distribution is not).
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(static_cast<std::mt19937_64::result_type>(seed)) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive integer range.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
  }

  // Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 gen_;
};

// Stateless integer hash -> [0, 1); used for procedural textures that must be
// evaluable at arbitrary lattice coordinates without storage.
inline double hash_noise(int64_t x, int64_t y, uint64_t seed) {
  uint64_t h = static_cast<uint64_t>(x) * 0x9E3779B97F4A7C15ull;
  h ^= static_cast<uint64_t>(y) + 0xBF58476D1CE4E5B9ull + (h << 6) + (h >> 2);
  h ^= seed + 0x94D049BB133111EBull + (h << 6) + (h >> 2);
  h *= 0xFF51AFD7ED558CCDull;
  h ^= h >> 33;
  h *= 0xC4CEB9FE1A85EC53ull;
  h ^= h >> 33;
  return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

}  // namespace stereo
