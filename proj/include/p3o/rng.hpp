#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>

namespace p3o {

// splitmix64; used for seed derivation and stateless per-pixel noise.
inline uint64_t hash64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t base, uint64_t stream) {
  return hash64(base ^ hash64(stream + 0x6a09e667f3bcc909ull));
}

// Deterministic RNG stream. mt19937_64 is fully specified by the standard and
// all transforms below are hand-rolled, so sequences are stable across
// compilers and standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : base_(seed), gen_(hash64(seed)) {}

  uint64_t u64() { return gen_(); }

  // [0, 1)
  double uniform() { return double(u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n), unbiased enough for n << 2^64
  int uniform_int(int n) {
    return int((static_cast<unsigned __int128>(u64()) * uint64_t(n)) >> 64);
  }

  // Box-Muller without caching; two draws per call, deterministic call order.
  double normal() {
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Independent child stream; forking does not disturb this stream.
  Rng fork(uint64_t stream) const { return Rng(mix_seed(base_, stream)); }

  // Fisher-Yates with this stream (std::shuffle is implementation-defined).
  template <class Vec>
  void shuffle(Vec& v) {
    for (int i = int(v.size()) - 1; i > 0; --i) {
      int j = uniform_int(i + 1);
      std::swap(v[i], v[j]);
    }
  }

 private:
  uint64_t base_;
  std::mt19937_64 gen_;
};

// Stateless noise in [0,1) keyed by (seed, step, index); render helpers use
// this so images stay a pure function of (state, track, variant).
inline double noise_value(uint64_t seed, uint64_t step, uint64_t index) {
  return double(hash64(seed ^ (step * 0xd1342543de82ef95ull) ^
                       (index * 0xaf251af3b0f025b5ull)) >>
                11) *
         0x1.0p-53;
}

}  // namespace p3o
