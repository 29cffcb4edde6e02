#pragma once

#include <cmath>
#include <cstdint>

namespace hatsc {

// Deterministic splitmix64 generator. All randomness in the library flows
// through this type so that a run is reproducible from a single seed,
// independent of the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(seed) {}

  // Independent stream derived from (seed, stream index). Streams with
  // different indices are decorrelated even for adjacent seeds.
  static Rng derive(uint64_t seed, uint64_t stream) {
    Rng mixer(seed ^ (0x9e3779b97f4a7c15ull * (stream + 1)));
    mixer.next_u64();
    return Rng(mixer.next_u64());
  }

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be nonzero.
  uint64_t below(uint64_t n) {
    return static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller. Cache-free so the generator state is a
  // single word and can be checkpointed.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  uint64_t state() const { return state_; }
  void set_state(uint64_t s) { state_ = s; }

 private:
  uint64_t state_;
};

}  // namespace hatsc
