#pragma once

#include <cstdint>
#include <cmath>

namespace lpa {

/// Counter-based PRNG (splitmix64 core). Chosen over std::mt19937 because the
/// full state is two u64 values, which makes checkpoint serialization and
/// per-record stream derivation trivial. Identical (seed, stream) produces an
/// identical sequence on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0)
      : state_(mix(seed ^ 0x9e3779b97f4a7c15ull) ^ mix(stream)), counter_(0) {}

  /// Derives an independent stream, e.g. one per dataset record.
  Rng fork(std::uint64_t stream) const { return Rng(state_, mix(stream + 1)); }

  std::uint64_t next_u64() {
    std::uint64_t z = state_ + 0x9e3779b97f4a7c15ull * (++counter_);
    return mix(z);
  }

  /// Uniform double in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    // Modulo bias is negligible for n << 2^64.
    return n ? next_u64() % n : 0;
  }

  /// Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  struct State {
    std::uint64_t state;
    std::uint64_t counter;
  };
  State state() const { return {state_, counter_}; }
  void restore(const State& s) {
    state_ = s.state;
    counter_ = s.counter;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
  std::uint64_t counter_;
};

}  // namespace lpa
