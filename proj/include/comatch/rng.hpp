#pragma once

#include <cstdint>
#include <random>

namespace comatch {

// Single seeded generator that feeds all randomness in a run. Forked
// sub-streams (per example, per component) keep data generation and
// initialization order-independent of each other.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(mix(seed)) {}

  double uniform(double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(gen_);
  }

  // Inclusive bounds.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    std::uniform_int_distribution<std::int64_t> d(lo, hi);
    return d(gen_);
  }

  double normal(double mean, double sd) {
    std::normal_distribution<double> d(mean, sd);
    return d(gen_);
  }

  std::uint64_t raw() { return gen_(); }

  // Deterministic child stream; independent of draws made on the parent.
  Rng fork(std::uint64_t stream) const {
    return Rng(mix(seed_ ^ (0x9e3779b97f4a7c15ULL * (stream + 1))));
  }

 private:
  static std::uint64_t mix(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace comatch
