#pragma once
#include <cmath>
#include <cstdint>
#include <numbers>

namespace segrasp {

// splitmix64; used both as a stream deriver and as the core generator so
// that every random draw is a pure function of (seed, counter).
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d49bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) {
  return splitmix64(a ^ (0x9e3779b97f4a7c15ull + b + (a << 6) + (a >> 2)));
}

// Counter-based generator: state advances by one per draw, so identical
// (seed, draw index) pairs give identical values on every platform.
class Rng {
 public:
  Rng() = default;
  explicit Rng(uint64_t seed) : seed_(seed) {}

  // independent stream derived from this one; does not advance the counter
  Rng derive(uint64_t tag) const { return Rng(hash_combine(seed_, tag)); }
  Rng derive(uint64_t tag, uint64_t tag2) const {
    return Rng(hash_combine(hash_combine(seed_, tag), tag2));
  }

  uint64_t next_u64() { return splitmix64(seed_ ^ counter_++); }

  // uniform in [0, 1)
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Box-Muller; one value per call, deterministic (no cached spare)
  double normal() {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // uniform integer in [0, n)
  uint64_t next_below(uint64_t n) { return next_u64() % n; }

  uint64_t seed() const { return seed_; }
  uint64_t counter() const { return counter_; }
  void restore(uint64_t seed, uint64_t counter) {
    seed_ = seed;
    counter_ = counter;
  }

 private:
  uint64_t seed_ = 0;
  uint64_t counter_ = 0;
};

}  // namespace segrasp
