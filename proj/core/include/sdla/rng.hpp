#pragma once

// Counter-based splittable random streams.  Every random quantity in the
// library is a pure function of (master seed, structural key, counter), so
// replays are exact and replicas can be scheduled in any order.

#include <cmath>
#include <cstdint>

namespace sdla {

// splitmix64 finalizer; the standard mixer for key derivation.
inline uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t mix64(uint64_t a, uint64_t b) { return mix64(mix64(a) ^ b); }

template <typename... Rest>
inline uint64_t mix64(uint64_t a, uint64_t b, Rest... rest) {
  return mix64(mix64(a, b), uint64_t(rest)...);
}

// Value at a (key, counter) pair without any sequential state.
inline uint64_t at_counter(uint64_t key, uint64_t counter) {
  return mix64(key + counter * 0x9e3779b97f4a7c15ULL);
}

// Uniform double in (0, 1); never returns 0 so -log(u) is always finite.
inline double to_unit(uint64_t z) {
  double u = double(z >> 11) * 0x1.0p-53;
  return u > 0.0 ? u : 0x1.0p-53;
}

inline double unit_at(uint64_t key, uint64_t counter) {
  return to_unit(at_counter(key, counter));
}

// Sequential stream for Monte-Carlo consumers (walks, Gillespie draws).
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  double next_unit() { return to_unit(next_u64()); }

  // Uniform integer in [0, n).
  uint32_t next_uint(uint32_t n) {
    return uint32_t((__uint128_t(next_u64()) * n) >> 64);
  }

  double next_exp(double rate) { return -std::log(next_unit()) / rate; }

 private:
  uint64_t state_;
};

// Replica seeds derive from the master seed so replica sets are extendable
// without recomputation.
inline uint64_t replica_seed(uint64_t master_seed, uint64_t replica_index) {
  return mix64(master_seed, 0x5eedULL, replica_index);
}

}  // namespace sdla
