#pragma once

#include <cmath>
#include <cstdint>

namespace stemgnn {

// Counter-based generation: every draw is a pure function of (seed, counter) or
// (seed, key...), so results are independent of iteration order and thread count.

inline uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t key_hash(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
  uint64_t h = mix64(seed ^ 0x6a09e667f3bcc909ULL);
  h = mix64(h ^ a);
  h = mix64(h ^ b);
  h = mix64(h ^ c);
  return h;
}

// Uniform in [0,1) from 53 top bits.
inline double u01(uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

// Keyed draws for perturbation operators: reproducible per (seed, key) pair.
inline double keyed_uniform(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
  return u01(key_hash(seed, a, b, c));
}

// Sequential stream with serializable state (seed + call counter).
class RngStream {
 public:
  explicit RngStream(uint64_t seed = 0, uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  uint64_t next_u64() { return key_hash(seed_, counter_++); }
  double uniform() { return u01(next_u64()); }

  // Uniform on (eps, 1-eps); avoids log(0) downstream.
  double uniform_open(double eps = 1e-12) {
    double u = uniform();
    if (u < eps) u = eps;
    if (u > 1.0 - eps) u = 1.0 - eps;
    return u;
  }

  double normal() {
    double u1 = uniform_open();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Standard Gumbel via -ln(-ln(U)), U on (eps, 1-eps).
  double gumbel() {
    double u = uniform_open();
    return -std::log(-std::log(u));
  }

  uint64_t seed() const { return seed_; }
  uint64_t counter() const { return counter_; }
  void set_state(uint64_t seed, uint64_t counter) {
    seed_ = seed;
    counter_ = counter;
  }

 private:
  uint64_t seed_;
  uint64_t counter_;
};

}  // namespace stemgnn
