#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace vnaff {

// Deterministic counter-free PRNG (splitmix64 core). All randomness in the
// project flows through this type so that results are reproducible from a
// single seed across platforms and worker counts. std:: distributions are
// implementation-defined, so the transforms live here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n) {
    // 128-bit multiply rejection-free bound; bias < 2^-64, irrelevant here.
    return std::uint64_t((__uint128_t(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller; consumes two uniforms per pair.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    // keep u1 away from 0 so log() stays finite
    u1 = u1 <= 0x1.0p-53 ? 0x1.0p-53 : u1;
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Derives an independent child stream; (seed, salt) fully determines it.
  Rng fork(std::uint64_t salt) const {
    std::uint64_t z = state_ ^ (0xD6E8FEB86659FD93ull * (salt + 1));
    z = (z ^ (z >> 32)) * 0xD6E8FEB86659FD93ull;
    return Rng(z ^ (z >> 32));
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Stable string hash (FNV-1a) for deriving stream salts from names.
inline std::uint64_t salt_of(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace vnaff
