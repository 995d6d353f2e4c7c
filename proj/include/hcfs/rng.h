#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace hcfs {

inline constexpr double kPi = 3.14159265358979323846;

// Deterministic RNG. mt19937_64 output is pinned by the standard and the
// transforms below are explicit, so a seed reproduces the same stream on
// every platform (std::*_distribution would not guarantee that).
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    uint64_t span = uint64_t(hi - lo) + 1;
    return lo + int64_t(gen_() % span);
  }

  // Standard normal via Box-Muller; one spare cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925287 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double std) { return mean + std * normal(); }

  // Normal truncated to +/- 2 std, the usual init for attention weights.
  double trunc_normal(double std) {
    double v = normal();
    while (v < -2.0 || v > 2.0) v = normal();
    return v * std;
  }

  // Derive an independent child stream (for per-step noise etc.).
  Rng child(uint64_t salt) {
    return Rng(gen_() ^ (salt * 0x9e3779b97f4a7c15ull + 0x517cc1b727220a95ull));
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace hcfs
