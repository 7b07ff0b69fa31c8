#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace equiprec::numerics {

// Deterministic RNG: mt19937_64 with hand-rolled converters. The standard
// distribution objects have implementation-defined algorithms, so seeds
// would not reproduce across toolchains; these converters are pinned.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t raw() { return gen_(); }

  // uniform in [0, 1), 53-bit resolution
  double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // integer in [0, n), n > 0; modulo bias is negligible for n << 2^64
  std::uint64_t index(std::uint64_t n) { return gen_() % n; }

  // standard normal via Box-Muller, second deviate cached
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1] so the log is finite
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace equiprec::numerics
