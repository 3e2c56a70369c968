#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace aesm2 {

// splitmix64 finalizer; used to derive independent streams from one seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return mix_seed(base ^ h);
}

// Deterministic random stream. mt19937_64 output is fixed by the standard and
// the real-valued draws below avoid std::uniform_real_distribution /
// std::normal_distribution, whose sequences vary between standard libraries.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  int uniform_int(int n) {
    return static_cast<int>(static_cast<std::uint64_t>(n) * uniform());
  }

  // Standard normal via Box-Muller (pairs cached).
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  RandomSource fork(std::string_view tag) {
    return RandomSource(derive_seed(eng_(), tag));
  }

 private:
  std::mt19937_64 eng_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace aesm2
