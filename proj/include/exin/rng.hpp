#pragma once
#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace exin {

// splitmix64 finalizer; good avalanche, used to derive independent seeds.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Derive a stream seed from a base seed and a purpose label. Streams for
// distinct labels are independent, so adding or removing a module never
// shifts the init of the others.
inline uint64_t derive_seed(uint64_t base, std::string_view label) {
  return splitmix64(splitmix64(base) ^ fnv1a64(label));
}

inline uint64_t derive_seed(uint64_t base, std::string_view label, uint64_t n) {
  return splitmix64(derive_seed(base, label) ^ splitmix64(n * 0x9e3779b97f4a7c15ull + 1));
}

// mt19937_64 wrapper with explicit float mappings, so sampled values depend
// only on the seed and call sequence, not on libstdc++'s distribution
// implementations (which are not pinned by the standard).
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t bits() { return eng_(); }

  // uniform in [0,1): 53-bit mantissa construction
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n); n > 0. Rejection-free modulo is fine here:
  // n is tiny relative to 2^64 so bias is far below any tolerance in play.
  int64_t index(int64_t n) { return static_cast<int64_t>(eng_() % static_cast<uint64_t>(n)); }

  // standard normal via Box-Muller (one value per call; spare cached)
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace exin
