#ifndef SIGMAP_RNG_HPP
#define SIGMAP_RNG_HPP

#include <cmath>
#include <cstdint>
#include <vector>

namespace sigmap {

// SplitMix64 generator (Steele, Lea, Flood 2014). Chosen over std engines so
// that every draw -- shuffles, normals, bounded ints -- is specified by this
// file alone and reproducible across compilers and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform integer in [0, bound) via Lemire's multiply-shift with rejection.
  std::uint64_t next_below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    while (true) {
      std::uint64_t x = next_u64();
      __uint128_t m = static_cast<__uint128_t>(x) * bound;
      std::uint64_t lo = static_cast<std::uint64_t>(m);
      if (lo >= bound || lo >= static_cast<std::uint64_t>(-bound) % bound)
        return static_cast<std::uint64_t>(m >> 64);
    }
  }

  // Uniform in [0,1) with 53 bits of precision.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Standard normal via Box-Muller; the spare value is cached.
  double next_normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = next_double();
    } while (u1 <= 0.0);
    u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * next_normal(); }

  // In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Derives an independent seed stream: one SplitMix64 mixing round over the
// concatenated (seed, index) pair. Used for per-tree / per-worker streams.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  Rng r(master ^ (0xD1B54A32D192ED03ULL * (index + 1)));
  return r.next_u64();
}

}  // namespace sigmap

#endif
