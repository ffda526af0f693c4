#pragma once

#include <cstdint>
#include <random>

namespace sigloss::rng {

// splitmix64 step; used to derive independent per-stream seeds from one
// scenario seed so that per-pixel generators are order-independent.
constexpr uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr uint64_t derive_seed(uint64_t seed, uint64_t stream_id) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream_id * 0x2545f4914f6cdd1dULL + 1));
}

// mt19937_64 with hand-rolled value derivation. std::*_distribution output
// is not pinned by the standard, so uniform doubles / bounded ints are
// derived here to keep runs byte-reproducible across toolchains.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double next_unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return next_unit() < p; }

  // Uniform in [0, n). Lemire multiply-shift with rejection (unbiased).
  uint64_t below(uint64_t n) {
    if (n == 0) return 0;
    while (true) {
      uint64_t x = gen_();
      __uint128_t m = static_cast<__uint128_t>(x) * n;
      uint64_t lo = static_cast<uint64_t>(m);
      if (lo >= n || lo >= (0ULL - n) % n) return static_cast<uint64_t>(m >> 64);
    }
  }

  int64_t range(int64_t lo, int64_t hi) {  // inclusive bounds
    if (hi <= lo) return lo;
    return lo + static_cast<int64_t>(below(static_cast<uint64_t>(hi - lo + 1)));
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace sigloss::rng
