#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <string_view>

namespace otafl {

// splitmix64 finalizer. Used for seed expansion and for deriving substream
// seeds, so a single master seed fans out into decorrelated streams.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

// xoshiro256++ generator with hand-rolled distributions. <random> engines and
// distributions are implementation defined, which would make runs differ
// across standard libraries; everything here is pinned down to the bit.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : s_) {
      x = mix64(x);
      word = x;
    }
    // mix64 of distinct inputs cannot yield four zero words, but keep the
    // generator safe against an adversarial state anyway.
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 0x9e3779b97f4a7c15ull;
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform on [0, 1), 53 random bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1); never returns an endpoint, safe to pass to log().
  double next_unit_open() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via the Marsaglia polar method; the second variate of
  // each pair is cached.
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * next_unit() - 1.0;
      v = 2.0 * next_unit() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    have_spare_ = true;
    return u * f;
  }

  // Rayleigh via inverse CDF: scale * sqrt(-2 ln U), U in (0,1).
  double next_rayleigh(double scale) {
    return scale * std::sqrt(-2.0 * std::log(next_unit_open()));
  }

  // Unbiased integer in [0, bound) by rejection.
  std::uint64_t next_below(std::uint64_t bound) {
    assert(bound > 0);
    const std::uint64_t threshold = (0 - bound) % bound;  // 2^64 mod bound
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Derives independent named substreams from one master seed. Every random
// decision in a run pulls from its own stream (for example "channels" keyed
// by round and group), so adding consumers or reordering work never perturbs
// the draws seen elsewhere.
class StreamForker {
 public:
  explicit StreamForker(std::uint64_t master) : master_(master) {}

  std::uint64_t master() const { return master_; }

  std::uint64_t derive(std::string_view label, std::uint64_t a = 0,
                       std::uint64_t b = 0) const {
    std::uint64_t x = mix64(master_ ^ fnv1a64(label));
    x = mix64(x ^ a);
    x = mix64(x ^ b);
    return x;
  }

  RngStream stream(std::string_view label, std::uint64_t a = 0,
                   std::uint64_t b = 0) const {
    return RngStream(derive(label, a, b));
  }

 private:
  std::uint64_t master_;
};

}  // namespace otafl
