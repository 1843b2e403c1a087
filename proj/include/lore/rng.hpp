#pragma once

// Reproducible random streams.
//
// Algorithm (fixed, so other implementations can reproduce streams):
//   * state seeding: four successive outputs of splitmix64 started at the seed
//   * generator:     xoshiro256** (Blackman & Vigna)
//   * uniform01:     (next() >> 11) * 2^-53, in [0, 1)
//   * normal:        Box-Muller on (1 - u1, u2), cosine branch only, no caching
//   * gamma:         Marsaglia-Tsang; shape < 1 via Gamma(a + 1) * U^(1/a),
//                    evaluated in log space
//   * streams:       Rng::derive(seed, tag) seeds a child from
//                    splitmix64(seed ^ splitmix64(tag)); callers pick tags

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace lore {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix64(std::uint64_t x) { return splitmix64(x); }

// FNV-1a, used to turn stream names into tags and for fingerprints.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xCBF29CE484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& s : s_) s = splitmix64(sm);
  }

  static Rng derive(std::uint64_t seed, std::uint64_t tag) { return Rng(mix64(seed ^ mix64(tag))); }
  static Rng derive(std::uint64_t seed, std::string_view name) { return derive(seed, fnv1a(name)); }
  static Rng derive(std::uint64_t seed, std::string_view name, std::uint64_t index) {
    return derive(mix64(seed ^ mix64(fnv1a(name))), index);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() { return next(); }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), Lemire-style rejection (unbiased).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold) return r % n;
    }
  }

  double normal() {
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// log of a Gamma(shape, 1) draw. Works for tiny shapes where the draw
  /// itself underflows to zero.
  double log_gamma_draw(double shape) {
    if (shape < 1.0) {
      const double boosted = log_gamma_draw(shape + 1.0);
      const double u = 1.0 - uniform01();  // (0, 1]
      return boosted + std::log(u) / shape;
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform01();
      if (u < 1.0 - 0.0331 * x * x * x * x) return std::log(d * v);
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return std::log(d * v);
    }
  }

  double gamma(double shape) { return std::exp(log_gamma_draw(shape)); }

  /// Fisher-Yates.
  template <class T>
  void shuffle(std::vector<T>& xs) {
    for (std::size_t i = xs.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(xs[i - 1], xs[j]);
    }
  }

  /// k distinct indices from [0, n), in draw order (partial Fisher-Yates).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
      const auto j = i + static_cast<std::size_t>(below(n - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::array<std::uint64_t, 4> s_{};
};

}  // namespace lore
