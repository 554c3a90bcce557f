#pragma once
// Deterministic, platform-independent randomness. Every stochastic step in the
// toolkit (weight init, batch shuffling, negative sampling, dropout, toy
// encoding, synthetic data) draws from an explicitly seeded SplitMix64 stream,
// never from std:: distributions whose output is implementation-defined.

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace mel {

inline constexpr std::uint64_t kGolden64 = 0x9e3779b97f4a7c15ull;

// FNV-1a over raw bytes.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= static_cast<std::uint64_t>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

// SplitMix64 finalizer; also used as a general 64-bit mixer.
inline std::uint64_t mix64(std::uint64_t z) {
  z += kGolden64;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Seed for the per-token generator of the toy encoder: hash of (token, seed).
inline std::uint64_t token_seed(std::string_view token, std::uint64_t seed) {
  return mix64(fnv1a64(token) ^ mix64(seed));
}

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : state_(seed) {}

  // Derive an independent stream for a named purpose from a run seed.
  static RngStream tagged(std::uint64_t seed, std::string_view tag) {
    return RngStream(mix64(seed ^ fnv1a64(tag)));
  }

  std::uint64_t next_u64() {
    state_ += kGolden64;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1) with 53 bits of entropy.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform double in [-1, 1).
  double next_symmetric() { return 2.0 * next_unit() - 1.0; }

  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t next_below(std::uint64_t n) {
    // 128-bit multiply-shift keeps the mapping bias negligible and fixed.
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller (pairs cached).
  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_unit();
    double u2 = next_unit();
    while (u1 <= 0.0) u1 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double two_pi = 6.283185307179586476925286766559;
    spare_ = r * std::sin(two_pi * u2);
    have_spare_ = true;
    return r * std::cos(two_pi * u2);
  }

  bool next_bernoulli(double p) { return next_unit() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // First k elements of a random permutation of v (all of v when k >= size).
  template <typename T>
  std::vector<T> sample_without_replacement(std::vector<T> v, std::size_t k) {
    if (k >= v.size()) {
      shuffle(v);
      return v;
    }
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(next_below(v.size() - i));
      std::swap(v[i], v[j]);
    }
    v.resize(k);
    return v;
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace mel
