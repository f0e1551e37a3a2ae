#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace simcse::rng {

// Stateless counter-based generation: every random number is a pure hash of
// a (seed, key words...) tuple, so results never depend on evaluation order,
// thread count, or how many values were drawn before. Dropout masks, weight
// init, shuffles and the toy-corpus generator all draw through this.

/// splitmix64 finalizer; full-avalanche 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Fold one key word into a running hash.
constexpr std::uint64_t combine(std::uint64_t h, std::uint64_t w) {
  return mix64(h ^ (w * 0xff51afd7ed558ccdULL + 0x2545f4914f6cdd1dULL));
}

constexpr std::uint64_t hash_key(std::initializer_list<std::uint64_t> words) {
  std::uint64_t h = 0x6a09e667f3bcc908ULL;
  for (std::uint64_t w : words) h = combine(h, w);
  return h;
}

/// Uniform double in [0, 1) from the top 53 bits of the key hash.
inline double u01(std::initializer_list<std::uint64_t> words) {
  return static_cast<double>(hash_key(words) >> 11) * 0x1.0p-53;
}

// Key-space domains. Each caller mixes its domain tag in first so that, e.g.,
// dropout masks and init draws never collide even with equal key words.
enum Domain : std::uint64_t {
  kDomainDropout = 0xD401,
  kDomainInit = 0x1A17,
  kDomainShuffle = 0x5FFE,
  kDomainAugment = 0xA406,
  kDomainToy = 0x70C0,
};

/// Sequential stream view over the counter space: fixes a key prefix and
/// draws by incrementing an internal counter. Deterministic per key.
class Stream {
 public:
  explicit Stream(std::uint64_t key) : key_(key) {}
  Stream(Domain domain, std::initializer_list<std::uint64_t> words)
      : key_(combine(hash_key(words), static_cast<std::uint64_t>(domain))) {}

  std::uint64_t next_u64() { return mix64(combine(key_, counter_++)); }

  double next_u01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(next_u01() * static_cast<double>(n)) % n;
  }

  /// Standard normal via Box-Muller.
  double next_normal() {
    double u1 = next_u01();
    double u2 = next_u01();
    while (u1 <= 0.0) u1 = next_u01();
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace simcse::rng
