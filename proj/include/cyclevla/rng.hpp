#pragma once

/**
 * Deterministic random utilities.
 *
 * Everything that samples in this codebase derives its stream from these
 * helpers so that a (seed, config) pair reproduces byte-identical results
 * across runs and platforms.  No std::*_distribution is used anywhere:
 * their sequences are implementation defined.
 */

#include <cmath>
#include <cstdint>

namespace cyclevla::rng {

// splitmix64: tiny, well mixed, and standard fare for seed derivation.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ (splitmix64(b) + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix(mix(a, b), c);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  return mix(mix(a, b, c), d);
}

/// Counter-based stream: successive draws from a fixed key never depend on
/// how many draws another key consumed.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : state_(splitmix64(seed)) {}

  std::uint64_t next_u64() {
    state_ = splitmix64(state_);
    return state_;
  }

  /// Uniform double in [0, 1), 53 mantissa bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n), n >= 1.  Multiply-shift bounding: bias is
  /// below 2^-53 for the n used here and the map is strictly deterministic.
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Standard normal via Box-Muller on explicit uniforms.
  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  /// Gaussian truncated to [-clip, clip] standard deviations by rejection.
  double next_gaussian_clipped(double clip) {
    double g = next_gaussian();
    while (g > clip || g < -clip) g = next_gaussian();
    return g;
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

/// One-shot bounded draw for counter-keyed selection (no stream carried).
inline std::uint64_t bounded_hash(std::uint64_t key, std::uint64_t n) {
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(splitmix64(key)) * n) >> 64);
}

}  // namespace cyclevla::rng
