#pragma once

// Counter-based random numbers for reproducible, order-independent
// trajectory ensembles.
//
// The generator is SplitMix64 (Steele, Lea & Flood 2014). Trajectory n of a
// run with master seed m draws from a SplitMix64 stream whose initial state
// is
//
//     state0 = mix64(m + (n + 1) * 0x9E3779B97F4A7C15)
//
// where mix64 is the SplitMix64 output finalizer. The stream for a
// trajectory therefore depends only on (m, n), never on scheduling order or
// worker count. Uniform doubles use the top 53 bits, giving values in [0,1).

#include <cmath>
#include <cstdint>

namespace plqt {

class SplitMix64 {
 public:
  SplitMix64() = default;
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  static std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix64(state_);
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (two uniforms per pair, one cached).
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_ = 0;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

/// The documented split function: initial stream state for trajectory
/// `index` under `master_seed`.
inline std::uint64_t split_seed(std::uint64_t master_seed, std::uint64_t index) {
  return SplitMix64::mix64(master_seed + (index + 1) * 0x9E3779B97F4A7C15ULL);
}

inline SplitMix64 trajectory_stream(std::uint64_t master_seed, std::uint64_t index) {
  return SplitMix64(split_seed(master_seed, index));
}

}  // namespace plqt
