#pragma once

// Splittable counter-based generator. Replication k of a run seeded with s
// draws from substream(s, k); streams derived from distinct ids are
// independent for practical purposes and bit-reproducible across platforms.
// The core step is the SplitMix64 state transition; samplers below avoid
// std::<random> distributions so that output is compiler-independent.

#include <cmath>
#include <cstdint>

namespace hawkesnet {

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : state_(mix(seed ^ 0x7f4a7c15u)) {}

  static RngStream substream(std::uint64_t seed, std::uint64_t stream_id) {
    RngStream rng(0);
    rng.state_ = mix(mix(seed) + 0x9e3779b97f4a7c15ULL * (stream_id + 1));
    return rng;
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  /// Uniform on the open interval (0, 1).
  double uniform01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  double exponential(double rate) { return -std::log(uniform01()) / rate; }

  /// Standard normal via Box-Muller (pairs cached).
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u = uniform01();
    const double v = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u));
    const double a = 6.283185307179586476925286766559 * v;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  /// Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace hawkesnet
