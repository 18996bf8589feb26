#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace pong {

/// Seeded 64-bit generator with distributions written out by hand so that
/// sequences match bit-for-bit across standard library implementations.
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard; the <random> distributions are not, hence the helpers below.
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [lo, hi] (inclusive), rejection sampled.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  bool coin() { return (engine_() >> 63) != 0; }

  /// Text form of the full generator state.
  std::string state() const;
  void restore(const std::string& text);

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer; used to fan a master seed out into independent streams.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                    std::uint64_t index) {
  return mix_seed(mix_seed(mix_seed(master) ^ stream) ^ index);
}

}  // namespace pong
