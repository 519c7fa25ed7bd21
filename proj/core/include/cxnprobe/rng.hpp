#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>

#include "cxnprobe/text.hpp"

namespace cxnprobe {

// SplitMix64. Chosen over <random> engines + distributions because the
// standard distributions are implementation-defined; every draw here is
// specified bit-for-bit so splits reproduce across platforms.
//
// The generator also keeps a running digest of every value it produced, so a
// split manifest can record exactly which draw sequence built it.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    ++draws_;
    digest_ = fnv1a64_u64(z, digest_);
    return z;
  }

  /// Uniform integer in [0, bound). Rejection sampling, no modulo bias.
  std::uint64_t uniform(std::uint64_t bound) {
    if (bound <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
    std::uint64_t v = next();
    while (v >= limit) v = next();
    return v % bound;
  }

  /// Uniform double in [0, 1) from the top 53 bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (one value per call; the pair's twin is discarded).
  double normal();

  std::uint64_t draw_count() const { return draws_; }
  std::uint64_t draw_digest() const { return digest_; }

 private:
  std::uint64_t state_;
  std::uint64_t draws_ = 0;
  std::uint64_t digest_ = kFnvOffsetBasis;
};

/// Fisher-Yates, high index to low: for i = n-1..1 swap(i, uniform(i+1)).
template <typename T>
void shuffle(std::span<T> items, SplitMix64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform(i));
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

}  // namespace cxnprobe
