#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>

namespace oraclebo {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

/// Derive an independent stream key from a base seed and one or more integer tags.
constexpr std::uint64_t derive_key(std::uint64_t seed, std::uint64_t tag) noexcept {
  return mix64(seed ^ mix64(tag * kGoldenGamma + 0x632BE59BD9B4E019ULL));
}

template <typename... Tags>
constexpr std::uint64_t derive_key(std::uint64_t seed, std::uint64_t tag, Tags... rest) noexcept {
  return derive_key(derive_key(seed, tag), static_cast<std::uint64_t>(rest)...);
}

/// Counter-based 64-bit stream.
///
/// Draw i (zero-based) of the stream keyed by `key` is mix64(key + (i + 1) * gamma), with gamma the
/// 64-bit golden ratio constant. That is exactly SplitMix64 seeded with `key`, so the contract is
/// reproducible in any language with wrapping 64-bit arithmetic:
///  - uniform(): top 53 bits of a draw times 2^-53, in [0, 1).
///  - normal(): Box-Muller cosine branch on two consecutive draws (u1 mapped to (0, 1]); every
///    normal consumes exactly two draws.
///  - below(n): rejection sampling on draws to remove modulo bias.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}

  std::uint64_t next_u64() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * kGoldenGamma);
  }

  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  double normal() noexcept {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::size_t below(std::size_t n) noexcept {
    if (n <= 1) return 0;
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % bound);
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return static_cast<std::size_t>(v % bound);
  }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace oraclebo
