#pragma once

#include <cstdint>
#include <limits>

namespace covshift {

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Derive an independent stream key for child `index` of `seed`.
std::uint64_t split_seed(std::uint64_t seed, std::uint64_t index) noexcept;

/// Counter-based generator: output k is mix64(key + k * golden).  The whole
/// stream is a pure function of the key, so any (seed, index) pair replays
/// identically regardless of which thread consumes it.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept;

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;

  /// Uniform index in [0, m) by modular reduction of a 64-bit draw.
  std::uint64_t index(std::uint64_t m) noexcept { return (*this)() % m; }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace covshift
