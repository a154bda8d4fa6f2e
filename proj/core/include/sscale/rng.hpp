#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace sscale {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Folds a list of coordinates into one stream key. Order matters.
constexpr std::uint64_t derive_key(std::initializer_list<std::uint64_t> parts) noexcept {
  std::uint64_t key = 0x5EEDC0DE5EEDC0DEULL;
  for (auto p : parts) key = mix64(key ^ mix64(p));
  return key;
}

/// Counter-based random stream: the i-th draw is a pure function of (key, i).
///
/// Every stochastic decision in the library (masks, augmentation, shuffling,
/// initialization) reads from one of these, keyed by the coordinates of the
/// decision, so results do not depend on evaluation order.
class RngStream {
 public:
  using result_type = std::uint64_t;

  constexpr RngStream() noexcept = default;
  constexpr explicit RngStream(std::uint64_t key) noexcept : key_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  constexpr result_type operator()() noexcept { return next_u64(); }

  constexpr std::uint64_t next_u64() noexcept {
    return mix64(key_ + (++counter_) * 0xD1B54A32D192ED03ULL);
  }

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Lemire's multiply-shift with rejection; n > 0.
  std::uint64_t index(std::uint64_t n) noexcept;

  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Standard normal via Box-Muller (one draw per call, the pair's second half is discarded).
  double normal() noexcept;

  constexpr std::uint64_t key() const noexcept { return key_; }
  constexpr std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

/// One independent stream per sample of a batch.
class SampleStreams {
 public:
  SampleStreams() = default;
  explicit SampleStreams(std::vector<std::uint64_t> keys) : keys_(std::move(keys)) {}

  /// Keys for samples [0, n) of the given (seed, layer, epoch, batch) coordinate.
  static SampleStreams for_batch(std::uint64_t seed, std::uint64_t layer, std::uint64_t epoch,
                                 std::uint64_t batch, std::size_t n);

  std::size_t size() const noexcept { return keys_.size(); }
  RngStream stream(std::size_t sample) const;
  std::span<const std::uint64_t> keys() const noexcept { return keys_; }

 private:
  std::vector<std::uint64_t> keys_;
};

/// Seeded Fisher-Yates permutation of [0, n).
std::vector<std::size_t> permutation(std::size_t n, RngStream rng);

}  // namespace sscale
