#include "sscale/rng.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "sscale/errors.hpp"

namespace sscale {

namespace {
__extension__ using u128 = unsigned __int128;
}  // namespace

std::uint64_t RngStream::index(std::uint64_t n) noexcept {
  // Lemire, "Fast Random Integer Generation in an Interval" (2019).
  u128 m = static_cast<u128>(next_u64()) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (low < threshold) {
      m = static_cast<u128>(next_u64()) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

double RngStream::normal() noexcept {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

SampleStreams SampleStreams::for_batch(std::uint64_t seed, std::uint64_t layer,
                                       std::uint64_t epoch, std::uint64_t batch, std::size_t n) {
  std::vector<std::uint64_t> keys(n);
  const std::uint64_t base = derive_key({seed, layer, epoch, batch});
  for (std::size_t i = 0; i < n; ++i) keys[i] = derive_key({base, i});
  return SampleStreams(std::move(keys));
}

RngStream SampleStreams::stream(std::size_t sample) const {
  if (sample >= keys_.size()) {
    throw DimensionError("sample stream " + std::to_string(sample) + " requested but only " +
                         std::to_string(keys_.size()) + " streams exist");
  }
  return RngStream(keys_[sample]);
}

std::vector<std::size_t> permutation(std::size_t n, RngStream rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.index(i));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

}  // namespace sscale
