#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace sscale {

struct SelfCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SelftestReport {
  std::vector<SelfCheck> checks;
  bool ok() const noexcept;
  void print(std::ostream& out) const;
};

/// Central-difference checks of every differentiable op at 64-bit precision,
/// `instances` random inputs per op, pass threshold 1e-5 relative error.
SelftestReport gradient_suite(std::size_t instances = 20, std::uint64_t seed = 1);

/// Monte-Carlo drop fractions and scale factor statistics of the mask draws.
SelftestReport mask_statistics_suite(std::uint64_t seed = 1);

/// Both suites.
SelftestReport run_selftest(std::uint64_t seed = 1);

}  // namespace sscale
