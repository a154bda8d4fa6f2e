#include "sscale/tensor.hpp"

#include <atomic>

namespace sscale {
namespace {
std::atomic<bool> g_finite_checks{false};
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

void set_finite_checks(bool enabled) noexcept { g_finite_checks.store(enabled); }
bool finite_checks_enabled() noexcept { return g_finite_checks.load(); }

}  // namespace sscale
