#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "sscale/tape.hpp"

namespace sscale {

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t checked = 0;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps near-zero entries from
/// turning round-off into huge relative errors.
inline double gradient_rel_error(double analytic, double numeric, double floor = 1e-3) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares tape gradients of `loss_fn` with central differences for every
/// element of every input. `loss_fn` must return a one-element Var and record
/// on the tape it is given (nullptr during the numeric passes).
inline GradCheckResult gradient_check(const std::function<Var<double>(GradTape*)>& loss_fn,
                                      std::vector<Var<double>> inputs, double h = 1e-5) {
  for (auto& in : inputs) in.clear_grad();
  GradTape tape;
  Var<double> loss = loss_fn(&tape);
  tape.backward(loss);

  GradCheckResult result;
  for (auto& in : inputs) {
    Tensor<double>& value = in.mutable_value();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + h;
      const double plus = loss_fn(nullptr).value()[0];
      value[i] = saved - h;
      const double minus = loss_fn(nullptr).value()[0];
      value[i] = saved;
      const double numeric = (plus - minus) / (2 * h);
      const double analytic = in.has_grad() ? in.grad()[i] : 0.0;
      result.max_rel_error =
          std::max(result.max_rel_error, gradient_rel_error(analytic, numeric));
      ++result.checked;
    }
  }
  return result;
}

}  // namespace sscale
