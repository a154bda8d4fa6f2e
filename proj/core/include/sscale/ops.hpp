#pragma once

// Differentiable ops. Each computes its forward value eagerly and, when given a
// tape and at least one input that requires a gradient, records the matching
// backward rule. Passing `tape == nullptr` gives a pure inference call.

#include <span>
#include <vector>

#include "sscale/kernels.hpp"
#include "sscale/tape.hpp"

namespace sscale::ops {

template <typename Scalar>
struct BatchNormState {
  Tensor<Scalar> running_mean;
  Tensor<Scalar> running_var;
  double momentum = kernels::kBatchNormMomentum;
  double eps = kernels::kBatchNormEps;

  explicit BatchNormState(std::size_t channels = 1)
      : running_mean({channels}, Scalar{0}), running_var({channels}, Scalar{1}) {}
};

/// `bias` may be a default-constructed (invalid) Var.
template <typename Scalar>
Var<Scalar> conv2d(GradTape* tape, const Var<Scalar>& x, const Var<Scalar>& weight,
                   const Var<Scalar>& bias, kernels::Conv2dParams params);

template <typename Scalar>
Var<Scalar> relu(GradTape* tape, const Var<Scalar>& x);

template <typename Scalar>
Var<Scalar> max_pool2d(GradTape* tape, const Var<Scalar>& x, std::size_t window,
                       std::size_t stride);

template <typename Scalar>
Var<Scalar> global_avg_pool(GradTape* tape, const Var<Scalar>& x);

template <typename Scalar>
Var<Scalar> linear(GradTape* tape, const Var<Scalar>& x, const Var<Scalar>& weight,
                   const Var<Scalar>& bias);

/// Batch statistics (and a running-stat update) when `training`, running stats otherwise.
template <typename Scalar>
Var<Scalar> batchnorm2d(GradTape* tape, const Var<Scalar>& x, const Var<Scalar>& gamma,
                        const Var<Scalar>& beta, BatchNormState<Scalar>& state, bool training);

/// Mean cross-entropy over the batch; returns a one-element Var.
template <typename Scalar>
Var<Scalar> softmax_cross_entropy(GradTape* tape, const Var<Scalar>& logits,
                                  std::span<const int> labels);

template <typename Scalar>
Var<Scalar> add(GradTape* tape, const Var<Scalar>& a, const Var<Scalar>& b);

/// [N, ...] -> [N, prod(...)]
template <typename Scalar>
Var<Scalar> flatten(GradTape* tape, const Var<Scalar>& x);

/// Per-(sample, map) multiplicative factors, treated as constants by backward.
template <typename Scalar>
Var<Scalar> scale_channels(GradTape* tape, const Var<Scalar>& x, std::vector<Scalar> factors);

/// Elementwise multiplicative mask of x's shape, treated as a constant by backward.
template <typename Scalar>
Var<Scalar> scale_elements(GradTape* tape, const Var<Scalar>& x, Tensor<Scalar> mask);

/// sum(x * weights) as a one-element Var; weights are constants.
template <typename Scalar>
Var<Scalar> dot(GradTape* tape, const Var<Scalar>& x, Tensor<Scalar> weights);

}  // namespace sscale::ops
