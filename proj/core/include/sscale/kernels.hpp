#pragma once

// Forward and backward kernels on plain tensors. The autograd layer in ops.hpp
// wires these into the gradient tape; tests and the ablation tools also call
// them directly.

#include <cstddef>
#include <span>
#include <vector>

#include "sscale/tensor.hpp"

namespace sscale::kernels {

struct Conv2dParams {
  std::size_t stride = 1;
  std::size_t pad = 0;
  // Reject geometries where the last window does not land exactly on the
  // padded edge, i.e. (H + 2*pad - kh) % stride != 0. Off by default because
  // stride-2 3x3 convolutions on even extents (the ResNet downsampling
  // layers) never cover exactly.
  bool exact_cover = false;
};

/// Output extent of a convolution or pooling window along one axis.
std::size_t window_extent(std::size_t in, std::size_t window, std::size_t stride, std::size_t pad,
                          bool exact_cover, const char* what);

/// Cross-correlation of input[N,C,H,W] with weight[K,C,kh,kw] plus bias[K].
/// `bias` may be empty. No activation is applied.
template <typename Scalar>
Tensor<Scalar> conv2d_forward(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                              const Tensor<Scalar>& bias, Conv2dParams params);

template <typename Scalar>
struct Conv2dGrads {
  Tensor<Scalar> input;
  Tensor<Scalar> weight;
  Tensor<Scalar> bias;  // empty when the forward call had no bias
};

template <typename Scalar>
Conv2dGrads<Scalar> conv2d_backward(const Tensor<Scalar>& grad_out,
                                    const Tensor<Scalar>& saved_input,
                                    const Tensor<Scalar>& weight, Conv2dParams params,
                                    bool with_bias);

template <typename Scalar>
Tensor<Scalar> relu_forward(const Tensor<Scalar>& x);
template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& grad_out, const Tensor<Scalar>& saved_input);

template <typename Scalar>
struct MaxPoolResult {
  Tensor<Scalar> output;
  std::vector<std::size_t> argmax;  // flat input index of each output element
};

template <typename Scalar>
MaxPoolResult<Scalar> max_pool2d_forward(const Tensor<Scalar>& x, std::size_t window,
                                         std::size_t stride);
template <typename Scalar>
Tensor<Scalar> max_pool2d_backward(const Tensor<Scalar>& grad_out,
                                   std::span<const std::size_t> argmax, const Shape& input_shape);

/// [N,C,H,W] -> [N,C]
template <typename Scalar>
Tensor<Scalar> global_avg_pool_forward(const Tensor<Scalar>& x);
template <typename Scalar>
Tensor<Scalar> global_avg_pool_backward(const Tensor<Scalar>& grad_out, const Shape& input_shape);

/// x[N,in] * weight[out,in]^T + bias[out]. `bias` may be empty.
template <typename Scalar>
Tensor<Scalar> linear_forward(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                              const Tensor<Scalar>& bias);

template <typename Scalar>
struct LinearGrads {
  Tensor<Scalar> input;
  Tensor<Scalar> weight;
  Tensor<Scalar> bias;
};

template <typename Scalar>
LinearGrads<Scalar> linear_backward(const Tensor<Scalar>& grad_out, const Tensor<Scalar>& saved_input,
                                    const Tensor<Scalar>& weight, bool with_bias);

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

template <typename Scalar>
struct BatchNormForward {
  Tensor<Scalar> output;
  Tensor<Scalar> normalized;  // x_hat, saved for backward
  std::vector<Scalar> inv_std;
  std::vector<Scalar> batch_mean;
  std::vector<Scalar> batch_var;  // biased
};

/// Training-mode batch normalization over N,H,W per channel.
template <typename Scalar>
BatchNormForward<Scalar> batchnorm2d_train_forward(const Tensor<Scalar>& x,
                                                   const Tensor<Scalar>& gamma,
                                                   const Tensor<Scalar>& beta, double eps);

/// Inference-mode batch normalization using running statistics.
template <typename Scalar>
BatchNormForward<Scalar> batchnorm2d_eval_forward(const Tensor<Scalar>& x,
                                                  const Tensor<Scalar>& gamma,
                                                  const Tensor<Scalar>& beta,
                                                  const Tensor<Scalar>& running_mean,
                                                  const Tensor<Scalar>& running_var, double eps);

template <typename Scalar>
struct BatchNormGrads {
  Tensor<Scalar> input;
  Tensor<Scalar> gamma;
  Tensor<Scalar> beta;
};

/// `batch_stats` selects the training-mode rule (statistics depend on x).
template <typename Scalar>
BatchNormGrads<Scalar> batchnorm2d_backward(const Tensor<Scalar>& grad_out,
                                            const BatchNormForward<Scalar>& saved,
                                            const Tensor<Scalar>& gamma, bool batch_stats);

template <typename Scalar>
struct CrossEntropyForward {
  Scalar loss{};                 // mean over the batch
  Tensor<Scalar> probabilities;  // softmax, [N,K]
};

template <typename Scalar>
CrossEntropyForward<Scalar> softmax_cross_entropy_forward(const Tensor<Scalar>& logits,
                                                          std::span<const int> labels);
template <typename Scalar>
Tensor<Scalar> softmax_cross_entropy_backward(const Tensor<Scalar>& probabilities,
                                              std::span<const int> labels, Scalar grad_loss);

/// Multiplies each (sample, channel) map by factors[n*C + c].
template <typename Scalar>
Tensor<Scalar> scale_channels(const Tensor<Scalar>& x, std::span<const Scalar> factors);

}  // namespace sscale::kernels
