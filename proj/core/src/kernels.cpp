#include "sscale/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sscale/errors.hpp"

namespace sscale::kernels {
namespace {

// C[M,N] += A[M,K] * B[K,N]
template <typename S>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const S* A, const S* B, S* C) {
  for (std::size_t i = 0; i < M; ++i) {
    S* c = C + i * N;
    for (std::size_t k = 0; k < K; ++k) {
      const S a = A[i * K + k];
      const S* b = B + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

// C[M,N] += A[K,M]^T * B[K,N]
template <typename S>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const S* A, const S* B, S* C) {
  for (std::size_t k = 0; k < K; ++k) {
    const S* b = B + k * N;
    for (std::size_t i = 0; i < M; ++i) {
      const S a = A[k * M + i];
      S* c = C + i * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

// C[M,N] += A[M,K] * B[N,K]^T
template <typename S>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const S* A, const S* B, S* C) {
  std::vector<S> bt(K * N);
  for (std::size_t j = 0; j < N; ++j)
    for (std::size_t k = 0; k < K; ++k) bt[k * N + j] = B[j * K + k];
  gemm_nn(M, N, K, A, bt.data(), C);
}

struct ConvGeometry {
  std::size_t n, c, h, w, k, kh, kw, oh, ow;
};

template <typename S>
ConvGeometry conv_geometry(const Tensor<S>& input, const Tensor<S>& weight, Conv2dParams p) {
  if (input.rank() != 4) {
    throw DimensionError("conv2d input must be [N,C,H,W], got " + shape_string(input.shape()));
  }
  if (weight.rank() != 4) {
    throw DimensionError("conv2d weight must be [K,C,kh,kw], got " + shape_string(weight.shape()));
  }
  if (weight.dim(1) != input.dim(1)) {
    throw DimensionError("conv2d channel mismatch: input " + shape_string(input.shape()) +
                         " has C=" + std::to_string(input.dim(1)) + " but weight " +
                         shape_string(weight.shape()) + " expects C=" +
                         std::to_string(weight.dim(1)));
  }
  if (p.stride == 0) throw ConfigError("conv2d stride must be positive");
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), weight.dim(0),
                 weight.dim(2), weight.dim(3), 0, 0};
  g.oh = window_extent(g.h, g.kh, p.stride, p.pad, p.exact_cover, "conv2d height");
  g.ow = window_extent(g.w, g.kw, p.stride, p.pad, p.exact_cover, "conv2d width");
  return g;
}

// col[(c*kh + i)*kw + j, oy*ow + ox] = padded input sample
template <typename S>
void im2col(const S* x, const ConvGeometry& g, Conv2dParams p, S* col) {
  const std::size_t spatial = g.oh * g.ow;
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        S* row = col + ((c * g.kh + i) * g.kw + j) * spatial;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * p.stride + i) -
                          static_cast<std::ptrdiff_t>(p.pad);
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * p.stride + j) -
                            static_cast<std::ptrdiff_t>(p.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.h) &&
                                ix < static_cast<std::ptrdiff_t>(g.w);
            row[oy * g.ow + ox] = inside ? x[(c * g.h + iy) * g.w + ix] : S{0};
          }
        }
      }
    }
  }
}

template <typename S>
void col2im(const S* col, const ConvGeometry& g, Conv2dParams p, S* x) {
  const std::size_t spatial = g.oh * g.ow;
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const S* row = col + ((c * g.kh + i) * g.kw + j) * spatial;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * p.stride + i) -
                          static_cast<std::ptrdiff_t>(p.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * p.stride + j) -
                            static_cast<std::ptrdiff_t>(p.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            x[(c * g.h + iy) * g.w + ix] += row[oy * g.ow + ox];
          }
        }
      }
    }
  }
}

void require_nchw(const Shape& s, const char* op) {
  if (s.size() != 4) {
    throw DimensionError(std::string(op) + " expects [N,C,H,W], got " + shape_string(s));
  }
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shape " + shape_string(a) + " does not match " +
                         shape_string(b));
  }
}

}  // namespace

std::size_t window_extent(std::size_t in, std::size_t window, std::size_t stride, std::size_t pad,
                          bool exact_cover, const char* what) {
  const std::size_t padded = in + 2 * pad;
  if (window == 0 || window > padded) {
    throw ConfigError(std::string(what) + ": window " + std::to_string(window) +
                      " exceeds padded extent " + std::to_string(padded));
  }
  if (exact_cover && (padded - window) % stride != 0) {
    throw ConfigError(std::string(what) + ": output extent (" + std::to_string(in) + " + 2*" +
                      std::to_string(pad) + " - " + std::to_string(window) + ")/" +
                      std::to_string(stride) + " + 1 is not integral");
  }
  return (padded - window) / stride + 1;
}

template <typename S>
Tensor<S> conv2d_forward(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& bias,
                         Conv2dParams params) {
  const ConvGeometry g = conv_geometry(input, weight, params);
  if (!bias.empty() && (bias.rank() != 1 || bias.dim(0) != g.k)) {
    throw DimensionError("conv2d bias must be [" + std::to_string(g.k) + "], got " +
                         shape_string(bias.shape()));
  }
  Tensor<S> out({g.n, g.k, g.oh, g.ow});
  const std::size_t spatial = g.oh * g.ow;
  const std::size_t patch = g.c * g.kh * g.kw;
  std::vector<S> col(patch * spatial);
  for (std::size_t n = 0; n < g.n; ++n) {
    im2col(input.raw() + n * g.c * g.h * g.w, g, params, col.data());
    S* o = out.raw() + n * g.k * spatial;
    if (!bias.empty()) {
      for (std::size_t k = 0; k < g.k; ++k) std::fill_n(o + k * spatial, spatial, bias[k]);
    }
    gemm_nn(g.k, spatial, patch, weight.raw(), col.data(), o);
  }
  check_finite(out, "conv2d_forward");
  return out;
}

template <typename S>
Conv2dGrads<S> conv2d_backward(const Tensor<S>& grad_out, const Tensor<S>& saved_input,
                               const Tensor<S>& weight, Conv2dParams params, bool with_bias) {
  if (saved_input.empty()) {
    throw TapeError("conv2d_backward: saved input activation is missing");
  }
  const ConvGeometry g = conv_geometry(saved_input, weight, params);
  require_same_shape(grad_out.shape(), Shape{g.n, g.k, g.oh, g.ow}, "conv2d_backward grad_out");

  Conv2dGrads<S> grads{Tensor<S>(saved_input.shape()), Tensor<S>(weight.shape()), {}};
  if (with_bias) grads.bias = Tensor<S>({g.k});

  const std::size_t spatial = g.oh * g.ow;
  const std::size_t patch = g.c * g.kh * g.kw;
  std::vector<S> col(patch * spatial);
  std::vector<S> grad_col(patch * spatial);
  for (std::size_t n = 0; n < g.n; ++n) {
    const S* go = grad_out.raw() + n * g.k * spatial;
    im2col(saved_input.raw() + n * g.c * g.h * g.w, g, params, col.data());
    gemm_nt(g.k, patch, spatial, go, col.data(), grads.weight.raw());
    std::fill(grad_col.begin(), grad_col.end(), S{0});
    gemm_tn(patch, spatial, g.k, weight.raw(), go, grad_col.data());
    col2im(grad_col.data(), g, params, grads.input.raw() + n * g.c * g.h * g.w);
    if (with_bias) {
      for (std::size_t k = 0; k < g.k; ++k) {
        S acc{0};
        for (std::size_t s = 0; s < spatial; ++s) acc += go[k * spatial + s];
        grads.bias[k] += acc;
      }
    }
  }
  return grads;
}

template <typename S>
Tensor<S> relu_forward(const Tensor<S>& x) {
  Tensor<S> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > S{0} ? x[i] : S{0};
  return out;
}

template <typename S>
Tensor<S> relu_backward(const Tensor<S>& grad_out, const Tensor<S>& saved_input) {
  require_same_shape(grad_out.shape(), saved_input.shape(), "relu_backward");
  Tensor<S> gi(saved_input.shape());
  for (std::size_t i = 0; i < gi.size(); ++i) gi[i] = saved_input[i] > S{0} ? grad_out[i] : S{0};
  return gi;
}

template <typename S>
MaxPoolResult<S> max_pool2d_forward(const Tensor<S>& x, std::size_t window, std::size_t stride) {
  require_nchw(x.shape(), "max_pool2d");
  if (stride == 0) throw ConfigError("max_pool2d stride must be positive");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (window > h || window > w) {
    throw ConfigError("max_pool2d window " + std::to_string(window) +
                      " exceeds spatial extent " + std::to_string(h) + "x" + std::to_string(w));
  }
  const std::size_t oh = window_extent(h, window, stride, 0, false, "max_pool2d height");
  const std::size_t ow = window_extent(w, window, stride, 0, false, "max_pool2d width");
  MaxPoolResult<S> r{Tensor<S>({n, c, oh, ow}), std::vector<std::size_t>(n * c * oh * ow)};
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
        std::size_t best = base + (oy * stride) * w + ox * stride;
        for (std::size_t i = 0; i < window; ++i) {
          for (std::size_t j = 0; j < window; ++j) {
            const std::size_t idx = base + (oy * stride + i) * w + ox * stride + j;
            if (x[idx] > x[best]) best = idx;
          }
        }
        r.output[o] = x[best];
        r.argmax[o] = best;
      }
    }
  }
  return r;
}

template <typename S>
Tensor<S> max_pool2d_backward(const Tensor<S>& grad_out, std::span<const std::size_t> argmax,
                              const Shape& input_shape) {
  if (argmax.size() != grad_out.size()) {
    throw TapeError("max_pool2d_backward: saved argmax does not match grad_out");
  }
  Tensor<S> gi(input_shape);
  for (std::size_t o = 0; o < grad_out.size(); ++o) gi[argmax[o]] += grad_out[o];
  return gi;
}

template <typename S>
Tensor<S> global_avg_pool_forward(const Tensor<S>& x) {
  require_nchw(x.shape(), "global_avg_pool");
  const std::size_t planes = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<S> out({x.dim(0), x.dim(1)});
  for (std::size_t p = 0; p < planes; ++p) {
    S acc{0};
    for (std::size_t i = 0; i < hw; ++i) acc += x[p * hw + i];
    out[p] = acc / static_cast<S>(hw);
  }
  return out;
}

template <typename S>
Tensor<S> global_avg_pool_backward(const Tensor<S>& grad_out, const Shape& input_shape) {
  require_nchw(input_shape, "global_avg_pool_backward");
  const std::size_t hw = input_shape[2] * input_shape[3];
  Tensor<S> gi(input_shape);
  for (std::size_t p = 0; p < grad_out.size(); ++p) {
    const S g = grad_out[p] / static_cast<S>(hw);
    std::fill_n(gi.raw() + p * hw, hw, g);
  }
  return gi;
}

template <typename S>
Tensor<S> linear_forward(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || weight.dim(1) != x.dim(1)) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + " incompatible with weight " +
                         shape_string(weight.shape()));
  }
  const std::size_t n = x.dim(0), in = x.dim(1), out_f = weight.dim(0);
  if (!bias.empty() && (bias.rank() != 1 || bias.dim(0) != out_f)) {
    throw DimensionError("linear bias must be [" + std::to_string(out_f) + "], got " +
                         shape_string(bias.shape()));
  }
  Tensor<S> out({n, out_f});
  if (!bias.empty()) {
    for (std::size_t i = 0; i < n; ++i) std::copy_n(bias.raw(), out_f, out.raw() + i * out_f);
  }
  gemm_nt(n, out_f, in, x.raw(), weight.raw(), out.raw());
  check_finite(out, "linear_forward");
  return out;
}

template <typename S>
LinearGrads<S> linear_backward(const Tensor<S>& grad_out, const Tensor<S>& saved_input,
                               const Tensor<S>& weight, bool with_bias) {
  if (saved_input.empty()) throw TapeError("linear_backward: saved input is missing");
  const std::size_t n = saved_input.dim(0), in = saved_input.dim(1), out_f = weight.dim(0);
  require_same_shape(grad_out.shape(), Shape{n, out_f}, "linear_backward grad_out");
  LinearGrads<S> g{Tensor<S>(saved_input.shape()), Tensor<S>(weight.shape()), {}};
  gemm_nn(n, in, out_f, grad_out.raw(), weight.raw(), g.input.raw());
  gemm_tn(out_f, in, n, grad_out.raw(), saved_input.raw(), g.weight.raw());
  if (with_bias) {
    g.bias = Tensor<S>({out_f});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < out_f; ++j) g.bias[j] += grad_out[i * out_f + j];
  }
  return g;
}

template <typename S>
BatchNormForward<S> batchnorm2d_train_forward(const Tensor<S>& x, const Tensor<S>& gamma,
                                              const Tensor<S>& beta, double eps) {
  require_nchw(x.shape(), "batchnorm2d");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (gamma.size() != c || beta.size() != c) {
    throw DimensionError("batchnorm2d: gamma/beta must have " + std::to_string(c) + " entries");
  }
  const std::size_t m = n * hw;
  BatchNormForward<S> r{Tensor<S>(x.shape()), Tensor<S>(x.shape()), std::vector<S>(c),
                        std::vector<S>(c), std::vector<S>(c)};
  for (std::size_t ch = 0; ch < c; ++ch) {
    // Two-pass statistics; accumulate in double for float inputs.
    double mean = 0;
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t i = 0; i < hw; ++i) mean += x[(s * c + ch) * hw + i];
    mean /= static_cast<double>(m);
    double var = 0;
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t i = 0; i < hw; ++i) {
        const double d = x[(s * c + ch) * hw + i] - mean;
        var += d * d;
      }
    }
    var /= static_cast<double>(m);
    const double inv_std = 1.0 / std::sqrt(var + eps);
    r.batch_mean[ch] = static_cast<S>(mean);
    r.batch_var[ch] = static_cast<S>(var);
    r.inv_std[ch] = static_cast<S>(inv_std);
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t i = 0; i < hw; ++i) {
        const std::size_t idx = (s * c + ch) * hw + i;
        const S xh = static_cast<S>((x[idx] - mean) * inv_std);
        r.normalized[idx] = xh;
        r.output[idx] = gamma[ch] * xh + beta[ch];
      }
    }
  }
  check_finite(r.output, "batchnorm2d_forward");
  return r;
}

template <typename S>
BatchNormForward<S> batchnorm2d_eval_forward(const Tensor<S>& x, const Tensor<S>& gamma,
                                             const Tensor<S>& beta, const Tensor<S>& running_mean,
                                             const Tensor<S>& running_var, double eps) {
  require_nchw(x.shape(), "batchnorm2d");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (gamma.size() != c || beta.size() != c || running_mean.size() != c ||
      running_var.size() != c) {
    throw DimensionError("batchnorm2d: parameters must have " + std::to_string(c) + " entries");
  }
  BatchNormForward<S> r{Tensor<S>(x.shape()), Tensor<S>(x.shape()), std::vector<S>(c), {}, {}};
  for (std::size_t ch = 0; ch < c; ++ch) {
    r.inv_std[ch] = static_cast<S>(1.0 / std::sqrt(static_cast<double>(running_var[ch]) + eps));
  }
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < hw; ++i) {
        const std::size_t idx = (s * c + ch) * hw + i;
        const S xh = (x[idx] - running_mean[ch]) * r.inv_std[ch];
        r.normalized[idx] = xh;
        r.output[idx] = gamma[ch] * xh + beta[ch];
      }
    }
  }
  return r;
}

template <typename S>
BatchNormGrads<S> batchnorm2d_backward(const Tensor<S>& grad_out, const BatchNormForward<S>& saved,
                                       const Tensor<S>& gamma, bool batch_stats) {
  if (saved.normalized.empty()) throw TapeError("batchnorm2d_backward: saved x_hat is missing");
  require_same_shape(grad_out.shape(), saved.normalized.shape(), "batchnorm2d_backward");
  const Shape& shape = grad_out.shape();
  const std::size_t n = shape[0], c = shape[1], hw = shape[2] * shape[3];
  const auto m = static_cast<S>(n * hw);
  BatchNormGrads<S> g{Tensor<S>(shape), Tensor<S>({c}), Tensor<S>({c})};
  for (std::size_t ch = 0; ch < c; ++ch) {
    S sum_dy{0}, sum_dy_xh{0};
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t i = 0; i < hw; ++i) {
        const std::size_t idx = (s * c + ch) * hw + i;
        sum_dy += grad_out[idx];
        sum_dy_xh += grad_out[idx] * saved.normalized[idx];
      }
    }
    g.beta[ch] = sum_dy;
    g.gamma[ch] = sum_dy_xh;
    const S scale = gamma[ch] * saved.inv_std[ch];
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t i = 0; i < hw; ++i) {
        const std::size_t idx = (s * c + ch) * hw + i;
        if (batch_stats) {
          g.input[idx] =
              scale * (grad_out[idx] - sum_dy / m - saved.normalized[idx] * sum_dy_xh / m);
        } else {
          g.input[idx] = scale * grad_out[idx];
        }
      }
    }
  }
  return g;
}

template <typename S>
CrossEntropyForward<S> softmax_cross_entropy_forward(const Tensor<S>& logits,
                                                     std::span<const int> labels) {
  if (logits.rank() != 2) {
    throw DimensionError("softmax_cross_entropy expects [N,K] logits, got " +
                         shape_string(logits.shape()));
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(n) + " rows");
  }
  CrossEntropyForward<S> r{S{0}, Tensor<S>(logits.shape())};
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw DimensionError("label " + std::to_string(label) + " out of range for " +
                           std::to_string(k) + " classes");
    }
    const S* z = logits.raw() + i * k;
    const S zmax = *std::max_element(z, z + k);
    double denom = 0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(z[j] - zmax));
    const double log_denom = std::log(denom);
    for (std::size_t j = 0; j < k; ++j) {
      r.probabilities[i * k + j] =
          static_cast<S>(std::exp(static_cast<double>(z[j] - zmax) - log_denom));
    }
    total += log_denom - static_cast<double>(z[label] - zmax);
  }
  r.loss = static_cast<S>(total / static_cast<double>(n));
  if (finite_checks_enabled() && !std::isfinite(r.loss)) {
    throw NumericError("non-finite loss in softmax_cross_entropy");
  }
  return r;
}

template <typename S>
Tensor<S> softmax_cross_entropy_backward(const Tensor<S>& probabilities,
                                         std::span<const int> labels, S grad_loss) {
  const std::size_t n = probabilities.dim(0), k = probabilities.dim(1);
  Tensor<S> g(probabilities.shape());
  const S scale = grad_loss / static_cast<S>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const S onehot = static_cast<std::size_t>(labels[i]) == j ? S{1} : S{0};
      g[i * k + j] = (probabilities[i * k + j] - onehot) * scale;
    }
  }
  return g;
}

template <typename S>
Tensor<S> scale_channels(const Tensor<S>& x, std::span<const S> factors) {
  require_nchw(x.shape(), "scale_channels");
  const std::size_t planes = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  if (factors.size() != planes) {
    throw DimensionError("scale_channels: " + std::to_string(factors.size()) +
                         " factors for " + std::to_string(planes) + " maps");
  }
  Tensor<S> out(x.shape());
  for (std::size_t p = 0; p < planes; ++p) {
    const S f = factors[p];
    const S* src = x.raw() + p * hw;
    S* dst = out.raw() + p * hw;
    if (f == S{1}) {
      std::copy_n(src, hw, dst);
    } else {
      for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] * f;
    }
  }
  return out;
}

#define SSCALE_INSTANTIATE_KERNELS(S)                                                            \
  template Tensor<S> conv2d_forward(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,       \
                                    Conv2dParams);                                               \
  template Conv2dGrads<S> conv2d_backward(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, \
                                          Conv2dParams, bool);                                   \
  template Tensor<S> relu_forward(const Tensor<S>&);                                             \
  template Tensor<S> relu_backward(const Tensor<S>&, const Tensor<S>&);                          \
  template MaxPoolResult<S> max_pool2d_forward(const Tensor<S>&, std::size_t, std::size_t);     \
  template Tensor<S> max_pool2d_backward(const Tensor<S>&, std::span<const std::size_t>,         \
                                         const Shape&);                                          \
  template Tensor<S> global_avg_pool_forward(const Tensor<S>&);                                  \
  template Tensor<S> global_avg_pool_backward(const Tensor<S>&, const Shape&);                   \
  template Tensor<S> linear_forward(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);       \
  template LinearGrads<S> linear_backward(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, \
                                          bool);                                                 \
  template BatchNormForward<S> batchnorm2d_train_forward(const Tensor<S>&, const Tensor<S>&,    \
                                                         const Tensor<S>&, double);              \
  template BatchNormForward<S> batchnorm2d_eval_forward(                                         \
      const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, \
      double);                                                                                   \
  template BatchNormGrads<S> batchnorm2d_backward(const Tensor<S>&, const BatchNormForward<S>&, \
                                                  const Tensor<S>&, bool);                       \
  template CrossEntropyForward<S> softmax_cross_entropy_forward(const Tensor<S>&,                \
                                                                std::span<const int>);           \
  template Tensor<S> softmax_cross_entropy_backward(const Tensor<S>&, std::span<const int>, S);  \
  template Tensor<S> scale_channels(const Tensor<S>&, std::span<const S>);

SSCALE_INSTANTIATE_KERNELS(float)
SSCALE_INSTANTIATE_KERNELS(double)

#undef SSCALE_INSTANTIATE_KERNELS

}  // namespace sscale::kernels
