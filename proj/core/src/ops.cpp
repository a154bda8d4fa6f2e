#include "sscale/ops.hpp"

#include <memory>
#include <utility>

namespace sscale::ops {
namespace {

template <typename S>
void accumulate(Var<S> v, const Tensor<S>& g) {
  if (!v.valid() || !v.requires_grad()) return;
  Tensor<S>& buf = v.grad_buffer();
  if (buf.shape() != g.shape()) {
    throw TapeError("gradient shape " + shape_string(g.shape()) + " does not match value " +
                    shape_string(buf.shape()));
  }
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

template <typename S, typename... Vars>
bool any_requires_grad(const Vars&... vs) {
  return (... || (vs.valid() && vs.requires_grad()));
}

// Gradient w.r.t. the output of an op; may be absent if nothing downstream used it.
template <typename S>
const Tensor<S>* upstream(const Var<S>& out) {
  return out.has_grad() ? &out.grad() : nullptr;
}

}  // namespace

template <typename S>
Var<S> conv2d(GradTape* tape, const Var<S>& x, const Var<S>& weight, const Var<S>& bias,
              kernels::Conv2dParams params) {
  static const Tensor<S> kNoBias;
  const Tensor<S>& b = bias.valid() ? bias.value() : kNoBias;
  const bool rg = any_requires_grad<S>(x, weight, bias);
  Var<S> out(kernels::conv2d_forward(x.value(), weight.value(), b, params), rg);
  if (tape && rg) {
    tape->record("conv2d", [x, weight, bias, out, params] {
      const Tensor<S>* go = upstream(out);
      if (!go) return;
      auto g = kernels::conv2d_backward(*go, x.value(), weight.value(), params, bias.valid());
      accumulate(x, g.input);
      accumulate(weight, g.weight);
      if (bias.valid()) accumulate(bias, g.bias);
    });
  }
  return out;
}

template <typename S>
Var<S> relu(GradTape* tape, const Var<S>& x) {
  Var<S> out(kernels::relu_forward(x.value()), x.requires_grad());
  if (tape && x.requires_grad()) {
    tape->record("relu", [x, out] {
      if (const Tensor<S>* go = upstream(out)) accumulate(x, kernels::relu_backward(*go, x.value()));
    });
  }
  return out;
}

template <typename S>
Var<S> max_pool2d(GradTape* tape, const Var<S>& x, std::size_t window, std::size_t stride) {
  auto r = kernels::max_pool2d_forward(x.value(), window, stride);
  Var<S> out(std::move(r.output), x.requires_grad());
  if (tape && x.requires_grad()) {
    auto argmax = std::make_shared<std::vector<std::size_t>>(std::move(r.argmax));
    tape->record("max_pool2d", [x, out, argmax] {
      if (const Tensor<S>* go = upstream(out))
        accumulate(x, kernels::max_pool2d_backward(*go, *argmax, x.shape()));
    });
  }
  return out;
}

template <typename S>
Var<S> global_avg_pool(GradTape* tape, const Var<S>& x) {
  Var<S> out(kernels::global_avg_pool_forward(x.value()), x.requires_grad());
  if (tape && x.requires_grad()) {
    tape->record("global_avg_pool", [x, out] {
      if (const Tensor<S>* go = upstream(out))
        accumulate(x, kernels::global_avg_pool_backward(*go, x.shape()));
    });
  }
  return out;
}

template <typename S>
Var<S> linear(GradTape* tape, const Var<S>& x, const Var<S>& weight, const Var<S>& bias) {
  static const Tensor<S> kNoBias;
  const Tensor<S>& b = bias.valid() ? bias.value() : kNoBias;
  const bool rg = any_requires_grad<S>(x, weight, bias);
  Var<S> out(kernels::linear_forward(x.value(), weight.value(), b), rg);
  if (tape && rg) {
    tape->record("linear", [x, weight, bias, out] {
      const Tensor<S>* go = upstream(out);
      if (!go) return;
      auto g = kernels::linear_backward(*go, x.value(), weight.value(), bias.valid());
      accumulate(x, g.input);
      accumulate(weight, g.weight);
      if (bias.valid()) accumulate(bias, g.bias);
    });
  }
  return out;
}

template <typename S>
Var<S> batchnorm2d(GradTape* tape, const Var<S>& x, const Var<S>& gamma, const Var<S>& beta,
                   BatchNormState<S>& state, bool training) {
  auto fwd = std::make_shared<kernels::BatchNormForward<S>>(
      training ? kernels::batchnorm2d_train_forward(x.value(), gamma.value(), beta.value(),
                                                    state.eps)
               : kernels::batchnorm2d_eval_forward(x.value(), gamma.value(), beta.value(),
                                                   state.running_mean, state.running_var,
                                                   state.eps));
  if (training) {
    const Shape& s = x.shape();
    const double m = static_cast<double>(s[0] * s[2] * s[3]);
    const double unbias = m > 1 ? m / (m - 1) : 1.0;
    for (std::size_t c = 0; c < fwd->batch_mean.size(); ++c) {
      state.running_mean[c] = static_cast<S>((1 - state.momentum) * state.running_mean[c] +
                                             state.momentum * fwd->batch_mean[c]);
      state.running_var[c] = static_cast<S>((1 - state.momentum) * state.running_var[c] +
                                            state.momentum * fwd->batch_var[c] * unbias);
    }
  }
  const bool rg = any_requires_grad<S>(x, gamma, beta);
  Var<S> out(fwd->output, rg);
  if (tape && rg) {
    tape->record("batchnorm2d", [x, gamma, beta, out, fwd, training] {
      const Tensor<S>* go = upstream(out);
      if (!go) return;
      auto g = kernels::batchnorm2d_backward(*go, *fwd, gamma.value(), training);
      accumulate(x, g.input);
      accumulate(gamma, g.gamma);
      accumulate(beta, g.beta);
    });
  }
  return out;
}

template <typename S>
Var<S> softmax_cross_entropy(GradTape* tape, const Var<S>& logits, std::span<const int> labels) {
  auto fwd = kernels::softmax_cross_entropy_forward(logits.value(), labels);
  Var<S> out(Tensor<S>({1}, fwd.loss), logits.requires_grad());
  if (tape && logits.requires_grad()) {
    auto probs = std::make_shared<Tensor<S>>(std::move(fwd.probabilities));
    auto saved_labels = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
    tape->record("softmax_cross_entropy", [logits, out, probs, saved_labels] {
      if (const Tensor<S>* go = upstream(out))
        accumulate(logits, kernels::softmax_cross_entropy_backward(*probs, *saved_labels, (*go)[0]));
    });
  }
  return out;
}

template <typename S>
Var<S> add(GradTape* tape, const Var<S>& a, const Var<S>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shape " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  Tensor<S> sum(a.shape());
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = a.value()[i] + b.value()[i];
  const bool rg = any_requires_grad<S>(a, b);
  Var<S> out(std::move(sum), rg);
  if (tape && rg) {
    tape->record("add", [a, b, out] {
      if (const Tensor<S>* go = upstream(out)) {
        accumulate(a, *go);
        accumulate(b, *go);
      }
    });
  }
  return out;
}

template <typename S>
Var<S> flatten(GradTape* tape, const Var<S>& x) {
  const Shape& s = x.shape();
  if (s.empty()) throw DimensionError("flatten of a rank-0 tensor");
  Var<S> out(x.value().reshaped({s[0], x.value().size() / s[0]}), x.requires_grad());
  if (tape && x.requires_grad()) {
    tape->record("flatten", [x, out] {
      if (const Tensor<S>* go = upstream(out)) accumulate(x, go->reshaped(x.shape()));
    });
  }
  return out;
}

template <typename S>
Var<S> scale_channels(GradTape* tape, const Var<S>& x, std::vector<S> factors) {
  Var<S> out(kernels::scale_channels<S>(x.value(), factors), x.requires_grad());
  if (tape && x.requires_grad()) {
    auto f = std::make_shared<std::vector<S>>(std::move(factors));
    tape->record("scale_channels", [x, out, f] {
      if (const Tensor<S>* go = upstream(out))
        accumulate(x, kernels::scale_channels<S>(*go, *f));
    });
  }
  return out;
}

template <typename S>
Var<S> scale_elements(GradTape* tape, const Var<S>& x, Tensor<S> mask) {
  if (mask.shape() != x.shape()) {
    throw DimensionError("scale_elements: mask " + shape_string(mask.shape()) + " vs input " +
                         shape_string(x.shape()));
  }
  Tensor<S> y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.value()[i] * mask[i];
  Var<S> out(std::move(y), x.requires_grad());
  if (tape && x.requires_grad()) {
    auto m = std::make_shared<Tensor<S>>(std::move(mask));
    tape->record("scale_elements", [x, out, m] {
      const Tensor<S>* go = upstream(out);
      if (!go) return;
      Tensor<S> gi(x.shape());
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] = (*go)[i] * (*m)[i];
      accumulate(x, gi);
    });
  }
  return out;
}

template <typename S>
Var<S> dot(GradTape* tape, const Var<S>& x, Tensor<S> weights) {
  if (weights.shape() != x.shape()) {
    throw DimensionError("dot: weights " + shape_string(weights.shape()) + " vs input " +
                         shape_string(x.shape()));
  }
  S acc{0};
  for (std::size_t i = 0; i < weights.size(); ++i) acc += x.value()[i] * weights[i];
  Var<S> out(Tensor<S>({1}, acc), x.requires_grad());
  if (tape && x.requires_grad()) {
    auto w = std::make_shared<Tensor<S>>(std::move(weights));
    tape->record("dot", [x, out, w] {
      const Tensor<S>* go = upstream(out);
      if (!go) return;
      Tensor<S> gi(x.shape());
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] = (*go)[0] * (*w)[i];
      accumulate(x, gi);
    });
  }
  return out;
}

#define SSCALE_INSTANTIATE_OPS(S)                                                                 \
  template Var<S> conv2d(GradTape*, const Var<S>&, const Var<S>&, const Var<S>&,                  \
                         kernels::Conv2dParams);                                                  \
  template Var<S> relu(GradTape*, const Var<S>&);                                                 \
  template Var<S> max_pool2d(GradTape*, const Var<S>&, std::size_t, std::size_t);                \
  template Var<S> global_avg_pool(GradTape*, const Var<S>&);                                      \
  template Var<S> linear(GradTape*, const Var<S>&, const Var<S>&, const Var<S>&);                 \
  template Var<S> batchnorm2d(GradTape*, const Var<S>&, const Var<S>&, const Var<S>&,             \
                              BatchNormState<S>&, bool);                                          \
  template Var<S> softmax_cross_entropy(GradTape*, const Var<S>&, std::span<const int>);          \
  template Var<S> add(GradTape*, const Var<S>&, const Var<S>&);                                   \
  template Var<S> flatten(GradTape*, const Var<S>&);                                              \
  template Var<S> scale_channels(GradTape*, const Var<S>&, std::vector<S>);                       \
  template Var<S> scale_elements(GradTape*, const Var<S>&, Tensor<S>);                           \
  template Var<S> dot(GradTape*, const Var<S>&, Tensor<S>);

SSCALE_INSTANTIATE_OPS(float)
SSCALE_INSTANTIATE_OPS(double)

#undef SSCALE_INSTANTIATE_OPS

}  // namespace sscale::ops
