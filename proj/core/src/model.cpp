#include "sscale/model.hpp"

#include <algorithm>
#include <cmath>

#include "sscale/errors.hpp"
#include "sscale/rng.hpp"

namespace sscale {

std::string_view to_string(ModelKind k) noexcept {
  return k == ModelKind::ResNet ? "resnet" : "plain_cnn";
}

ModelKind parse_model_kind(std::string_view s) {
  if (s == "resnet") return ModelKind::ResNet;
  if (s == "plain_cnn") return ModelKind::PlainCnn;
  throw ConfigError("unknown model kind '" + std::string(s) + "' (expected resnet, plain_cnn)");
}

std::string_view to_string(HookPosition p) noexcept {
  return p == HookPosition::PostRelu ? "post_relu" : "pre_relu";
}

HookPosition parse_hook_position(std::string_view s) {
  if (s == "post_relu") return HookPosition::PostRelu;
  if (s == "pre_relu") return HookPosition::PreRelu;
  throw ConfigError("unknown hook position '" + std::string(s) +
                    "' (expected post_relu, pre_relu)");
}

void ModelSpec::validate() const {
  if (num_classes < 2) throw ConfigError("model.classes must be at least 2");
  if (width == 0) throw ConfigError("model.width must be a positive integer");
  if (in_channels == 0 || height == 0 || width_px == 0) {
    throw ConfigError("model input shape must be positive");
  }
  if (kind == ModelKind::ResNet) {
    if (depth < 8 || (depth - 2) % 6 != 0) {
      throw ConfigError("model.depth = " + std::to_string(depth) +
                        " is invalid for resnet; depth must be 6n + 2 with n >= 1");
    }
    if (height < 4 || width_px < 4) throw ConfigError("resnet needs inputs of at least 4x4");
  } else if (depth == 0) {
    throw ConfigError("model.depth must be at least 1 for plain_cnn");
  }
}

std::size_t ModelSpec::units() const {
  return kind == ModelKind::ResNet ? (depth - 2) / 6 : depth;
}

std::vector<std::string> hook_points(const ModelSpec& spec) {
  spec.validate();
  std::vector<std::string> names;
  if (spec.kind == ModelKind::PlainCnn) {
    for (std::size_t i = 0; i < spec.depth; ++i) names.push_back("conv" + std::to_string(i));
    return names;
  }
  names.push_back("stem");
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t b = 0; b < spec.units(); ++b) {
      const std::string prefix = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b);
      names.push_back(prefix + ".conv1");
      names.push_back(prefix + ".conv2");
    }
  }
  return names;
}

template <typename S>
typename Model<S>::ConvBn Model<S>::make_conv(const std::string& name, std::size_t in,
                                              std::size_t out, std::size_t kernel,
                                              std::size_t stride, std::size_t pad) {
  ConvBn layer;
  layer.name = name;
  layer.weight = Var<S>(Tensor<S>({out, in, kernel, kernel}), true);
  layer.gamma = Var<S>(Tensor<S>({out}, S{1}), true);
  layer.beta = Var<S>(Tensor<S>({out}, S{0}), true);
  layer.bn = ops::BatchNormState<S>(out);
  layer.conv = {stride, pad, false};
  return layer;
}

template <typename S>
Model<S> Model<S>::build(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Model m;
  m.spec_ = spec;
  m.hook_names_ = hook_points(spec);
  const std::size_t k = spec.width;
  std::size_t channels = spec.in_channels;
  std::size_t h = spec.height, w = spec.width_px;

  if (spec.kind == ModelKind::PlainCnn) {
    for (std::size_t i = 0; i < spec.depth; ++i) {
      const std::size_t out = 16 * k << std::min<std::size_t>(i, 2);
      m.plain_.push_back(m.make_conv("conv" + std::to_string(i), channels, out, 3, 1, 1));
      const bool pool = i + 1 < spec.depth && h >= 4 && w >= 4;
      m.plain_pool_.push_back(pool);
      if (pool) {
        h /= 2;
        w /= 2;
      }
      channels = out;
    }
  } else {
    m.stem_ = m.make_conv("stem", channels, 16 * k, 3, 1, 1);
    channels = 16 * k;
    std::size_t hook = 1;
    for (std::size_t s = 0; s < 3; ++s) {
      const std::size_t out = (16 * k) << s;
      for (std::size_t b = 0; b < spec.units(); ++b) {
        const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
        const std::string prefix =
            "stage" + std::to_string(s + 1) + ".block" + std::to_string(b);
        Block block;
        block.conv1 = m.make_conv(prefix + ".conv1", channels, out, 3, stride, 1);
        block.conv2 = m.make_conv(prefix + ".conv2", out, out, 3, 1, 1);
        if (stride != 1 || channels != out) {
          block.shortcut = m.make_conv(prefix + ".shortcut", channels, out, 1, stride, 0);
        }
        block.hook1 = hook++;
        block.hook2 = hook++;
        m.blocks_.push_back(std::move(block));
        channels = out;
        if (stride == 2) {
          h = (h + 2 - 3) / 2 + 1;
          w = (w + 2 - 3) / 2 + 1;
        }
      }
    }
  }

  const std::size_t fc_in = spec.head == HeadKind::GlobalAvgPool ? channels : channels * h * w;
  m.fc_weight_ = Var<S>(Tensor<S>({spec.num_classes, fc_in}), true);
  m.fc_bias_ = Var<S>(Tensor<S>({spec.num_classes}, S{0}), true);
  m.register_params();
  m.initialize(seed);
  return m;
}

template <typename S>
void Model<S>::register_params() {
  params_.clear();
  auto add_conv = [&](ConvBn& l) {
    params_.push_back({l.name + ".weight", l.weight, true});
    params_.push_back({l.name + ".bn.gamma", l.gamma, false});
    params_.push_back({l.name + ".bn.beta", l.beta, false});
  };
  if (stem_) add_conv(*stem_);
  for (auto& l : plain_) add_conv(l);
  for (auto& b : blocks_) {
    add_conv(b.conv1);
    add_conv(b.conv2);
    if (b.shortcut) add_conv(*b.shortcut);
  }
  params_.push_back({"fc.weight", fc_weight_, true});
  params_.push_back({"fc.bias", fc_bias_, true});
}

template <typename S>
void Model<S>::initialize(std::uint64_t seed) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = params_[i];
    Tensor<S>& v = p.var.mutable_value();
    RngStream rng(derive_key({seed, 0x1417AA11ULL, i}));
    if (p.name == "fc.weight") {
      const double bound = 1.0 / std::sqrt(static_cast<double>(v.dim(1)));
      for (auto& x : v.data()) x = static_cast<S>(rng.uniform(-bound, bound));
    } else if (p.name.ends_with(".weight")) {
      const double fan_in = static_cast<double>(v.dim(1) * v.dim(2) * v.dim(3));
      const double stddev = std::sqrt(2.0 / fan_in);
      for (auto& x : v.data()) x = static_cast<S>(stddev * rng.normal());
    }
  }
}

template <typename S>
Var<S> Model<S>::conv_bn(ConvBn& layer, const Var<S>& x, const ForwardOptions& o) {
  Var<S> y = ops::conv2d(o.tape, x, layer.weight, Var<S>(), layer.conv);
  return ops::batchnorm2d(o.tape, y, layer.gamma, layer.beta, layer.bn, o.training);
}

template <typename S>
Var<S> Model<S>::hook(std::size_t index, const Var<S>& act, const ForwardOptions& o) {
  if (!binding_ || !binding_->active[index]) return act;
  if (!o.training && !o.force_regularizers) return act;
  const auto streams =
      SampleStreams::for_batch(binding_->seed, index, o.epoch, o.batch, act.shape()[0]);
  return regularize(o.tape, act, binding_->settings, streams, true);
}

template <typename S>
typename Model<S>::ForwardResult Model<S>::forward(const Tensor<S>& x, const ForwardOptions& o) {
  if (x.rank() != 4 || x.dim(1) != spec_.in_channels || x.dim(2) != spec_.height ||
      x.dim(3) != spec_.width_px) {
    throw DimensionError("model expects [N," + std::to_string(spec_.in_channels) + "," +
                         std::to_string(spec_.height) + "," + std::to_string(spec_.width_px) +
                         "] input, got " + shape_string(x.shape()));
  }
  const bool post = spec_.hook_position == HookPosition::PostRelu;
  GradTape* tape = o.tape;
  Var<S> h(x);

  // conv -> BN -> [hook] -> ReLU -> [hook], hook placed per spec_.hook_position
  auto unit = [&](ConvBn& layer, const Var<S>& in, std::size_t hook_index) {
    Var<S> y = conv_bn(layer, in, o);
    if (!post) y = hook(hook_index, y, o);
    y = ops::relu(tape, y);
    if (post) y = hook(hook_index, y, o);
    return y;
  };

  if (spec_.kind == ModelKind::PlainCnn) {
    for (std::size_t i = 0; i < plain_.size(); ++i) {
      h = unit(plain_[i], h, i);
      if (plain_pool_[i]) h = ops::max_pool2d(tape, h, 2, 2);
    }
  } else {
    h = unit(*stem_, h, 0);
    for (auto& b : blocks_) {
      Var<S> y = unit(b.conv1, h, b.hook1);
      y = conv_bn(b.conv2, y, o);
      if (!post) y = hook(b.hook2, y, o);
      Var<S> skip = b.shortcut ? conv_bn(*b.shortcut, h, o) : h;
      y = ops::relu(tape, ops::add(tape, y, skip));
      if (post) y = hook(b.hook2, y, o);
      h = y;
    }
  }

  ForwardResult r;
  r.features = h;
  Var<S> pooled = spec_.head == HeadKind::GlobalAvgPool ? ops::global_avg_pool(tape, h)
                                                        : ops::flatten(tape, h);
  r.logits = ops::linear(tape, pooled, fc_weight_, fc_bias_);
  return r;
}

template <typename S>
void Model<S>::attach_regularizer(const RegularizerConfig& config, std::uint64_t seed) {
  config.validate();
  Binding b;
  b.config = config;
  b.seed = seed;
  b.active.assign(hook_names_.size(), false);
  for (const auto& name : config.placement) {
    if (name == "all") {
      std::fill(b.active.begin(), b.active.end(), true);
      continue;
    }
    auto it = std::find(hook_names_.begin(), hook_names_.end(), name);
    if (it == hook_names_.end()) {
      std::string available;
      for (const auto& h : hook_names_) available += (available.empty() ? "" : ", ") + h;
      throw ConfigError("unknown hook '" + name + "'; available hooks: all, " + available);
    }
    b.active[static_cast<std::size_t>(it - hook_names_.begin())] = true;
  }
  b.settings = config.settings_at(0, 1, spec_.hook_position == HookPosition::PostRelu);
  binding_ = std::move(b);
}

template <typename S>
void Model<S>::set_regularizer_epoch(std::size_t epoch, std::size_t total_epochs) {
  if (!binding_) return;
  binding_->settings = binding_->config.settings_at(
      epoch, total_epochs, spec_.hook_position == HookPosition::PostRelu);
}

template <typename S>
void Model<S>::set_regularizer_settings(const TransformSettings& settings) {
  if (!binding_) throw ConfigError("no regularizer attached");
  settings.validate();
  binding_->settings = settings;
}

template <typename S>
std::vector<std::string> Model<S>::active_hooks() const {
  std::vector<std::string> out;
  if (!binding_) return out;
  for (std::size_t i = 0; i < hook_names_.size(); ++i)
    if (binding_->active[i]) out.push_back(hook_names_[i]);
  return out;
}

template <typename S>
std::size_t Model<S>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var.value().size();
  return n;
}

template <typename S>
std::size_t Model<S>::conv_parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p.var.value().rank() == 4) n += p.var.value().size();
  return n;
}

template <typename S>
Checkpoint Model<S>::to_checkpoint() const {
  Checkpoint ckpt;
  auto add_bn = [&](const ConvBn& l) {
    ckpt.add(l.name + ".bn.running_mean", l.bn.running_mean);
    ckpt.add(l.name + ".bn.running_var", l.bn.running_var);
  };
  for (const auto& p : params_) ckpt.add(p.name, p.var.value());
  if (stem_) add_bn(*stem_);
  for (const auto& l : plain_) add_bn(l);
  for (const auto& b : blocks_) {
    add_bn(b.conv1);
    add_bn(b.conv2);
    if (b.shortcut) add_bn(*b.shortcut);
  }
  return ckpt;
}

template <typename S>
void Model<S>::load_checkpoint(const Checkpoint& ckpt) {
  auto fetch = [&](const std::string& name, Tensor<S>& dst) {
    const CheckpointEntry* e = ckpt.find(name);
    if (!e) throw FormatError("checkpoint does not match model: missing '" + name + "'");
    if (e->values.shape() != dst.shape()) {
      throw FormatError("checkpoint does not match model: '" + name + "' has shape " +
                        shape_string(e->values.shape()) + ", model expects " +
                        shape_string(dst.shape()));
    }
    dst = e->values.template cast<S>();
  };
  auto load_bn = [&](ConvBn& l) {
    fetch(l.name + ".bn.running_mean", l.bn.running_mean);
    fetch(l.name + ".bn.running_var", l.bn.running_var);
  };
  for (auto& p : params_) fetch(p.name, p.var.mutable_value());
  if (stem_) load_bn(*stem_);
  for (auto& l : plain_) load_bn(l);
  for (auto& b : blocks_) {
    load_bn(b.conv1);
    load_bn(b.conv2);
    if (b.shortcut) load_bn(*b.shortcut);
  }
}

template class Model<float>;
template class Model<double>;

}  // namespace sscale
