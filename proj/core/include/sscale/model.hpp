#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sscale/checkpoint.hpp"
#include "sscale/ops.hpp"
#include "sscale/regularizers.hpp"

namespace sscale {

enum class ModelKind { PlainCnn, ResNet };
enum class HeadKind { GlobalAvgPool, Flatten };
enum class HookPosition { PostRelu, PreRelu };

std::string_view to_string(ModelKind k) noexcept;
ModelKind parse_model_kind(std::string_view s);
std::string_view to_string(HookPosition p) noexcept;
HookPosition parse_hook_position(std::string_view s);

/// Architecture description.
///
/// resnet: depth = 6n + 2, three stages of n basic blocks with widths
/// (16, 32, 64) * width; width > 1 gives the wide (WRN-depth-width) variant.
/// plain_cnn: `depth` conv-BN-ReLU layers with 2x2 max pooling in between.
struct ModelSpec {
  ModelKind kind = ModelKind::ResNet;
  std::size_t depth = 8;
  std::size_t width = 1;
  std::size_t num_classes = 10;
  std::size_t in_channels = 3;
  std::size_t height = 16;
  std::size_t width_px = 16;
  HeadKind head = HeadKind::GlobalAvgPool;
  HookPosition hook_position = HookPosition::PostRelu;

  void validate() const;
  /// Blocks per stage for resnet, conv layers for plain_cnn.
  std::size_t units() const;
};

/// Names of every hook point the model exposes, in forward order.
std::vector<std::string> hook_points(const ModelSpec& spec);

template <typename Scalar>
class Model {
 public:
  struct Parameter {
    std::string name;
    Var<Scalar> var;
    bool decay = true;  // false for batch-norm scale and shift
  };

  struct ForwardOptions {
    GradTape* tape = nullptr;
    // Batch statistics in BN and active regularizers.
    bool training = false;
    // Regularizers on even when `training` is false (inference-time ablation).
    bool force_regularizers = false;
    std::uint64_t epoch = 0;
    std::uint64_t batch = 0;
  };

  struct ForwardResult {
    Var<Scalar> logits;    // [N, classes]
    Var<Scalar> features;  // last conv activation, [N, C, h, w]
  };

  /// He-normal conv weights, unit BN scale, zero shifts and biases, uniform classifier.
  static Model build(const ModelSpec& spec, std::uint64_t seed);

  const ModelSpec& spec() const noexcept { return spec_; }
  const std::vector<std::string>& hooks() const noexcept { return hook_names_; }

  ForwardResult forward(const Tensor<Scalar>& x, const ForwardOptions& options);

  /// Binds the transform to the configured hooks. Throws ConfigError listing the
  /// available hooks if a placement name is unknown.
  void attach_regularizer(const RegularizerConfig& config, std::uint64_t seed);
  void detach_regularizer() noexcept { binding_.reset(); }
  bool has_regularizer() const noexcept { return binding_.has_value(); }
  /// Re-derives the active transform settings (curriculum) for an epoch.
  void set_regularizer_epoch(std::size_t epoch, std::size_t total_epochs);
  /// Replaces the active settings directly; used by the ablation tooling.
  void set_regularizer_settings(const TransformSettings& settings);
  const TransformSettings* regularizer_settings() const noexcept {
    return binding_ ? &binding_->settings : nullptr;
  }
  std::vector<std::string> active_hooks() const;

  std::vector<Parameter>& parameters() noexcept { return params_; }
  const std::vector<Parameter>& parameters() const noexcept { return params_; }

  std::size_t parameter_count() const;
  std::size_t conv_parameter_count() const;

  bool has_gap_head() const noexcept { return spec_.head == HeadKind::GlobalAvgPool; }
  /// Classifier weight [classes, C].
  const Tensor<Scalar>& classifier_weight() const { return fc_weight_.value(); }

  Checkpoint to_checkpoint() const;
  /// Throws FormatError if names or shapes do not match this architecture.
  void load_checkpoint(const Checkpoint& ckpt);

 private:
  struct ConvBn {
    std::string name;
    Var<Scalar> weight;
    Var<Scalar> gamma;
    Var<Scalar> beta;
    ops::BatchNormState<Scalar> bn;
    kernels::Conv2dParams conv;
  };

  struct Block {
    ConvBn conv1;
    ConvBn conv2;
    std::optional<ConvBn> shortcut;
    std::size_t hook1 = 0;
    std::size_t hook2 = 0;
  };

  struct Binding {
    RegularizerConfig config;
    TransformSettings settings;
    std::uint64_t seed = 0;
    std::vector<bool> active;
  };

  ConvBn make_conv(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel,
                   std::size_t stride, std::size_t pad);
  Var<Scalar> conv_bn(ConvBn& layer, const Var<Scalar>& x, const ForwardOptions& o);
  Var<Scalar> hook(std::size_t index, const Var<Scalar>& act, const ForwardOptions& o);
  void register_params();
  void initialize(std::uint64_t seed);

  ModelSpec spec_;
  std::vector<std::string> hook_names_;
  std::vector<ConvBn> plain_;
  std::vector<bool> plain_pool_;
  std::optional<ConvBn> stem_;
  std::vector<Block> blocks_;
  Var<Scalar> fc_weight_;
  Var<Scalar> fc_bias_;
  std::vector<Parameter> params_;
  std::optional<Binding> binding_;
};

/// Convenience wrapper matching the module contract.
template <typename Scalar>
void attach_regularizer(Model<Scalar>& model, const RegularizerConfig& config, std::uint64_t seed) {
  model.attach_regularizer(config, seed);
}

extern template class Model<float>;
extern template class Model<double>;

}  // namespace sscale
