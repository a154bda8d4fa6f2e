#pragma once

// Structured feature-map regularizers.
//
// Random methods (dropout, spatial dropout, spatial scale) perturb units or
// whole maps independently. Selective methods (selectout, select-scale) first
// score each map of a sample by its peak activation, rank the maps, and then
// only perturb maps from the top-t candidate pool:
//
//   selectout:     r = S(Y, t, p),     y_i' = r_i * y_i / p,   r_i in {0, 1}
//   select-scale:  v = S(Y, t, 1 - t), y_i' = r_i * y_i,
//                  r_i = (1 - v_i)(u_i - 1) + 1,  u_i ~ Uniform(1 - q, 1 + q)
//
// All transforms are the identity in evaluation mode. Masks are drawn per
// sample from that sample's own RNG stream and are constants for backprop.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sscale/ops.hpp"
#include "sscale/rng.hpp"
#include "sscale/tensor.hpp"

namespace sscale {

enum class Method { None, Dropout, SpatialDropout, SpatialScale, Selectout, SelectScale };

std::string_view to_string(Method m) noexcept;
Method parse_method(std::string_view name);

/// True for the methods that zero maps and rescale survivors by 1/p.
constexpr bool is_drop_method(Method m) noexcept {
  return m == Method::Dropout || m == Method::SpatialDropout || m == Method::Selectout;
}
constexpr bool is_scale_method(Method m) noexcept {
  return m == Method::SpatialScale || m == Method::SelectScale;
}

enum class ScoreKind {
  MaxAbs,          // max |y| over the map
  Max,             // plain max; equivalent to MaxAbs on post-ReLU maps
  AvgPoolThenMax,  // k x k average pooling (stride k), then max
  GlobalAvg,       // mean of the map
};

struct ScoreMode {
  ScoreKind kind = ScoreKind::MaxAbs;
  std::size_t pool_window = 2;  // AvgPoolThenMax only

  bool operator==(const ScoreMode&) const = default;
};

std::string to_string(ScoreMode mode);
/// Accepts max_abs, max, global_avg, avgpool:K.
ScoreMode parse_score_mode(std::string_view text);

/// Per-map importance scores of one sample.
struct ScoreVector {
  std::vector<double> scores;

  std::size_t size() const noexcept { return scores.size(); }
};

/// Scores the C maps of one sample stored contiguously as [C,H,W].
template <typename Scalar>
ScoreVector score_feature_maps(std::span<const Scalar> sample, std::size_t channels,
                               std::size_t height, std::size_t width, ScoreMode mode);

/// `activation` must be [C,H,W].
template <typename Scalar>
ScoreVector score_feature_maps(const Tensor<Scalar>& activation, ScoreMode mode);

/// Number of top-ranked maps forming the candidate pool: max(1, round(t*c)).
std::size_t candidate_count(std::size_t channels, double top_rate);
/// Number of maps dropped at retaining rate p: round((1-p)*c).
std::size_t drop_count(std::size_t channels, double retain_rate);

/// Map indices sorted by descending score; ties go to the lower index.
std::vector<std::size_t> rank_maps(const ScoreVector& scores);

/// The candidate_count(c, t) highest-ranked map indices, in rank order.
std::vector<std::size_t> candidate_pool(const ScoreVector& scores, double top_rate);

/// Retain mask of the selecting function: 1 = keep, 0 = drop.
///
/// The candidate pool is the top max(1, round(t*c)) maps by score. Then
/// n = round((1-p)*c) of them are drawn without replacement by a partial
/// Fisher-Yates pass over the pool in rank order:
///   for i in [0, n): j = i + rng.index(pool_size - i); swap(pool[i], pool[j])
/// and pool[0..n) are dropped. Throws ConfigError if n exceeds the pool.
std::vector<std::uint8_t> select(const ScoreVector& scores, double top_rate, double retain_rate,
                                 RngStream& rng);

/// Per-map factors for one sample plus the selection flags that produced them.
struct DropMask {
  Method method = Method::None;
  std::vector<double> factors;           // r_i
  std::vector<std::uint8_t> selection;  // v_i (select-scale) or retain flags (selectout)
};

/// Hyperparameters of one transform invocation. `rescale` only affects the drop
/// methods; turning it off gives raw zeroing without the 1/p compensation.
struct TransformSettings {
  Method method = Method::None;
  double top_rate = 0.2;    // t
  double retain_rate = 0.9; // p
  double half_width = 0.4;  // q
  ScoreMode score_mode{};
  bool rescale = true;

  /// Range checks for the parameters the method actually uses.
  void validate() const;
};

/// Draws the map mask for one sample of a map-level method. `sample` is [C,H,W].
template <typename Scalar>
DropMask draw_map_mask(const TransformSettings& settings, std::span<const Scalar> sample,
                       std::size_t channels, std::size_t height, std::size_t width,
                       RngStream& rng);

/// Applies `settings` to a batch Y[N,C,H,W] with one stream per sample.
/// With `training == false` or method None the input Var is returned as is.
template <typename Scalar>
Var<Scalar> regularize(GradTape* tape, const Var<Scalar>& y, const TransformSettings& settings,
                       const SampleStreams& streams, bool training);

template <typename Scalar>
Tensor<Scalar> apply_transform(const Tensor<Scalar>& y, const TransformSettings& settings,
                               const SampleStreams& streams, bool training);

template <typename Scalar>
Tensor<Scalar> apply_dropout(const Tensor<Scalar>& y, double p, const SampleStreams& streams,
                             bool training);
template <typename Scalar>
Tensor<Scalar> apply_spatial_dropout(const Tensor<Scalar>& y, double p,
                                     const SampleStreams& streams, bool training);
template <typename Scalar>
Tensor<Scalar> apply_spatial_scale(const Tensor<Scalar>& y, double q, const SampleStreams& streams,
                                   bool training);
template <typename Scalar>
Tensor<Scalar> apply_selectout(const Tensor<Scalar>& y, double t, double p,
                               const SampleStreams& streams, bool training,
                               ScoreMode mode = {});
template <typename Scalar>
Tensor<Scalar> apply_select_scale(const Tensor<Scalar>& y, double t, double q,
                                  const SampleStreams& streams, bool training,
                                  ScoreMode mode = {});

/// Linear schedule: start + (end - start) * epoch / total.
double curriculum_rate(std::size_t epoch, std::size_t total_epochs, double start_rate,
                       double end_rate);

struct Curriculum {
  double start = 1.0;
  double end = 1.0;
};

/// Method, hyperparameters, and placement of the regularizer for a training run.
struct RegularizerConfig {
  Method method = Method::None;
  double top_rate = 0.2;
  double retain_rate = 0.9;
  double half_width = 0.4;
  // Unset means: max when hooks sit after ReLU, max_abs otherwise.
  std::optional<ScoreMode> score_mode;
  // Hook names; "all" expands to every hook of the model.
  std::vector<std::string> placement = {"all"};
  // Scheduled p (drop methods) or q (scale methods).
  std::optional<Curriculum> curriculum;

  /// Throws ConfigError on out-of-range or mutually inconsistent values.
  void validate() const;

  /// The p or q in effect at `epoch`, or 1 for method none.
  double effective_rate(std::size_t epoch, std::size_t total_epochs) const;

  /// Settings for `epoch`, with the curriculum applied.
  TransformSettings settings_at(std::size_t epoch, std::size_t total_epochs,
                                bool hooks_after_relu) const;
};

}  // namespace sscale
