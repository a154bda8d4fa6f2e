#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sscale/data.hpp"
#include "sscale/model.hpp"
#include "sscale/regularizers.hpp"

namespace sscale {

struct AblationPoint {
  double rate = 1.0;
  double error = 0.0;
};

/// Test error as a function of the inference-time retaining rate.
struct AblationCurve {
  Method method = Method::SpatialDropout;
  std::vector<AblationPoint> points;  // strictly decreasing rate
  std::uint64_t seed = 0;
  bool rescale = true;
};

struct AblationOptions {
  Method method = Method::SpatialDropout;  // spatial_dropout or selectout
  std::vector<double> rates;
  std::uint64_t seed = 1;
  // Apply the training-time 1/p factor to surviving maps. Off gives raw zeroing.
  bool rescale = true;
  // Candidate pool for selectout; every rate must satisfy 1 - rate <= top_rate.
  // Unset: t = 1 - rate, so exactly the highest-scored maps are dropped.
  std::optional<double> top_rate;
  std::optional<ScoreMode> score_mode;
  std::vector<std::string> placement = {"all"};
  std::size_t batch_size = 128;
};

/// Evaluates `model` on `data` with the drop transform forced on at each rate.
/// Batch-norm stays in inference mode. Rates are visited in decreasing order.
template <typename Scalar>
AblationCurve ablate(Model<Scalar>& model, const Dataset& data, const AblationOptions& options);

/// Pointwise mean error of curves sharing method and rates. The result's seed is 0.
AblationCurve average_curves(std::span<const AblationCurve> curves);

/// CSV with header rate,error,method,seed.
void write_ablation_csv(std::ostream& out, std::span<const AblationCurve> curves);

/// Class activation map over the last feature maps before global average pooling.
struct HeatMap {
  Tensor<double> values;  // [h,w], min-max normalized to [0,1]
  Tensor<double> raw;     // [h,w], sum_k w[class,k] * f_k
  std::size_t class_index = 0;
  std::string layer;
};

/// Min-max normalization; a constant map becomes all zeros.
Tensor<double> normalize_heatmap(const Tensor<double>& raw);

/// CAM of one image [C,H,W]. Throws UnsupportedArchitecture without a GAP head.
template <typename Scalar>
HeatMap cam(Model<Scalar>& model, const Tensor<float>& image, std::size_t class_index);

/// CAM from given features [C,h,w] and classifier weight [classes, C].
template <typename Scalar>
HeatMap cam_from_features(const Tensor<Scalar>& features, const Tensor<Scalar>& classifier_weight,
                          std::size_t class_index);

/// Binary 8-bit PGM (P5), value = round(255 * normalized).
void write_pgm(std::ostream& out, const HeatMap& map);
/// Raw (unnormalized) values, one row per line.
void write_heatmap_csv(std::ostream& out, const HeatMap& map);

}  // namespace sscale
