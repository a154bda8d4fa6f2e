#include "sscale/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "sscale/errors.hpp"
#include "sscale/trainer.hpp"

namespace sscale {

template <typename S>
AblationCurve ablate(Model<S>& model, const Dataset& data, const AblationOptions& options) {
  if (options.method != Method::SpatialDropout && options.method != Method::Selectout) {
    throw ConfigError("ablation supports spatial_dropout and selectout, not " +
                      std::string(to_string(options.method)));
  }
  if (options.rates.empty()) throw ConfigError("ablation needs at least one rate");
  std::vector<double> rates = options.rates;
  std::sort(rates.begin(), rates.end(), std::greater<>());
  for (std::size_t i = 0; i < rates.size(); ++i) {
    if (!(rates[i] > 0.0) || rates[i] > 1.0) {
      throw ConfigError("ablation rate " + std::to_string(rates[i]) + " is outside (0, 1]");
    }
    if (i > 0 && rates[i] == rates[i - 1]) {
      throw ConfigError("duplicate ablation rate " + std::to_string(rates[i]));
    }
  }

  RegularizerConfig reg;
  reg.method = options.method;
  reg.top_rate = options.top_rate.value_or(1.0);
  reg.retain_rate = 1.0;
  reg.score_mode = options.score_mode;
  reg.placement = options.placement;
  model.attach_regularizer(reg, options.seed);

  AblationCurve curve{options.method, {}, options.seed, options.rescale};
  try {
    for (double rate : rates) {
      TransformSettings s = *model.regularizer_settings();
      s.retain_rate = rate;
      s.top_rate = options.top_rate.value_or(1.0 - rate);
      s.rescale = options.rescale;
      model.set_regularizer_settings(s);  // validates the selectout t constraint
      const EvalResult r = evaluate(model, data, options.batch_size, true);
      curve.points.push_back({rate, r.error});
    }
  } catch (...) {
    model.detach_regularizer();
    throw;
  }
  model.detach_regularizer();
  return curve;
}

AblationCurve average_curves(std::span<const AblationCurve> curves) {
  if (curves.empty()) throw ConfigError("no curves to average");
  AblationCurve avg = curves.front();
  avg.seed = 0;
  for (std::size_t c = 1; c < curves.size(); ++c) {
    const AblationCurve& other = curves[c];
    if (other.method != avg.method || other.points.size() != avg.points.size()) {
      throw ConfigError("cannot average curves with different methods or rate grids");
    }
    for (std::size_t i = 0; i < avg.points.size(); ++i) {
      if (other.points[i].rate != avg.points[i].rate) {
        throw ConfigError("cannot average curves with different rate grids");
      }
      avg.points[i].error += other.points[i].error;
    }
  }
  for (auto& p : avg.points) p.error /= static_cast<double>(curves.size());
  return avg;
}

void write_ablation_csv(std::ostream& out, std::span<const AblationCurve> curves) {
  out << "rate,error,method,seed\n";
  char buf[64];
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      std::snprintf(buf, sizeof buf, "%.9g,%.9g,", p.rate, p.error);
      out << buf << to_string(c.method) << ',' << c.seed << '\n';
    }
  }
}

Tensor<double> normalize_heatmap(const Tensor<double>& raw) {
  Tensor<double> out(raw.shape());
  const auto [lo, hi] = std::minmax_element(raw.data().begin(), raw.data().end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - *lo) / range;
  return out;
}

template <typename S>
HeatMap cam_from_features(const Tensor<S>& features, const Tensor<S>& classifier_weight,
                          std::size_t class_index) {
  if (features.rank() != 3) {
    throw DimensionError("CAM features must be [C,h,w], got " + shape_string(features.shape()));
  }
  const std::size_t c = features.dim(0), h = features.dim(1), w = features.dim(2);
  if (classifier_weight.rank() != 2 || classifier_weight.dim(1) != c) {
    throw UnsupportedArchitecture("classifier weight " + shape_string(classifier_weight.shape()) +
                                  " does not act on " + std::to_string(c) + " pooled channels");
  }
  if (class_index >= classifier_weight.dim(0)) {
    throw ConfigError("class index " + std::to_string(class_index) + " out of range for " +
                      std::to_string(classifier_weight.dim(0)) + " classes");
  }
  HeatMap map;
  map.class_index = class_index;
  map.raw = Tensor<double>({h, w});
  for (std::size_t k = 0; k < c; ++k) {
    const double wk = classifier_weight[class_index * c + k];
    for (std::size_t i = 0; i < h * w; ++i) map.raw[i] += wk * features[k * h * w + i];
  }
  map.values = normalize_heatmap(map.raw);
  return map;
}

template <typename S>
HeatMap cam(Model<S>& model, const Tensor<float>& image, std::size_t class_index) {
  if (!model.has_gap_head()) {
    throw UnsupportedArchitecture("CAM needs a global-average-pool classifier head");
  }
  if (image.rank() != 3) {
    throw DimensionError("CAM expects one image [C,H,W], got " + shape_string(image.shape()));
  }
  Shape batched{1, image.dim(0), image.dim(1), image.dim(2)};
  const Tensor<S> x = image.cast<S>().reshaped(batched);
  typename Model<S>::ForwardOptions o;
  auto out = model.forward(x, o);
  const Tensor<S>& f = out.features.value();
  HeatMap map = cam_from_features(f.reshaped({f.dim(1), f.dim(2), f.dim(3)}),
                                  model.classifier_weight(), class_index);
  map.layer = model.hooks().back();
  return map;
}

void write_pgm(std::ostream& out, const HeatMap& map) {
  const std::size_t h = map.values.dim(0), w = map.values.dim(1);
  out << "P5\n" << w << ' ' << h << "\n255\n";
  for (double v : map.values.data()) {
    const long q = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
    out.put(static_cast<char>(static_cast<unsigned char>(q)));
  }
}

void write_heatmap_csv(std::ostream& out, const HeatMap& map) {
  const std::size_t h = map.raw.dim(0), w = map.raw.dim(1);
  char buf[32];
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      std::snprintf(buf, sizeof buf, "%.9g", map.raw[y * w + x]);
      out << (x ? "," : "") << buf;
    }
    out << '\n';
  }
}

#define SSCALE_INSTANTIATE_ANALYSIS(S)                                                      \
  template AblationCurve ablate(Model<S>&, const Dataset&, const AblationOptions&);        \
  template HeatMap cam_from_features(const Tensor<S>&, const Tensor<S>&, std::size_t);     \
  template HeatMap cam(Model<S>&, const Tensor<float>&, std::size_t);

SSCALE_INSTANTIATE_ANALYSIS(float)
SSCALE_INSTANTIATE_ANALYSIS(double)

#undef SSCALE_INSTANTIATE_ANALYSIS

}  // namespace sscale
