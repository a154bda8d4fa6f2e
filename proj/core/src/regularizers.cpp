#include "sscale/regularizers.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "sscale/errors.hpp"
#include "sscale/kernels.hpp"

namespace sscale {
namespace {

// Slack for comparisons like 1 - p <= t where both sides come from decimal input.
constexpr double kRateSlack = 1e-12;

void require_nchw(const Shape& s, const char* what) {
  if (s.size() != 4) {
    throw DimensionError(std::string(what) + " expects [N,C,H,W], got " + shape_string(s));
  }
}

void require_streams(const SampleStreams& streams, std::size_t n) {
  if (streams.size() < n) {
    throw DimensionError("need " + std::to_string(n) + " sample streams, got " +
                         std::to_string(streams.size()));
  }
}

void check_retain_rate(double p, const char* method) {
  if (!(p > 0.0) || p > 1.0) {
    throw ConfigError(std::string(method) + ": retaining rate p must be in (0, 1], got " +
                      std::to_string(p));
  }
}

void check_half_width(double q, const char* method) {
  if (!(q >= 0.0) || q > 1.0) {
    throw ConfigError(std::string(method) + ": scale half-width q must be in [0, 1], got " +
                      std::to_string(q));
  }
}

void check_top_rate(double t, const char* method) {
  if (!(t >= 0.0) || t > 1.0) {
    throw ConfigError(std::string(method) + ": top rate t must be in [0, 1], got " +
                      std::to_string(t));
  }
}

}  // namespace

std::string_view to_string(Method m) noexcept {
  switch (m) {
    case Method::None: return "none";
    case Method::Dropout: return "dropout";
    case Method::SpatialDropout: return "spatial_dropout";
    case Method::SpatialScale: return "spatial_scale";
    case Method::Selectout: return "selectout";
    case Method::SelectScale: return "select_scale";
  }
  return "none";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::None, Method::Dropout, Method::SpatialDropout, Method::SpatialScale,
                   Method::Selectout, Method::SelectScale}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown regularizer method '" + std::string(name) +
                    "' (expected none, dropout, spatial_dropout, spatial_scale, selectout, "
                    "select_scale)");
}

std::string to_string(ScoreMode mode) {
  switch (mode.kind) {
    case ScoreKind::MaxAbs: return "max_abs";
    case ScoreKind::Max: return "max";
    case ScoreKind::GlobalAvg: return "global_avg";
    case ScoreKind::AvgPoolThenMax: return "avgpool:" + std::to_string(mode.pool_window);
  }
  return "max_abs";
}

ScoreMode parse_score_mode(std::string_view text) {
  if (text == "max_abs") return {ScoreKind::MaxAbs, 2};
  if (text == "max") return {ScoreKind::Max, 2};
  if (text == "global_avg") return {ScoreKind::GlobalAvg, 2};
  constexpr std::string_view prefix = "avgpool:";
  if (text.starts_with(prefix)) {
    const std::string_view digits = text.substr(prefix.size());
    std::size_t k = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), k);
    if (ec == std::errc() && ptr == digits.data() + digits.size() && k > 0) {
      return {ScoreKind::AvgPoolThenMax, k};
    }
  }
  throw ConfigError("unknown score mode '" + std::string(text) +
                    "' (expected max_abs, max, global_avg, avgpool:K)");
}

template <typename S>
ScoreVector score_feature_maps(std::span<const S> sample, std::size_t channels,
                               std::size_t height, std::size_t width, ScoreMode mode) {
  const std::size_t hw = height * width;
  if (channels == 0 || hw == 0) {
    throw DimensionError("score_feature_maps: empty activation (" + std::to_string(channels) +
                         " maps of " + std::to_string(height) + "x" + std::to_string(width) + ")");
  }
  if (sample.size() != channels * hw) {
    throw DimensionError("score_feature_maps: " + std::to_string(sample.size()) +
                         " values for " + std::to_string(channels) + " maps of " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  ScoreVector out{std::vector<double>(channels)};
  for (std::size_t c = 0; c < channels; ++c) {
    const S* map = sample.data() + c * hw;
    double score = 0;
    switch (mode.kind) {
      case ScoreKind::MaxAbs: {
        score = std::abs(static_cast<double>(map[0]));
        for (std::size_t i = 1; i < hw; ++i) score = std::max(score, std::abs(static_cast<double>(map[i])));
        break;
      }
      case ScoreKind::Max: {
        score = static_cast<double>(map[0]);
        for (std::size_t i = 1; i < hw; ++i) score = std::max(score, static_cast<double>(map[i]));
        break;
      }
      case ScoreKind::GlobalAvg: {
        for (std::size_t i = 0; i < hw; ++i) score += static_cast<double>(map[i]);
        score /= static_cast<double>(hw);
        break;
      }
      case ScoreKind::AvgPoolThenMax: {
        const std::size_t k = mode.pool_window;
        if (k == 0 || k > height || k > width) {
          throw ConfigError("avgpool score window " + std::to_string(k) + " exceeds map " +
                            std::to_string(height) + "x" + std::to_string(width));
        }
        const std::size_t oh = (height - k) / k + 1, ow = (width - k) / k + 1;
        bool first = true;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          for (std::size_t ox = 0; ox < ow; ++ox) {
            double acc = 0;
            for (std::size_t i = 0; i < k; ++i)
              for (std::size_t j = 0; j < k; ++j)
                acc += static_cast<double>(map[(oy * k + i) * width + ox * k + j]);
            acc /= static_cast<double>(k * k);
            score = first ? acc : std::max(score, acc);
            first = false;
          }
        }
        break;
      }
    }
    out.scores[c] = score;
  }
  return out;
}

template <typename S>
ScoreVector score_feature_maps(const Tensor<S>& activation, ScoreMode mode) {
  if (activation.rank() != 3) {
    throw DimensionError("score_feature_maps expects one sample [C,H,W], got " +
                         shape_string(activation.shape()));
  }
  return score_feature_maps<S>(activation.data(), activation.dim(0), activation.dim(1),
                               activation.dim(2), mode);
}

std::size_t candidate_count(std::size_t channels, double top_rate) {
  const auto n = static_cast<std::size_t>(std::llround(top_rate * static_cast<double>(channels)));
  return std::clamp<std::size_t>(n, 1, std::max<std::size_t>(channels, 1));
}

std::size_t drop_count(std::size_t channels, double retain_rate) {
  return static_cast<std::size_t>(
      std::llround((1.0 - retain_rate) * static_cast<double>(channels)));
}

std::vector<std::size_t> rank_maps(const ScoreVector& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores.scores[a] != scores.scores[b]) return scores.scores[a] > scores.scores[b];
    return a < b;
  });
  return order;
}

std::vector<std::size_t> candidate_pool(const ScoreVector& scores, double top_rate) {
  if (scores.size() == 0) throw DimensionError("candidate_pool: no feature maps");
  const std::size_t n_cand = candidate_count(scores.size(), top_rate);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto better = [&](std::size_t a, std::size_t b) {
    if (scores.scores[a] != scores.scores[b]) return scores.scores[a] > scores.scores[b];
    return a < b;
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_cand),
                    order.end(), better);
  order.resize(n_cand);
  return order;
}

std::vector<std::uint8_t> select(const ScoreVector& scores, double top_rate, double retain_rate,
                                 RngStream& rng) {
  const std::size_t c = scores.size();
  if (c == 0) throw DimensionError("select: no feature maps to rank");
  check_top_rate(top_rate, "select");
  check_retain_rate(retain_rate, "select");
  std::vector<std::uint8_t> keep(c, 1);
  const std::size_t n_drop = drop_count(c, retain_rate);
  if (n_drop == 0) return keep;
  std::vector<std::size_t> pool = candidate_pool(scores, top_rate);
  if (n_drop > pool.size()) {
    throw ConfigError("select: n_drop = " + std::to_string(n_drop) + " exceeds n_cand = " +
                      std::to_string(pool.size()) + " (c = " + std::to_string(c) +
                      ", t = " + std::to_string(top_rate) + ", p = " +
                      std::to_string(retain_rate) + ")");
  }
  for (std::size_t i = 0; i < n_drop; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.index(pool.size() - i));
    std::swap(pool[i], pool[j]);
    keep[pool[i]] = 0;
  }
  return keep;
}

void TransformSettings::validate() const {
  switch (method) {
    case Method::None: break;
    case Method::Dropout:
    case Method::SpatialDropout:
      check_retain_rate(retain_rate, to_string(method).data());
      break;
    case Method::SpatialScale:
      check_half_width(half_width, "spatial_scale");
      break;
    case Method::Selectout:
      check_top_rate(top_rate, "selectout");
      check_retain_rate(retain_rate, "selectout");
      if (1.0 - retain_rate > top_rate + kRateSlack) {
        throw ConfigError("selectout: cannot drop 1 - p = " + std::to_string(1.0 - retain_rate) +
                          " of the maps from a top-t pool of t = " + std::to_string(top_rate));
      }
      break;
    case Method::SelectScale:
      check_top_rate(top_rate, "select_scale");
      if (top_rate <= 0.0) throw ConfigError("select_scale: top rate t must be > 0");
      check_half_width(half_width, "select_scale");
      break;
  }
  if (score_mode.kind == ScoreKind::AvgPoolThenMax && score_mode.pool_window == 0) {
    throw ConfigError("avgpool score window must be positive");
  }
}

template <typename S>
DropMask draw_map_mask(const TransformSettings& settings, std::span<const S> sample,
                       std::size_t channels, std::size_t height, std::size_t width,
                       RngStream& rng) {
  DropMask mask{settings.method, std::vector<double>(channels, 1.0),
                std::vector<std::uint8_t>(channels, 1)};
  const double p = settings.retain_rate;
  const double q = settings.half_width;
  const double survivor = settings.rescale ? 1.0 / p : 1.0;
  switch (settings.method) {
    case Method::None:
      break;
    case Method::Dropout:
      throw ConfigError("dropout acts on units, not maps; use regularize()");
    case Method::SpatialDropout:
      for (std::size_t c = 0; c < channels; ++c) {
        mask.selection[c] = rng.bernoulli(p) ? 1 : 0;
        mask.factors[c] = mask.selection[c] ? survivor : 0.0;
      }
      break;
    case Method::SpatialScale:
      for (std::size_t c = 0; c < channels; ++c) mask.factors[c] = rng.uniform(1.0 - q, 1.0 + q);
      break;
    case Method::Selectout: {
      const ScoreVector scores =
          score_feature_maps<S>(sample, channels, height, width, settings.score_mode);
      mask.selection = select(scores, settings.top_rate, p, rng);
      for (std::size_t c = 0; c < channels; ++c)
        mask.factors[c] = mask.selection[c] ? survivor : 0.0;
      break;
    }
    case Method::SelectScale: {
      // v = S(Y, t, 1 - t): every candidate is selected, so no sampling is needed.
      const ScoreVector scores =
          score_feature_maps<S>(sample, channels, height, width, settings.score_mode);
      for (std::size_t c : candidate_pool(scores, settings.top_rate)) {
        mask.selection[c] = 0;
        const double u = rng.uniform(1.0 - q, 1.0 + q);
        mask.factors[c] = (1.0 - mask.selection[c]) * (u - 1.0) + 1.0;
      }
      break;
    }
  }
  return mask;
}

namespace {

template <typename S>
Tensor<S> unit_dropout_mask(const Shape& shape, double p, const SampleStreams& streams) {
  Tensor<S> mask(shape);
  const std::size_t per_sample = mask.size() / shape[0];
  const auto survivor = static_cast<S>(1.0 / p);
  for (std::size_t n = 0; n < shape[0]; ++n) {
    RngStream rng = streams.stream(n);
    S* m = mask.raw() + n * per_sample;
    for (std::size_t i = 0; i < per_sample; ++i) m[i] = rng.bernoulli(p) ? survivor : S{0};
  }
  return mask;
}

template <typename S>
std::vector<S> map_factors(const Tensor<S>& y, const TransformSettings& settings,
                           const SampleStreams& streams) {
  const std::size_t n = y.dim(0), c = y.dim(1), h = y.dim(2), w = y.dim(3);
  std::vector<S> factors(n * c);
  for (std::size_t s = 0; s < n; ++s) {
    RngStream rng = streams.stream(s);
    const DropMask mask = draw_map_mask<S>(
        settings, y.data().subspan(s * c * h * w, c * h * w), c, h, w, rng);
    for (std::size_t ch = 0; ch < c; ++ch) factors[s * c + ch] = static_cast<S>(mask.factors[ch]);
  }
  return factors;
}

bool is_noop(const TransformSettings& s) {
  switch (s.method) {
    case Method::None: return true;
    case Method::Dropout:
    case Method::SpatialDropout:
    case Method::Selectout: return s.retain_rate == 1.0;
    case Method::SpatialScale:
    case Method::SelectScale: return s.half_width == 0.0;
  }
  return true;
}

}  // namespace

template <typename S>
Var<S> regularize(GradTape* tape, const Var<S>& y, const TransformSettings& settings,
                  const SampleStreams& streams, bool training) {
  settings.validate();
  if (!training || is_noop(settings)) return y;
  require_nchw(y.shape(), to_string(settings.method).data());
  require_streams(streams, y.shape()[0]);
  if (settings.method == Method::Dropout) {
    return ops::scale_elements(tape, y, unit_dropout_mask<S>(y.shape(), settings.retain_rate, streams));
  }
  return ops::scale_channels(tape, y, map_factors(y.value(), settings, streams));
}

template <typename S>
Tensor<S> apply_transform(const Tensor<S>& y, const TransformSettings& settings,
                          const SampleStreams& streams, bool training) {
  return regularize<S>(nullptr, Var<S>(y), settings, streams, training).value();
}

template <typename S>
Tensor<S> apply_dropout(const Tensor<S>& y, double p, const SampleStreams& streams,
                        bool training) {
  TransformSettings s;
  s.method = Method::Dropout;
  s.retain_rate = p;
  return apply_transform(y, s, streams, training);
}

template <typename S>
Tensor<S> apply_spatial_dropout(const Tensor<S>& y, double p, const SampleStreams& streams,
                                bool training) {
  TransformSettings s;
  s.method = Method::SpatialDropout;
  s.retain_rate = p;
  return apply_transform(y, s, streams, training);
}

template <typename S>
Tensor<S> apply_spatial_scale(const Tensor<S>& y, double q, const SampleStreams& streams,
                              bool training) {
  TransformSettings s;
  s.method = Method::SpatialScale;
  s.half_width = q;
  return apply_transform(y, s, streams, training);
}

template <typename S>
Tensor<S> apply_selectout(const Tensor<S>& y, double t, double p, const SampleStreams& streams,
                          bool training, ScoreMode mode) {
  TransformSettings s;
  s.method = Method::Selectout;
  s.top_rate = t;
  s.retain_rate = p;
  s.score_mode = mode;
  return apply_transform(y, s, streams, training);
}

template <typename S>
Tensor<S> apply_select_scale(const Tensor<S>& y, double t, double q, const SampleStreams& streams,
                             bool training, ScoreMode mode) {
  TransformSettings s;
  s.method = Method::SelectScale;
  s.top_rate = t;
  s.half_width = q;
  s.score_mode = mode;
  return apply_transform(y, s, streams, training);
}

double curriculum_rate(std::size_t epoch, std::size_t total_epochs, double start_rate,
                       double end_rate) {
  if (total_epochs == 0) return start_rate;
  if (epoch >= total_epochs) return end_rate;
  return start_rate +
         (end_rate - start_rate) * static_cast<double>(epoch) / static_cast<double>(total_epochs);
}

void RegularizerConfig::validate() const {
  TransformSettings s;
  s.method = method;
  s.top_rate = top_rate;
  s.retain_rate = retain_rate;
  s.half_width = half_width;
  if (score_mode) s.score_mode = *score_mode;
  s.validate();
  if (curriculum && method != Method::None) {
    for (double rate : {curriculum->start, curriculum->end}) {
      TransformSettings e = s;
      (is_drop_method(method) ? e.retain_rate : e.half_width) = rate;
      e.validate();
    }
  }
  for (const auto& name : placement) {
    if (name.empty()) throw ConfigError("empty hook name in reg.placement");
  }
}

double RegularizerConfig::effective_rate(std::size_t epoch, std::size_t total_epochs) const {
  if (method == Method::None) return 1.0;
  const double fixed = is_drop_method(method) ? retain_rate : half_width;
  if (!curriculum) return fixed;
  return curriculum_rate(epoch, total_epochs, curriculum->start, curriculum->end);
}

TransformSettings RegularizerConfig::settings_at(std::size_t epoch, std::size_t total_epochs,
                                                 bool hooks_after_relu) const {
  TransformSettings s;
  s.method = method;
  s.top_rate = top_rate;
  s.retain_rate = retain_rate;
  s.half_width = half_width;
  s.score_mode = score_mode.value_or(
      ScoreMode{hooks_after_relu ? ScoreKind::Max : ScoreKind::MaxAbs, 2});
  if (method != Method::None) {
    (is_drop_method(method) ? s.retain_rate : s.half_width) = effective_rate(epoch, total_epochs);
  }
  return s;
}

#define SSCALE_INSTANTIATE_REG(S)                                                                \
  template ScoreVector score_feature_maps(std::span<const S>, std::size_t, std::size_t,         \
                                          std::size_t, ScoreMode);                               \
  template ScoreVector score_feature_maps(const Tensor<S>&, ScoreMode);                         \
  template DropMask draw_map_mask(const TransformSettings&, std::span<const S>, std::size_t,    \
                                  std::size_t, std::size_t, RngStream&);                         \
  template Var<S> regularize(GradTape*, const Var<S>&, const TransformSettings&,                \
                             const SampleStreams&, bool);                                        \
  template Tensor<S> apply_transform(const Tensor<S>&, const TransformSettings&,                \
                                     const SampleStreams&, bool);                                \
  template Tensor<S> apply_dropout(const Tensor<S>&, double, const SampleStreams&, bool);       \
  template Tensor<S> apply_spatial_dropout(const Tensor<S>&, double, const SampleStreams&,      \
                                           bool);                                                \
  template Tensor<S> apply_spatial_scale(const Tensor<S>&, double, const SampleStreams&, bool); \
  template Tensor<S> apply_selectout(const Tensor<S>&, double, double, const SampleStreams&,    \
                                     bool, ScoreMode);                                           \
  template Tensor<S> apply_select_scale(const Tensor<S>&, double, double,                       \
                                        const SampleStreams&, bool, ScoreMode);

SSCALE_INSTANTIATE_REG(float)
SSCALE_INSTANTIATE_REG(double)

#undef SSCALE_INSTANTIATE_REG

}  // namespace sscale
