#include "sscale/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>

#include "sscale/errors.hpp"

namespace sscale {

Normalization compute_normalization(std::span<const LabeledImage> images) {
  if (images.empty()) throw ConfigError("cannot compute normalization of an empty dataset");
  const std::size_t c = images.front().pixels.dim(0);
  const std::size_t hw = images.front().pixels.size() / c;
  Normalization norm{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
  const double count = static_cast<double>(images.size() * hw);
  for (const auto& img : images)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < hw; ++i) norm.mean[ch] += img.pixels[ch * hw + i];
  for (auto& m : norm.mean) m /= count;
  for (const auto& img : images) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < hw; ++i) {
        const double d = img.pixels[ch * hw + i] - norm.mean[ch];
        norm.stddev[ch] += d * d;
      }
    }
  }
  for (auto& s : norm.stddev) {
    s = std::sqrt(s / count);
    if (s <= 0) s = 1.0;
  }
  return norm;
}

void standardize(std::span<LabeledImage> images, const Normalization& norm) {
  for (auto& img : images) {
    const std::size_t c = img.pixels.dim(0);
    if (norm.mean.size() != c || norm.stddev.size() != c) {
      throw ConfigError("normalization has " + std::to_string(norm.mean.size()) +
                        " channels, image has " + std::to_string(c));
    }
    const std::size_t hw = img.pixels.size() / c;
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < hw; ++i) {
        float& v = img.pixels[ch * hw + i];
        v = static_cast<float>((v - norm.mean[ch]) / norm.stddev[ch]);
      }
    }
  }
}

namespace {

void finish(Dataset& data, const std::optional<Normalization>& norm) {
  if (data.empty()) {
    if (norm) data.normalization = *norm;
    return;
  }
  data.normalization = norm ? *norm : compute_normalization(data.images);
  standardize(data.images, data.normalization);
}

}  // namespace

Dataset load_cifar_binary(const std::filesystem::path& path, std::optional<std::size_t> limit,
                          const std::optional<Normalization>& norm, std::size_t num_classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open CIFAR file: " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  if (bytes.size() % kCifarRecordBytes != 0) {
    const std::size_t offset = bytes.size() / kCifarRecordBytes * kCifarRecordBytes;
    throw FormatError("CIFAR file " + path.string() + " has a truncated record at byte offset " +
                      std::to_string(offset) + " (length " + std::to_string(bytes.size()) +
                      " is not a multiple of 3073)");
  }
  std::size_t records = bytes.size() / kCifarRecordBytes;
  if (limit) records = std::min(records, *limit);

  Dataset data;
  data.num_classes = num_classes;
  data.images.reserve(records);
  for (std::size_t r = 0; r < records; ++r) {
    const std::size_t offset = r * kCifarRecordBytes;
    const unsigned label = bytes[offset];
    if (label >= num_classes) {
      throw FormatError("CIFAR record at byte offset " + std::to_string(offset) + " has label " +
                        std::to_string(label) + " >= " + std::to_string(num_classes) +
                        " classes");
    }
    Tensor<float> pixels({3, 32, 32});
    for (std::size_t i = 0; i < 3072; ++i) pixels[i] = bytes[offset + 1 + i] / 255.0f;
    data.images.push_back({std::move(pixels), static_cast<int>(label)});
  }
  finish(data, norm);
  return data;
}

Dataset synthesize_dataset(std::size_t num_classes, std::size_t n, std::uint64_t seed,
                           std::size_t size, const std::optional<Normalization>& norm) {
  if (num_classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
  if (size < 4) throw ConfigError("synthetic images must be at least 4x4");
  constexpr double kPi = 3.14159265358979323846;

  // Class colors spread around the hue circle.
  std::vector<std::array<double, 3>> colors(num_classes);
  for (std::size_t k = 0; k < num_classes; ++k) {
    const double hue = 2.0 * kPi * static_cast<double>(k) / static_cast<double>(num_classes);
    for (std::size_t ch = 0; ch < 3; ++ch) {
      colors[k][ch] = 0.5 + 0.5 * std::cos(hue - 2.0 * kPi * static_cast<double>(ch) / 3.0);
    }
  }

  Dataset data;
  data.num_classes = num_classes;
  data.images.reserve(n);
  const double extent = static_cast<double>(size);
  for (std::size_t i = 0; i < n; ++i) {
    RngStream rng(derive_key({seed, 0x5E7DA7AULL, i}));
    const int label = static_cast<int>(i % num_classes);
    Tensor<float> pixels({3, size, size});

    auto blob = [&](const std::array<double, 3>& color, double amplitude) {
      const double cy = rng.uniform(0.2 * extent, 0.8 * extent);
      const double cx = rng.uniform(0.2 * extent, 0.8 * extent);
      const double sigma = rng.uniform(0.08 * extent, 0.18 * extent);
      for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
          const double dy = static_cast<double>(y) + 0.5 - cy;
          const double dx = static_cast<double>(x) + 0.5 - cx;
          const double g = amplitude * std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
          for (std::size_t ch = 0; ch < 3; ++ch) {
            pixels[(ch * size + y) * size + x] += static_cast<float>(g * color[ch]);
          }
        }
      }
    };

    std::array<double, 3> color = colors[static_cast<std::size_t>(label)];
    for (auto& v : color) v = std::clamp(v + 0.15 * rng.normal(), 0.0, 1.0);
    blob(color, rng.uniform(0.6, 1.0));
    std::array<double, 3> distractor{rng.uniform(), rng.uniform(), rng.uniform()};
    blob(distractor, rng.uniform(0.2, 0.5));
    for (auto& v : pixels.data()) {
      v = static_cast<float>(std::clamp(v + 0.1 + 0.08 * rng.normal(), 0.0, 1.0));
    }
    data.images.push_back({std::move(pixels), label});
  }
  finish(data, norm);
  return data;
}

Tensor<float> pad_crop_at(const Tensor<float>& image, std::size_t pad, std::size_t oy,
                          std::size_t ox) {
  if (image.rank() != 3) {
    throw DimensionError("pad_crop expects [C,H,W], got " + shape_string(image.shape()));
  }
  if (oy > 2 * pad || ox > 2 * pad) {
    throw ConfigError("crop offset (" + std::to_string(oy) + "," + std::to_string(ox) +
                      ") outside [0," + std::to_string(2 * pad) + "]");
  }
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor<float> out(image.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      // Source row in the unpadded image.
      const auto sy = static_cast<std::ptrdiff_t>(y + oy) - static_cast<std::ptrdiff_t>(pad);
      if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
      for (std::size_t x = 0; x < w; ++x) {
        const auto sx = static_cast<std::ptrdiff_t>(x + ox) - static_cast<std::ptrdiff_t>(pad);
        if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
        out[(ch * h + y) * w + x] = image[(ch * h + static_cast<std::size_t>(sy)) * w +
                                          static_cast<std::size_t>(sx)];
      }
    }
  }
  return out;
}

Tensor<float> pad_crop(const Tensor<float>& image, std::size_t pad, RngStream& rng) {
  const auto oy = static_cast<std::size_t>(rng.index(2 * pad + 1));
  const auto ox = static_cast<std::size_t>(rng.index(2 * pad + 1));
  return pad_crop_at(image, pad, oy, ox);
}

Tensor<float> flip_horizontal(const Tensor<float>& image) {
  if (image.rank() != 3) {
    throw DimensionError("hflip expects [C,H,W], got " + shape_string(image.shape()));
  }
  const std::size_t rows = image.dim(0) * image.dim(1), w = image.dim(2);
  Tensor<float> out(image.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t x = 0; x < w; ++x) out[r * w + x] = image[r * w + (w - 1 - x)];
  return out;
}

Tensor<float> hflip(const Tensor<float>& image, double prob, RngStream& rng) {
  if (!(prob >= 0.0) || prob > 1.0) {
    throw ConfigError("flip probability must be in [0, 1], got " + std::to_string(prob));
  }
  return rng.bernoulli(prob) ? flip_horizontal(image) : image;
}

LabeledImage augment(const LabeledImage& image, const AugmentOptions& options, std::uint64_t seed,
                     std::uint64_t epoch, std::uint64_t index) {
  if (!options.enabled) return image;
  RngStream rng(derive_key({seed, 0xA06ULL, epoch, index}));
  Tensor<float> px = pad_crop(image.pixels, options.pad, rng);
  return {hflip(px, options.flip_prob, rng), image.label};
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  return permutation(n, RngStream(derive_key({seed, 0x5ECULL, epoch})));
}

template <typename S>
Batch<S> make_batch(const Dataset& data, std::span<const std::size_t> indices,
                    const AugmentOptions& options, std::uint64_t seed, std::uint64_t epoch) {
  if (indices.empty()) throw DimensionError("make_batch: empty index list");
  const Shape& img_shape = data.images.at(indices[0]).pixels.shape();
  const std::size_t per = shape_size(img_shape);
  Batch<S> batch{Tensor<S>({indices.size(), img_shape[0], img_shape[1], img_shape[2]}), {}};
  batch.labels.reserve(indices.size());
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const LabeledImage& src = data.images.at(indices[b]);
    if (src.pixels.shape() != img_shape) {
      throw DimensionError("make_batch: mixed image shapes in one batch");
    }
    const LabeledImage img =
        options.enabled ? augment(src, options, seed, epoch, indices[b]) : src;
    std::copy(img.pixels.data().begin(), img.pixels.data().end(), batch.images.raw() + b * per);
    batch.labels.push_back(img.label);
  }
  return batch;
}

template Batch<float> make_batch(const Dataset&, std::span<const std::size_t>,
                                 const AugmentOptions&, std::uint64_t, std::uint64_t);
template Batch<double> make_batch(const Dataset&, std::span<const std::size_t>,
                                  const AugmentOptions&, std::uint64_t, std::uint64_t);

}  // namespace sscale
