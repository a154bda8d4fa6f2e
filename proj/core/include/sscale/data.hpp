#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "sscale/rng.hpp"
#include "sscale/tensor.hpp"

namespace sscale {

/// One image [C,H,W] and its class.
struct LabeledImage {
  Tensor<float> pixels;
  int label = 0;
};

/// Per-channel standardization constants.
struct Normalization {
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct Dataset {
  std::vector<LabeledImage> images;
  Normalization normalization;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return images.size(); }
  bool empty() const noexcept { return images.empty(); }
};

/// Per-channel mean and (population) standard deviation of raw pixels.
Normalization compute_normalization(std::span<const LabeledImage> images);

/// (x - mean[c]) / stddev[c] in place.
void standardize(std::span<LabeledImage> images, const Normalization& norm);

inline constexpr std::size_t kCifarRecordBytes = 3073;

/// Reads CIFAR-10 binary records (1 label byte, then 1024 R, 1024 G, 1024 B
/// bytes). Pixels are scaled to [0,1] and then standardized with `norm`, or with
/// constants computed from the loaded records when `norm` is empty. Throws
/// FormatError with the byte offset of the first bad record.
Dataset load_cifar_binary(const std::filesystem::path& path,
                          std::optional<std::size_t> limit = std::nullopt,
                          const std::optional<Normalization>& norm = std::nullopt,
                          std::size_t num_classes = 10);

/// Class-conditional Gaussian-blob images, standardized like load_cifar_binary.
///
/// Each image holds one blob whose color identifies the class, at a random
/// position and size, plus a weaker distractor blob of random color and pixel
/// noise. Deterministic per seed.
Dataset synthesize_dataset(std::size_t num_classes, std::size_t n, std::uint64_t seed,
                           std::size_t size = 16,
                           const std::optional<Normalization>& norm = std::nullopt);

/// Zero-pads by `pad` and crops the original extent at offset (oy, ox) in [0, 2*pad].
Tensor<float> pad_crop_at(const Tensor<float>& image, std::size_t pad, std::size_t oy,
                          std::size_t ox);
/// pad_crop_at with a uniformly random offset.
Tensor<float> pad_crop(const Tensor<float>& image, std::size_t pad, RngStream& rng);

/// Reverses the W axis.
Tensor<float> flip_horizontal(const Tensor<float>& image);
/// Flips with probability `prob`; the draw is consumed even when prob is 0 or 1.
Tensor<float> hflip(const Tensor<float>& image, double prob, RngStream& rng);

struct AugmentOptions {
  bool enabled = true;
  std::size_t pad = 4;
  double flip_prob = 0.5;
};

/// Crop then flip, from the (seed, epoch, index) substream.
LabeledImage augment(const LabeledImage& image, const AugmentOptions& options, std::uint64_t seed,
                     std::uint64_t epoch, std::uint64_t index);

/// Epoch visiting order: a seeded permutation of [0, n).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

template <typename Scalar>
struct Batch {
  Tensor<Scalar> images;  // [B,C,H,W]
  std::vector<int> labels;
};

/// Stacks dataset[indices], augmenting when options.enabled.
template <typename Scalar>
Batch<Scalar> make_batch(const Dataset& data, std::span<const std::size_t> indices,
                         const AugmentOptions& options, std::uint64_t seed, std::uint64_t epoch);

}  // namespace sscale
