#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sscale/checkpoint.hpp"
#include "sscale/data.hpp"
#include "sscale_cli/config.hpp"

namespace sscale::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

struct CommonOptions {
  std::optional<std::filesystem::path> config;
  std::vector<std::string> overrides;  // "key=value", applied after the file
  std::optional<std::uint64_t> seed;   // replaces train.seed
  std::filesystem::path out = ".";
};

struct AblateOptions {
  std::filesystem::path checkpoint;
  std::vector<std::string> methods = {"spatial_dropout", "selectout"};
  std::vector<double> rates = {1.0, 0.98, 0.96, 0.94, 0.92, 0.9};
  std::vector<std::uint64_t> seeds;  // empty: train.seed
  bool rescale = true;
  std::optional<double> top_rate;  // unset: 1 - rate
};

struct CamOptions {
  std::filesystem::path checkpoint;
  std::size_t index = 0;
  std::optional<std::size_t> class_index;  // default: the image's label
};

/// Config file, then overrides, then --seed.
ExperimentConfig load_config(const CommonOptions& options, KeyValues* raw = nullptr);

/// Training and evaluation sets. The evaluation set is empty for CIFAR runs
/// without data.test_path. `norm` overrides the config and computed constants.
std::pair<Dataset, Dataset> load_datasets(const ExperimentConfig& config,
                                          const std::optional<Normalization>& norm = {});

/// Normalization constants stored next to the weights, if present.
std::optional<Normalization> stored_normalization(const Checkpoint& ckpt);
void store_normalization(Checkpoint& ckpt, const Normalization& norm);

int cmd_train(const CommonOptions& options, std::ostream& out, std::ostream& err);
int cmd_eval(const CommonOptions& options, const std::filesystem::path& checkpoint,
             std::ostream& out, std::ostream& err);
int cmd_ablate(const CommonOptions& options, const AblateOptions& ablate, std::ostream& out,
               std::ostream& err);
int cmd_cam(const CommonOptions& options, const CamOptions& cam, std::ostream& out,
            std::ostream& err);
int cmd_selftest(std::uint64_t seed, std::ostream& out, std::ostream& err);

}  // namespace sscale::cli
