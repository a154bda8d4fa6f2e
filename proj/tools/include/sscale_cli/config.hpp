#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sscale/data.hpp"
#include "sscale/model.hpp"
#include "sscale/regularizers.hpp"
#include "sscale/trainer.hpp"

namespace sscale::cli {

enum class DataKind { Synthetic, CifarBinary };
enum class Precision { Float32, Float64 };

struct DataConfig {
  DataKind kind = DataKind::Synthetic;
  std::filesystem::path path;
  std::filesystem::path test_path;
  std::optional<std::size_t> limit;
  std::optional<std::size_t> test_limit;
  std::size_t train_size = 600;  // synthetic only
  std::size_t test_size = 300;   // synthetic only
  std::uint64_t seed = 1;        // synthetic generator
  std::optional<Normalization> normalization;
};

/// Fully parsed and validated experiment definition.
struct ExperimentConfig {
  ModelSpec model;
  Precision precision = Precision::Float32;
  DataConfig data;
  TrainConfig train;
  RegularizerConfig reg;
};

/// Raw key/value store in file order, with later assignments winning.
class KeyValues {
 public:
  /// Parses "key = value" lines. '#' starts a comment. Throws ConfigError
  /// with the line number on malformed lines.
  static KeyValues parse(std::istream& in, const std::string& source);
  static KeyValues load(const std::filesystem::path& path);

  /// Applies one "key=value" override.
  void set(std::string_view assignment);
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Every recognised key with its default value, as it would be written in a file.
const std::map<std::string, std::string>& default_values();

/// Typed config. Unknown keys and invalid values throw ConfigError naming the key.
ExperimentConfig resolve(const KeyValues& kv);

/// Writes the effective configuration, one key per line, sorted.
void write_config(std::ostream& out, const KeyValues& kv);

}  // namespace sscale::cli
