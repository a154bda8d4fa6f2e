#pragma once

#include <stdexcept>
#include <string>

namespace sscale {

/// Invalid hyperparameter, unknown key, or otherwise unusable configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Tensor shapes that do not agree with what an op expects.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed on-disk data (dataset files, checkpoints).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The gradient tape was used out of order or lost a saved activation.
class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A NaN or Inf showed up where finite values are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The requested analysis needs a model feature that is not present.
class UnsupportedArchitecture : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace sscale
