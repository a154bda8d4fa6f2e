#pragma once

// SSCK checkpoint files.
//
//   "SSCK"                 4-byte magic
//   version                u32 little-endian (currently 1)
//   repeated until EOF:
//     name length          u16 LE
//     name                 UTF-8 bytes
//     dtype                u8  (0 = float32, 1 = float64)
//     rank                 u8
//     extents              rank x u32 LE
//     values               product(extents) x dtype, little-endian

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sscale/tensor.hpp"

namespace sscale {

inline constexpr char kCheckpointMagic[4] = {'S', 'S', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { Float32 = 0, Float64 = 1 };

struct CheckpointEntry {
  std::string name;
  DType dtype = DType::Float32;
  Tensor<double> values;  // widened on load; narrowed on save for Float32
};

class Checkpoint {
 public:
  std::uint32_t version = kCheckpointVersion;

  void add(std::string name, DType dtype, Tensor<double> values);

  template <typename Scalar>
  void add(std::string name, const Tensor<Scalar>& values) {
    add(std::move(name), sizeof(Scalar) == 4 ? DType::Float32 : DType::Float64,
        values.template cast<double>());
  }

  const std::vector<CheckpointEntry>& entries() const noexcept { return entries_; }
  const CheckpointEntry* find(const std::string& name) const;

  template <typename Scalar>
  Tensor<Scalar> get(const std::string& name) const {
    const CheckpointEntry* e = find(name);
    if (!e) throw FormatError("checkpoint has no tensor named '" + name + "'");
    return e->values.template cast<Scalar>();
  }

  bool operator==(const Checkpoint&) const;

 private:
  std::vector<CheckpointEntry> entries_;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Throws FormatError ("bad checkpoint: ...") on wrong magic, version, or truncation.
Checkpoint read_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sscale
