#include "sscale/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace sscale {
namespace {

template <typename UInt>
void put_le(std::ostream& out, UInt v) {
  char bytes[sizeof(UInt)];
  for (std::size_t i = 0; i < sizeof(UInt); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes, sizeof(UInt));
}

template <typename UInt>
UInt get_le(std::istream& in, const char* what) {
  unsigned char bytes[sizeof(UInt)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(UInt))) {
    throw FormatError(std::string("bad checkpoint: truncated while reading ") + what);
  }
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void Checkpoint::add(std::string name, DType dtype, Tensor<double> values) {
  if (name.size() > 0xFFFF) throw FormatError("checkpoint tensor name too long: " + name);
  if (values.rank() > 0xFF) throw FormatError("checkpoint tensor rank too large: " + name);
  if (find(name)) throw FormatError("duplicate checkpoint tensor name: " + name);
  entries_.push_back({std::move(name), dtype, std::move(values)});
}

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

bool Checkpoint::operator==(const Checkpoint& other) const {
  if (version != other.version || entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.name != b.name || a.dtype != b.dtype || !(a.values == b.values)) return false;
  }
  return true;
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kCheckpointMagic, 4);
  put_le<std::uint32_t>(out, ckpt.version);
  for (const auto& e : ckpt.entries()) {
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(e.dtype));
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(e.values.rank()));
    for (auto extent : e.values.shape()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(extent));
    for (double v : e.values.data()) {
      if (e.dtype == DType::Float32) {
        put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      } else {
        put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
      }
    }
  }
  if (!out) throw FormatError("failed writing checkpoint");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open checkpoint for writing: " + path.string());
  write_checkpoint(out, ckpt);
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw FormatError("bad checkpoint: missing SSCK magic");
  }
  Checkpoint ckpt;
  ckpt.version = get_le<std::uint32_t>(in, "version");
  if (ckpt.version != kCheckpointVersion) {
    throw FormatError("bad checkpoint: unsupported version " + std::to_string(ckpt.version));
  }
  while (in.peek() != std::char_traits<char>::eof()) {
    const auto len = get_le<std::uint16_t>(in, "name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw FormatError("bad checkpoint: truncated name");
    const auto code = get_le<std::uint8_t>(in, "dtype");
    if (code > 1) {
      throw FormatError("bad checkpoint: unknown dtype " + std::to_string(code) + " for " + name);
    }
    const auto dtype = static_cast<DType>(code);
    const auto rank = get_le<std::uint8_t>(in, "rank");
    Shape shape(rank);
    for (auto& extent : shape) {
      extent = get_le<std::uint32_t>(in, "extent");
      if (extent == 0) throw FormatError("bad checkpoint: zero extent in " + name);
    }
    std::vector<double> values(shape_size(shape));
    for (double& v : values) {
      v = dtype == DType::Float32
              ? static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(in, "values")))
              : std::bit_cast<double>(get_le<std::uint64_t>(in, "values"));
    }
    ckpt.add(std::move(name), dtype, Tensor<double>(std::move(shape), std::move(values)));
  }
  return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint: " + path.string());
  return read_checkpoint(in);
}

}  // namespace sscale
