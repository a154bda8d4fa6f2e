#include <cstring>
#include <sstream>

#include "doctest.h"
#include "sscale/checkpoint.hpp"
#include "sscale/errors.hpp"

using namespace sscale;

namespace {

std::string bytes_of(const Checkpoint& c) {
  std::ostringstream out(std::ios::binary);
  write_checkpoint(out, c);
  return out.str();
}

template <typename T>
std::string le(T v) {
  std::string s(sizeof(T), '\0');
  for (std::size_t i = 0; i < sizeof(T); ++i) s[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  return s;
}

}  // namespace

TEST_CASE("checkpoint byte layout") {
  Checkpoint c;
  c.add("w", Tensor<float>({2, 1}, std::vector<float>{1.0f, -2.5f}));
  std::string want = "SSCK" + le<std::uint32_t>(1) + le<std::uint16_t>(1) + "w";
  want += '\0';  // dtype f32
  want += '\2';  // rank
  want += le<std::uint32_t>(2) + le<std::uint32_t>(1);
  for (float f : {1.0f, -2.5f}) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    want += le(u);
  }
  CHECK(bytes_of(c) == want);
}

TEST_CASE("checkpoint round trip keeps dtype and values") {
  Checkpoint c;
  c.add("a.weight", Tensor<float>({2, 2}, std::vector<float>{0.1f, 0.2f, 0.3f, 0.4f}));
  c.add("b", DType::Float64, Tensor<double>({3}, std::vector<double>{1e-300, 0.1, -7}));
  std::stringstream buf;
  write_checkpoint(buf, c);
  const Checkpoint r = read_checkpoint(buf);
  CHECK(r == c);
  CHECK(r.find("a.weight")->dtype == DType::Float32);
  CHECK(r.get<float>("a.weight")[2] == 0.3f);
  CHECK(r.get<double>("b")[1] == 0.1);
  CHECK(r.find("missing") == nullptr);
  CHECK_THROWS_AS(r.get<float>("missing"), FormatError);
}

TEST_CASE("corrupt checkpoints") {
  SUBCASE("bad magic") {
    std::istringstream in(std::string("SSCX") + le<std::uint32_t>(1));
    try {
      read_checkpoint(in);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("bad checkpoint") != std::string::npos);
    }
  }
  SUBCASE("truncated values") {
    Checkpoint c;
    c.add("w", Tensor<float>({4}, 1.0f));
    std::string b = bytes_of(c);
    b.resize(b.size() - 3);
    std::istringstream in(b);
    CHECK_THROWS_AS(read_checkpoint(in), FormatError);
  }
  SUBCASE("unknown version") {
    std::istringstream in(std::string("SSCK") + le<std::uint32_t>(9));
    CHECK_THROWS_AS(read_checkpoint(in), FormatError);
  }
  SUBCASE("duplicate names") {
    Checkpoint c;
    c.add("w", Tensor<float>({1}, 1.0f));
    CHECK_THROWS_AS(c.add("w", Tensor<float>({1}, 1.0f)), FormatError);
  }
}
