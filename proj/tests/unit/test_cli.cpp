#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "sscale/errors.hpp"
#include "sscale_cli/commands.hpp"
#include "sscale_cli/config.hpp"

using namespace sscale;
using namespace sscale::cli;

namespace {

constexpr const char* kTinyConfig = R"(# small and fast
model.kind = plain_cnn
model.depth = 2
model.classes = 3
data.size = 8
data.train_size = 48
data.test_size = 24
data.batch_size = 16
train.epochs = 2
train.milestones = 1
)";

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("sscale_cli_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::filesystem::path write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path) << text;
  return path;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig resolve_text(const std::string& text) {
  std::istringstream in(text);
  return resolve(KeyValues::parse(in, "test"));
}

std::string config_error(const std::string& text) {
  try {
    resolve_text(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("config defaults") {
  const auto c = resolve_text("");
  CHECK(c.model.kind == ModelKind::ResNet);
  CHECK(c.model.depth == 8);
  CHECK(c.train.epochs == 30);
  CHECK(c.train.lr_init == 0.1);
  CHECK(c.train.milestones == std::vector<std::size_t>{9, 18, 24});
  CHECK(c.train.step_factor == 0.2);
  CHECK(c.train.momentum == 0.9);
  CHECK(c.train.weight_decay == 0.0005);
  CHECK(c.reg.method == Method::None);
  CHECK(c.reg.top_rate == 0.2);
  CHECK(c.reg.retain_rate == 0.9);
  CHECK(c.reg.half_width == 0.4);
  CHECK(c.data.kind == DataKind::Synthetic);
  CHECK(default_values().count("reg.curriculum_start") == 1);
}

TEST_CASE("config errors name the key") {
  CHECK(config_error("model.colour = red").find("model.colour") != std::string::npos);
  const std::string bad = config_error("train.lr = fast");
  CHECK(bad.find("train.lr") != std::string::npos);
  CHECK(bad.find("fast") != std::string::npos);
  CHECK(config_error("reg.method = selectout\nreg.t = 0.05\nreg.p = 0.9").find("reg") !=
        std::string::npos);
  CHECK(config_error("data.kind = cifar_binary\ndata.size = 32").find("data.path") != std::string::npos);
  CHECK(config_error("data.mean = 0.1,0.2").find("data.mean") != std::string::npos);
  CHECK(config_error("reg.curriculum_start = 0").find("curriculum") != std::string::npos);

  std::istringstream malformed("model.depth = 8\nthis line has no equals\n");
  try {
    KeyValues::parse(malformed, "x.conf");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
}

TEST_CASE("overrides and seed take precedence over the file") {
  const auto dir = scratch("precedence");
  CommonOptions o;
  o.config = write_text(dir / "a.conf", "train.epochs = 5\ntrain.milestones = 2\ntrain.seed = 3\nreg.q = 0.2\n");
  o.overrides = {"train.epochs=7"};
  auto c = load_config(o);
  CHECK(c.train.epochs == 7);
  CHECK(c.train.seed == 3);
  CHECK(c.reg.half_width == 0.2);
  o.seed = 11;
  c = load_config(o);
  CHECK(c.train.seed == 11);
  o.overrides = {"novalue"};
  CHECK_THROWS_AS(load_config(o), ConfigError);
}

TEST_CASE("command exit codes") {
  const auto dir = scratch("exit");
  std::ostringstream out, err;
  SUBCASE("missing config file") {
    CommonOptions o;
    o.config = dir / "nope.conf";
    CHECK(cmd_train(o, out, err) == kExitConfig);
    CHECK(err.str().find("nope.conf") != std::string::npos);
  }
  SUBCASE("bad checkpoint") {
    CommonOptions o;
    o.config = write_text(dir / "tiny.conf", kTinyConfig);
    const auto bad = write_text(dir / "bad.ssck", "NOPE0000");
    CHECK(cmd_eval(o, bad, out, err) == kExitConfig);
    CHECK(err.str().find("bad checkpoint") != std::string::npos);
  }
  SUBCASE("missing checkpoint") {
    CommonOptions o;
    CHECK(cmd_eval(o, dir / "absent.ssck", out, err) == kExitConfig);
  }
  SUBCASE("selectout with too small a pool") {
    CommonOptions o;
    o.config = write_text(dir / "tiny.conf", kTinyConfig);
    o.overrides = {"reg.method=selectout", "reg.t=0.05", "reg.p=0.9"};
    o.out = dir / "run";
    CHECK(cmd_train(o, out, err) == kExitConfig);
    CHECK(err.str().find("reg") != std::string::npos);
  }
}

TEST_CASE("train, eval and ablate agree") {
  const auto dir = scratch("flow");
  std::ostringstream out, err;
  CommonOptions o;
  o.config = write_text(dir / "tiny.conf", kTinyConfig);
  o.out = dir / "run";
  REQUIRE(cmd_train(o, out, err) == kExitOk);
  const auto ckpt = o.out / "checkpoint.ssck";
  CHECK(std::filesystem::exists(o.out / "metrics.csv"));
  CHECK(std::filesystem::exists(o.out / "config.txt"));
  CHECK(stored_normalization(load_checkpoint(ckpt)).has_value());

  std::ostringstream eval_out;
  REQUIRE(cmd_eval(o, ckpt, eval_out, err) == kExitOk);
  double eval_error = -1;
  std::istringstream(eval_out.str().substr(6)) >> eval_error;

  AblateOptions a;
  a.checkpoint = ckpt;
  a.methods = {"spatial_dropout", "selectout"};
  a.rates = {1.0};
  REQUIRE(cmd_ablate(o, a, out, err) == kExitOk);
  std::istringstream csv(read_text(o.out / "ablation.csv"));
  std::string line;
  std::getline(csv, line);
  int rows = 0;
  while (std::getline(csv, line)) {
    const auto comma = line.find(',');
    CHECK(line.substr(0, comma) == "1");
    CHECK(std::stod(line.substr(comma + 1)) == doctest::Approx(eval_error).epsilon(1e-9));
    ++rows;
  }
  CHECK(rows == 2);

  a.methods = {"dropout"};
  CHECK(cmd_ablate(o, a, out, err) == kExitConfig);

  CamOptions c;
  c.checkpoint = ckpt;
  c.index = 3;
  REQUIRE(cmd_cam(o, c, out, err) == kExitOk);
  const std::string pgm = read_text(o.out / "cam.pgm");
  CHECK(pgm.rfind("P5\n", 0) == 0);
  c.index = 1000;
  CHECK(cmd_cam(o, c, out, err) == kExitConfig);
}
