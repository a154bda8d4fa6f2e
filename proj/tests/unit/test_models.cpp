#include <cmath>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "sscale/analysis.hpp"
#include "sscale/errors.hpp"
#include "sscale/model.hpp"

using namespace sscale;

namespace {

Tensor<float> random_input(std::size_t n, std::size_t c, std::size_t h, std::size_t w,
                           std::uint64_t seed) {
  Tensor<float> x({n, c, h, w});
  RngStream rng(seed);
  for (auto& v : x.data()) v = static_cast<float>(rng.normal());
  return x;
}

ModelSpec resnet(std::size_t depth = 8, std::size_t k = 1, std::size_t classes = 10,
                 std::size_t size = 16) {
  ModelSpec s;
  s.kind = ModelKind::ResNet;
  s.depth = depth;
  s.width = k;
  s.num_classes = classes;
  s.height = s.width_px = size;
  return s;
}

Tensor<float> logits(Model<float>& m, const Tensor<float>& x, bool training) {
  Model<float>::ForwardOptions o;
  o.training = training;
  return m.forward(x, o).logits.value();
}

}  // namespace

TEST_CASE("plain cnn logits shape") {
  ModelSpec s;
  s.kind = ModelKind::PlainCnn;
  s.depth = 3;
  s.num_classes = 10;
  s.height = s.width_px = 8;
  auto m = Model<float>::build(s, 1);
  CHECK(logits(m, random_input(5, 3, 8, 8, 1), false).shape() == Shape{5, 10});
  CHECK(m.hooks() == std::vector<std::string>{"conv0", "conv1", "conv2"});
}

TEST_CASE("resnet depth template") {
  CHECK_THROWS_AS(resnet(9).validate(), ConfigError);
  CHECK_THROWS_AS(resnet(2).validate(), ConfigError);
  CHECK_NOTHROW(resnet(14).validate());
  const auto hooks = hook_points(resnet(8));
  CHECK(hooks == std::vector<std::string>{"stem", "stage1.block0.conv1", "stage1.block0.conv2",
                                          "stage2.block0.conv1", "stage2.block0.conv2",
                                          "stage3.block0.conv1", "stage3.block0.conv2"});
  auto m = Model<float>::build(resnet(8), 1);
  CHECK(logits(m, random_input(2, 3, 16, 16, 2), false).shape() == Shape{2, 10});
}

TEST_CASE("parameter counts follow the closed form") {
  for (std::size_t depth : {8u, 20u}) {
    for (std::size_t k : {1u, 2u, 4u}) {
      auto m = Model<float>::build(resnet(depth, k, 10, 8), 1);
      const auto ref = oracle::resnet_parameters(depth, k, 10);
      CHECK(m.conv_parameter_count() == ref.conv);
      CHECK(m.parameter_count() == ref.total);
    }
  }
  const auto k1 = oracle::resnet_parameters(20, 1, 10);
  const auto k4 = oracle::resnet_parameters(20, 4, 10);
  const double ratio = static_cast<double>(k4.conv) / static_cast<double>(k1.conv);
  CHECK(ratio > 15.5);
  CHECK(ratio <= 16.0);
}

TEST_CASE("untrained model gives near-uniform loss") {
  auto m = Model<float>::build(resnet(8, 1, 10), 3);
  const auto x = random_input(64, 3, 16, 16, 4);
  const auto l = logits(m, x, true);
  std::vector<int> labels(64);
  for (std::size_t i = 0; i < 64; ++i) labels[i] = static_cast<int>(i % 10);
  const double loss = kernels::softmax_cross_entropy_forward(l, labels).loss;
  CHECK(std::isfinite(loss));
  CHECK(std::abs(loss - std::log(10.0)) < 0.5);
}

TEST_CASE("initialization is deterministic per seed") {
  auto a = Model<float>::build(resnet(), 7);
  auto b = Model<float>::build(resnet(), 7);
  auto c = Model<float>::build(resnet(), 8);
  CHECK(a.to_checkpoint() == b.to_checkpoint());
  CHECK_FALSE(a.to_checkpoint() == c.to_checkpoint());
  for (const auto& p : a.parameters()) {
    if (p.name.ends_with(".bn.gamma")) {
      for (float v : p.var.value().data()) CHECK(v == 1.0f);
    }
    if (p.name.ends_with(".bn.beta") || p.name == "fc.bias") {
      for (float v : p.var.value().data()) CHECK(v == 0.0f);
    }
    CHECK(p.decay == (p.name.find(".bn.") == std::string::npos));
  }
}

TEST_CASE("hook transparency") {
  const auto x = random_input(4, 3, 16, 16, 5);
  auto bare = Model<float>::build(resnet(), 1);
  const auto ref_train = logits(bare, x, true);
  auto bare2 = Model<float>::build(resnet(), 1);
  const auto ref_eval = logits(bare2, x, false);

  SUBCASE("empty placement") {
    auto m = Model<float>::build(resnet(), 1);
    RegularizerConfig cfg;
    cfg.method = Method::Selectout;
    cfg.top_rate = 0.5;
    cfg.placement = {};
    attach_regularizer(m, cfg, 3);
    CHECK(m.active_hooks().empty());
    CHECK(logits(m, x, true) == ref_train);
  }
  SUBCASE("method none") {
    auto m = Model<float>::build(resnet(), 1);
    RegularizerConfig cfg;
    attach_regularizer(m, cfg, 3);
    CHECK(logits(m, x, true) == ref_train);
  }
  SUBCASE("select scale in eval mode") {
    auto m = Model<float>::build(resnet(), 1);
    RegularizerConfig cfg;
    cfg.method = Method::SelectScale;
    cfg.top_rate = 0.2;
    cfg.half_width = 0.4;
    attach_regularizer(m, cfg, 3);
    CHECK(m.active_hooks().size() == m.hooks().size());
    CHECK(logits(m, x, false) == ref_eval);
    CHECK_FALSE(logits(m, x, true) == ref_train);
  }
}

TEST_CASE("unknown hook names are rejected with the list of hooks") {
  auto m = Model<float>::build(resnet(), 1);
  RegularizerConfig cfg;
  cfg.method = Method::SpatialDropout;
  cfg.placement = {"stage9.block0.conv1"};
  try {
    m.attach_regularizer(cfg, 1);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("stage9.block0.conv1") != std::string::npos);
    CHECK(msg.find("stage1.block0.conv2") != std::string::npos);
  }
  cfg.placement = {"stem", "stage3.block0.conv2"};
  m.attach_regularizer(cfg, 1);
  CHECK(m.active_hooks() == std::vector<std::string>{"stem", "stage3.block0.conv2"});
}

TEST_CASE("pre-relu hooks") {
  ModelSpec s = resnet();
  s.hook_position = HookPosition::PreRelu;
  auto m = Model<float>::build(s, 1);
  RegularizerConfig cfg;
  cfg.method = Method::Selectout;
  cfg.top_rate = 0.5;
  m.attach_regularizer(cfg, 1);
  CHECK(m.regularizer_settings()->score_mode.kind == ScoreKind::MaxAbs);
  CHECK(logits(m, random_input(2, 3, 16, 16, 1), true).shape() == Shape{2, 10});
  CHECK(parse_hook_position("pre_relu") == HookPosition::PreRelu);
  CHECK_THROWS_AS(parse_hook_position("sideways"), ConfigError);
}

TEST_CASE("checkpoint round trip through a model") {
  auto a = Model<float>::build(resnet(), 11);
  const auto x = random_input(3, 3, 16, 16, 2);
  logits(a, x, true);  // moves running statistics away from their initial values
  std::stringstream buf;
  write_checkpoint(buf, a.to_checkpoint());
  auto b = Model<float>::build(resnet(), 99);
  b.load_checkpoint(read_checkpoint(buf));
  CHECK(logits(a, x, false) == logits(b, x, false));

  auto wide = Model<float>::build(resnet(8, 2), 1);
  CHECK_THROWS_AS(wide.load_checkpoint(a.to_checkpoint()), FormatError);
}

TEST_CASE("flatten head has no CAM") {
  ModelSpec s;
  s.kind = ModelKind::PlainCnn;
  s.depth = 2;
  s.num_classes = 3;
  s.height = s.width_px = 8;
  s.head = HeadKind::Flatten;
  auto m = Model<float>::build(s, 1);
  CHECK(logits(m, random_input(2, 3, 8, 8, 1), false).shape() == Shape{2, 3});
  CHECK_THROWS_AS(cam(m, Tensor<float>({3, 8, 8}), 0), UnsupportedArchitecture);
}
