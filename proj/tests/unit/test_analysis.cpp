#include <cmath>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "sscale/analysis.hpp"
#include "sscale/errors.hpp"
#include "sscale/trainer.hpp"

using namespace sscale;

namespace {

ModelSpec small_resnet() {
  ModelSpec s;
  s.kind = ModelKind::ResNet;
  s.depth = 8;
  s.num_classes = 3;
  s.height = s.width_px = 8;
  return s;
}

std::vector<double> to_vector(const Tensor<double>& t) { return {t.data().begin(), t.data().end()}; }

Tensor<double> random_tensor(Shape shape, std::uint64_t seed) {
  Tensor<double> t(shape);
  RngStream rng(seed);
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

}  // namespace

TEST_CASE("ablation curves") {
  auto m = Model<float>::build(small_resnet(), 3);
  const auto data = synthesize_dataset(3, 24, 1, 8);
  const double clean = evaluate(m, data, 8).error;

  AblationOptions o;
  o.rates = {1.0, 0.9, 0.7};
  o.batch_size = 8;
  SUBCASE("rate one matches the clean error for both methods") {
    for (Method method : {Method::SpatialDropout, Method::Selectout}) {
      o.method = method;
      const auto c = ablate(m, data, o);
      REQUIRE(c.points.size() == 3);
      CHECK(c.points[0].rate == 1.0);
      CHECK(c.points[0].error == clean);
      CHECK(c.points[1].rate == 0.9);
      CHECK(c.points[2].rate == 0.7);
    }
  }
  SUBCASE("per-seed determinism") {
    o.seed = 5;
    const auto a = ablate(m, data, o), b = ablate(m, data, o);
    for (std::size_t i = 0; i < a.points.size(); ++i) CHECK(a.points[i].error == b.points[i].error);
  }
  SUBCASE("model regularizer state is restored") {
    ablate(m, data, o);
    CHECK_FALSE(m.has_regularizer());
    CHECK(evaluate(m, data, 8).error == clean);
  }
  SUBCASE("rejected options") {
    o.rates = {0.9, 0.9};
    CHECK_THROWS_AS(ablate(m, data, o), ConfigError);
    o.rates = {1.2};
    CHECK_THROWS_AS(ablate(m, data, o), ConfigError);
    o.rates = {0.9, 0.5};
    o.method = Method::Selectout;
    o.top_rate = 0.2;
    CHECK_THROWS_AS(ablate(m, data, o), ConfigError);
    o.top_rate.reset();
    o.method = Method::Dropout;
    CHECK_THROWS_AS(ablate(m, data, o), ConfigError);
  }
}

TEST_CASE("averaging and csv output") {
  AblationCurve a{Method::Selectout, {{1.0, 0.1}, {0.9, 0.3}}, 1, true};
  AblationCurve b{Method::Selectout, {{1.0, 0.2}, {0.9, 0.5}}, 2, true};
  const std::vector<AblationCurve> both{a, b};
  const auto mean = average_curves(both);
  CHECK(mean.seed == 0);
  CHECK(mean.points[0].error == doctest::Approx(0.15));
  CHECK(mean.points[1].error == doctest::Approx(0.4));

  AblationCurve other = b;
  other.points[1].rate = 0.8;
  CHECK_THROWS_AS(average_curves(std::vector<AblationCurve>{a, other}), ConfigError);

  std::ostringstream csv;
  write_ablation_csv(csv, both);
  const std::string s = csv.str();
  CHECK(s.rfind("rate,error,method,seed\n", 0) == 0);
  CHECK(s.find("selectout,2") != std::string::npos);
}

TEST_CASE("heat map from features") {
  SUBCASE("uniform weights give the channel sum") {
    Tensor<double> f({2, 1, 3}, std::vector<double>{1, 2, 3, 10, 0, 5});
    Tensor<double> w({1, 2}, 1.0);
    const auto h = cam_from_features(f, w, 0);
    CHECK(to_vector(h.raw) == std::vector<double>{11, 2, 8});
    CHECK(h.values[0] == 1.0);
    CHECK(h.values[1] == 0.0);
    CHECK(h.values[2] == doctest::Approx(6.0 / 9.0));
  }
  SUBCASE("constant map normalizes to zeros") {
    const auto h = cam_from_features(Tensor<double>({3, 2, 2}, 0.5), Tensor<double>({2, 3}, 1.0), 1);
    for (double v : h.values.data()) CHECK(v == 0.0);
  }
  SUBCASE("random features against the direct sum") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const auto f = random_tensor({6, 4, 5}, seed);
      const auto w = random_tensor({4, 6}, seed + 100);
      const std::size_t cls = seed % 4;
      const auto h = cam_from_features(f, w, cls);
      const auto ref = oracle::cam(to_vector(f), 6, 4, 5, to_vector(w), cls);
      CHECK(h.class_index == cls);
      for (std::size_t i = 0; i < 20; ++i) {
        CHECK(h.raw[i] == doctest::Approx(ref.raw[i]).epsilon(1e-6));
        CHECK(h.values[i] == doctest::Approx(ref.normalized[i]).epsilon(1e-6));
      }
    }
  }
  SUBCASE("linear in the classifier weights") {
    const auto f = random_tensor({3, 2, 2}, 7);
    const auto w1 = random_tensor({1, 3}, 8), w2 = random_tensor({1, 3}, 9);
    Tensor<double> sum = w1;
    for (std::size_t i = 0; i < 3; ++i) sum[i] = 2 * w1[i] - 3 * w2[i];
    const auto a = cam_from_features(f, w1, 0).raw, b = cam_from_features(f, w2, 0).raw;
    const auto c = cam_from_features(f, sum, 0).raw;
    for (std::size_t i = 0; i < 4; ++i) CHECK(c[i] == doctest::Approx(2 * a[i] - 3 * b[i]));
  }
  SUBCASE("class out of range") {
    CHECK_THROWS_AS(cam_from_features(Tensor<double>({1, 1, 1}), Tensor<double>({2, 1}), 2),
                    ConfigError);
  }
}

TEST_CASE("model heat map matches its features and classifier") {
  auto m = Model<double>::build(small_resnet(), 4);
  const auto data = synthesize_dataset(3, 2, 1, 8);
  const auto& img = data.images[1].pixels;
  const auto h = cam(m, img, 2);

  Tensor<double> x({1, 3, 8, 8});
  for (std::size_t i = 0; i < img.size(); ++i) x[i] = img[i];
  const auto fwd = m.forward(x, {});
  const auto& f = fwd.features.value();
  const auto ref = oracle::cam(to_vector(f), f.shape()[1], f.shape()[2], f.shape()[3],
                               to_vector(m.classifier_weight()), 2);
  REQUIRE(h.raw.size() == ref.raw.size());
  for (std::size_t i = 0; i < ref.raw.size(); ++i) {
    CHECK(h.raw[i] == doctest::Approx(ref.raw[i]).epsilon(1e-9));
  }
  CHECK(h.layer == m.hooks().back());

  std::ostringstream pgm(std::ios::binary);
  write_pgm(pgm, h);
  const auto want = oracle::pgm_bytes(ref.normalized, f.shape()[2], f.shape()[3]);
  CHECK(pgm.str() == std::string(want.begin(), want.end()));
}
