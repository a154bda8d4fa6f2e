#include <benchmark/benchmark.h>

#include "sscale/kernels.hpp"
#include "sscale/model.hpp"
#include "sscale/regularizers.hpp"
#include "sscale/tape.hpp"

using namespace sscale;

namespace {

Tensor<float> random_tensor(Shape shape, std::uint64_t seed) {
  Tensor<float> t(std::move(shape));
  RngStream rng(seed);
  for (auto& v : t.data()) v = static_cast<float>(rng.normal());
  return t;
}

void BM_Conv2dForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor({32, c, 16, 16}, 1);
  const auto w = random_tensor({c, c, 3, 3}, 2);
  const auto b = random_tensor({c}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::conv2d_forward(x, w, b, {1, 1}));
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_Conv2dForward)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Conv2dBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor({32, c, 16, 16}, 1);
  const auto w = random_tensor({c, c, 3, 3}, 2);
  const auto g = random_tensor({32, c, 16, 16}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::conv2d_backward(g, x, w, {1, 1}, true));
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_Conv2dBackward)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Select(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  ScoreVector scores;
  RngStream gen(4);
  for (std::size_t i = 0; i < c; ++i) scores.scores.push_back(gen.normal());
  std::uint64_t key = 0;
  for (auto _ : state) {
    RngStream rng(key++);
    benchmark::DoNotOptimize(select(scores, 0.2, 0.9, rng));
  }
}
BENCHMARK(BM_Select)->Arg(16)->Arg(64)->Arg(512);

void BM_SelectScaleTransform(benchmark::State& state) {
  const auto y = random_tensor({64, 32, 16, 16}, 5);
  TransformSettings s;
  s.method = Method::SelectScale;
  std::uint64_t batch = 0;
  for (auto _ : state) {
    const auto streams = SampleStreams::for_batch(1, 0, 0, batch++, 64);
    benchmark::DoNotOptimize(apply_transform(y, s, streams, true));
  }
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_SelectScaleTransform)->Unit(benchmark::kMillisecond);

void BM_ResNet8TrainStep(benchmark::State& state) {
  ModelSpec spec;
  spec.num_classes = 3;
  spec.height = spec.width_px = 16;
  auto model = Model<float>::build(spec, 1);
  RegularizerConfig reg;
  reg.method = state.range(0) ? Method::SelectScale : Method::None;
  if (reg.method != Method::None) model.attach_regularizer(reg, 1);
  const auto x = random_tensor({64, 3, 16, 16}, 6);
  std::vector<int> labels(64);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 3);
  std::uint64_t batch = 0;
  for (auto _ : state) {
    GradTape tape;
    Model<float>::ForwardOptions o;
    o.tape = &tape;
    o.training = true;
    o.batch = batch++;
    const auto logits = model.forward(x, o).logits;
    auto loss = ops::softmax_cross_entropy(&tape, logits, labels);
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.value()[0]);
  }
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_ResNet8TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
