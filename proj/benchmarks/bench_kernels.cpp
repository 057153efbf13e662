#include <benchmark/benchmark.h>

#include "segforge/augment.hpp"
#include "segforge/losses.hpp"
#include "segforge/model.hpp"
#include "segforge/ops.hpp"
#include "segforge/parallel.hpp"

using namespace segforge;

namespace {

Tensor filled(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(s);
  for (Real& v : t.data()) v = Real(rng.uniform(-1, 1));
  return t;
}

// args: channels, spatial size
void BM_Conv3x3Forward(benchmark::State& state) {
  const auto c = std::size_t(state.range(0)), s = std::size_t(state.range(1));
  Tensor x = filled(Shape{1, c, s, s}, 1), w = filled(Shape{c, c, 3, 3}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, Tensor(), {1, 1, 1}));
  state.SetItemsProcessed(state.iterations() * std::int64_t(c * c * 9 * s * s));
}
BENCHMARK(BM_Conv3x3Forward)->Args({16, 64})->Args({32, 32})->Args({64, 32})->Unit(benchmark::kMillisecond);

void BM_Conv3x3Backward(benchmark::State& state) {
  const auto c = std::size_t(state.range(0)), s = std::size_t(state.range(1));
  Tensor x = filled(Shape{1, c, s, s}, 3), w = filled(Shape{c, c, 3, 3}, 4);
  x.set_requires_grad();
  w.set_requires_grad();
  for (auto _ : state) {
    backward(sum(conv2d(x, w, Tensor(), {1, 1, 1})));
    x.clear_grad();
    w.clear_grad();
  }
}
BENCHMARK(BM_Conv3x3Backward)->Args({16, 64})->Args({32, 32})->Unit(benchmark::kMillisecond);

void BM_ToyModelTrainStep(benchmark::State& state) {
  const auto s = std::size_t(state.range(0));
  Model m = Model::build(toy_model_config(s), 5);
  Tensor x = filled(Shape{4, 3, s, s}, 6);
  Tensor y(Shape{4, 1, s, s});
  for (std::size_t i = 0; i < y.numel(); i += 3) y.data()[i] = 1;
  for (auto _ : state) {
    m.store().zero_grad();
    backward(dice_loss(m.forward(x, Mode::kTrain), y));
  }
}
BENCHMARK(BM_ToyModelTrainStep)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Augment(benchmark::State& state) {
  Sample s = synth_dataset(1, 256, 7)[0];
  AugmentationSpec spec = AugmentationSpec::all_enabled();
  Rng rng(8);
  for (auto _ : state) benchmark::DoNotOptimize(augment(s, spec, rng));
}
BENCHMARK(BM_Augment)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
