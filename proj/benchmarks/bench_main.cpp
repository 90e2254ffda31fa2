#include <random>

#include <benchmark/benchmark.h>

#include "sggan/data_synth.hpp"
#include "sggan/gradfilters.hpp"
#include "sggan/losses.hpp"
#include "sggan/networks.hpp"
#include "sggan/ops.hpp"
#include "sggan/trainer.hpp"

using namespace sggan;

namespace {

Tensor random_tensor(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  Tensor t(s);
  for (auto& v : t.vec()) v = u(rng);
  return t;
}

// args: channels, spatial size, stride
void BM_Conv2dForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  const int stride = static_cast<int>(state.range(2));
  const Tensor x = random_tensor({1, c, hw, 2 * hw}, 1), k = random_tensor({c, c, 3, 3}, 2);
  for (auto _ : state) {
    Graph g;
    benchmark::DoNotOptimize(ops::conv2d(g.constant(x), g.constant(k), stride, ops::Padding::zero, 1).value());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(c * c * 9 * hw * 2 * hw / (stride * stride)));
}
BENCHMARK(BM_Conv2dForward)->Args({16, 64, 1})->Args({32, 32, 2})->Args({64, 16, 2})->Unit(benchmark::kMicrosecond);

void BM_Conv2dBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  const Tensor x = random_tensor({1, c, hw, 2 * hw}, 1), k = random_tensor({c, c, 3, 3}, 2);
  for (auto _ : state) {
    Graph g;
    auto xv = g.variable(x);
    auto kv = g.variable(k);
    g.backward(ops::sum(ops::conv2d(xv, kv, 1, ops::Padding::zero, 1)));
    benchmark::DoNotOptimize(g.grad(kv));
  }
}
BENCHMARK(BM_Conv2dBackward)->Args({16, 64})->Args({32, 32})->Unit(benchmark::kMicrosecond);

void BM_SoftGradLoss(benchmark::State& state) {
  const ScenePair v = generate_scene(3, virtual_spec(4), 64, 128);
  const Tensor y = random_tensor(v.image.shape(), 4);
  for (auto _ : state) {
    Graph g;
    auto a = g.constant(v.image);
    auto b = g.variable(y);
    g.backward(soft_grad_loss(a, b, v.labels, {0.9f, 0.1f}));
    benchmark::DoNotOptimize(g.grad(b));
  }
}
BENCHMARK(BM_SoftGradLoss)->Unit(benchmark::kMicrosecond);

void BM_GeneratorForward(benchmark::State& state) {
  const GeneratorNet g = build_generator({4, static_cast<int>(state.range(0)), 1});
  const Tensor x = random_tensor({1, 3, 64, 128}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(generator_forward(g, x));
}
BENCHMARK(BM_GeneratorForward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

// args: generator width, discriminator width, discriminator blocks
void BM_TrainStep(benchmark::State& state) {
  TrainConfig cfg;
  cfg.gen_base_width = static_cast<int>(state.range(0));
  cfg.disc_base_width = static_cast<int>(state.range(1));
  cfg.disc_blocks = static_cast<int>(state.range(2));
  TrainState st = init_state(cfg);
  const ScenePair v = generate_scene(1, virtual_spec(4), 64, 128);
  const ScenePair r = generate_scene(2, real_spec(4), 64, 128);
  for (auto _ : state) benchmark::DoNotOptimize(train_step(st, v, r, cfg));
}
BENCHMARK(BM_TrainStep)->Args({16, 16, 3})->Args({32, 64, 4})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
