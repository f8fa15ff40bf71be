#include <benchmark/benchmark.h>

#include <random>

#include "lnet/ops.hpp"

using namespace lnet;

namespace {

Tensor noise(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(s);
  for (double& v : t.values()) v = u(rng);
  return t;
}

// args: side, channels in/out, stride
void BM_Conv3x3Forward(benchmark::State& state) {
  const int side = state.range(0), ch = state.range(1), stride = state.range(2);
  const Var x = constant(noise({8, side, side, ch}, 1));
  const Var k = constant(noise({3, 3, ch, ch}, 2));
  const Var b = constant(noise({1, 1, 1, ch}, 3));
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, k, b, stride, 1));
}
BENCHMARK(BM_Conv3x3Forward)->Args({64, 16, 2})->Args({32, 32, 1})->Args({8, 128, 1})->Unit(benchmark::kMillisecond);

void BM_Conv3x3ForwardBackward(benchmark::State& state) {
  const int side = state.range(0), ch = state.range(1);
  const Tensor xv = noise({8, side, side, ch}, 1), kv = noise({3, 3, ch, ch}, 2), bv = noise({1, 1, 1, ch}, 3);
  for (auto _ : state) {
    const Var x = variable(xv), k = variable(kv), b = variable(bv);
    backward(ops::global_avg_pool(ops::conv2d(x, k, b, 1, 1)));
    benchmark::DoNotOptimize(k->grad.data());
  }
}
BENCHMARK(BM_Conv3x3ForwardBackward)->Args({32, 32})->Args({8, 128})->Unit(benchmark::kMillisecond);

void BM_UpsampleBilinear(benchmark::State& state) {
  const Var x = constant(noise({8, 8, 8, 8}, 4));
  const int factor = state.range(0);
  for (auto _ : state) benchmark::DoNotOptimize(ops::upsample_bilinear(x, factor));
}
BENCHMARK(BM_UpsampleBilinear)->Arg(2)->Arg(16);

}  // namespace

BENCHMARK_MAIN();
