#include <benchmark/benchmark.h>

#include <random>

#include "lnet/losses.hpp"
#include "lnet/metrics.hpp"
#include "lnet/ops.hpp"

using namespace lnet;

namespace {

std::mt19937_64 rng(3);

Tensor probs(Shape s) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t(s);
  for (double& v : t.values()) v = u(rng);
  return t;
}

Tensor binary(Shape s) {
  std::bernoulli_distribution b(0.05);
  Tensor t(s);
  for (double& v : t.values()) v = b(rng) ? 1.0 : 0.0;
  return t;
}

void BM_DualLossBackward(benchmark::State& state) {
  const Shape s{8, 128, 128, kNumLesions};
  const Tensor p = probs(s), t = binary(s);
  for (auto _ : state) {
    const Var v = variable(p);
    backward(dual_loss(v, t));
    benchmark::DoNotOptimize(v->grad.data());
  }
}
BENCHMARK(BM_DualLossBackward)->Unit(benchmark::kMillisecond);

void BM_WeightedCrossEntropyBackward(benchmark::State& state) {
  const Shape s{8, 128, 128, kNumLesions};
  const Tensor p = probs(s), t = binary(s);
  const std::vector<double> w(kNumLesions, 20.0);
  for (auto _ : state) {
    const Var v = variable(p);
    backward(weighted_cross_entropy(v, t, w));
    benchmark::DoNotOptimize(v->grad.data());
  }
}
BENCHMARK(BM_WeightedCrossEntropyBackward)->Unit(benchmark::kMillisecond);

void BM_Kappa(benchmark::State& state) {
  std::vector<int> a(state.range(0)), b(state.range(0));
  for (auto& g : a) g = static_cast<int>(rng() % 5);
  for (auto& g : b) g = static_cast<int>(rng() % 5);
  for (auto _ : state) benchmark::DoNotOptimize(quadratic_weighted_kappa(a, b));
}
BENCHMARK(BM_Kappa)->Arg(1000)->Arg(100000);

void BM_PixelF1(benchmark::State& state) {
  const Shape s{8, 128, 128, kNumLesions};
  const Tensor p = binary(s), t = binary(s);
  for (auto _ : state) {
    std::vector<ConfusionCounts> counts;
    accumulate_counts(p, t, counts);
    benchmark::DoNotOptimize(finalize_f1(counts));
  }
}
BENCHMARK(BM_PixelF1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
