#include <benchmark/benchmark.h>

#include <random>

#include "lnet/losses.hpp"
#include "lnet/multitask.hpp"

using namespace lnet;

namespace {

Tensor images(int n, int side) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t({n, side, side, 3});
  for (double& v : t.values()) v = u(rng);
  return t;
}

void BM_LesionNetPredict(benchmark::State& state) {
  const LesionNet net = build_lesion_net(LesionNetConfig{static_cast<int>(state.range(0))}, 1);
  const Tensor x = images(1, 128);
  for (auto _ : state) benchmark::DoNotOptimize(net.predict(x));
}
BENCHMARK(BM_LesionNetPredict)->Arg(32)->Arg(16)->Arg(8)->Arg(2)->Unit(benchmark::kMillisecond);

// One optimiser-free training step: forward, dual loss and backward on a batch of 8.
void BM_LesionNetTrainStep(benchmark::State& state) {
  const LesionNet net = build_lesion_net(LesionNetConfig{16}, 1);
  const Tensor x = images(8, 128);
  const Tensor masks({8, 128, 128, kNumLesions});
  for (auto _ : state) {
    const BoundParams p(net.params(), true);
    backward(dual_loss(net.forward(p, constant(x)), masks));
    benchmark::DoNotOptimize(p.gradients());
  }
}
BENCHMARK(BM_LesionNetTrainStep)->Unit(benchmark::kMillisecond);

void BM_FuseAndGrade(benchmark::State& state) {
  MultiTaskConfig c;
  c.mode = static_cast<GradingMode>(state.range(0));
  const MultiTaskNet net = build_multitask_net(c, build_lesion_net(LesionNetConfig{16}, 1), 2);
  const FundusImage image(images(1, 128));
  for (auto _ : state) benchmark::DoNotOptimize(fuse_and_grade(net, image));
}
BENCHMARK(BM_FuseAndGrade)
    ->Arg(static_cast<int>(GradingMode::plain))
    ->Arg(static_cast<int>(GradingMode::cw_maxpool))
    ->Arg(static_cast<int>(GradingMode::conv))
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
