#include <benchmark/benchmark.h>

#include "hsrecon/pipeline.hpp"
#include "hsrecon/synthetic.hpp"

namespace {

void BM_GenSyntheticScene(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  std::uint64_t seed = 0;
  for (auto _ : state) {
    auto scenes = hsrecon::gen_synthetic(1, size, seed++);
    benchmark::DoNotOptimize(scenes);
  }
}
BENCHMARK(BM_GenSyntheticScene)->Arg(64)->Arg(128);

void BM_CubicBaseline(benchmark::State& state) {
  auto scenes = hsrecon::gen_synthetic(1, 64, 3);
  for (auto _ : state) {
    auto cube = hsrecon::cubic_spectral_baseline(scenes[0].msi);
    benchmark::DoNotOptimize(cube);
  }
}
BENCHMARK(BM_CubicBaseline);

void BM_SamEvaluate(benchmark::State& state) {
  auto scenes = hsrecon::gen_synthetic(2, 64, 4);
  std::vector<hsrecon::Cube> preds = {scenes[0].hsi, scenes[1].hsi};
  std::vector<hsrecon::Cube> truths = {scenes[1].hsi, scenes[0].hsi};
  std::vector<hsrecon::Mask> masks = {scenes[0].mask, scenes[1].mask};
  std::vector<std::string> names = {"a", "b"};
  for (auto _ : state) {
    auto report = hsrecon::evaluate(preds, truths, masks, names);
    benchmark::DoNotOptimize(report);
  }
}
BENCHMARK(BM_SamEvaluate);

void BM_ParitySplitMerge(benchmark::State& state) {
  auto scenes = hsrecon::gen_synthetic(1, 64, 5);
  for (auto _ : state) {
    auto [even, odd] = hsrecon::parity_split(scenes[0].hsi);
    auto merged = hsrecon::parity_merge(even, odd);
    benchmark::DoNotOptimize(merged);
  }
}
BENCHMARK(BM_ParitySplitMerge);

}  // namespace
