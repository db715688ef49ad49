#include <benchmark/benchmark.h>

#include "hsrecon/common.hpp"
#include "hsrecon/scattering.hpp"

namespace {

std::vector<double> random_image(std::size_t n, std::uint64_t seed) {
  hsrecon::Rng rng(seed);
  std::vector<double> img(n);
  for (auto& v : img) v = rng.next_unit();
  return img;
}

void BM_BuildFilterBank(benchmark::State& state) {
  const auto size = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    auto bank = hsrecon::build_filter_bank(2, 4, size, size);
    benchmark::DoNotOptimize(bank);
  }
}
BENCHMARK(BM_BuildFilterBank)->Arg(64)->Arg(128);

void BM_Scatter2d(benchmark::State& state) {
  const auto size = static_cast<std::size_t>(state.range(0));
  const auto bank = hsrecon::build_filter_bank(2, 4, size, size);
  const auto img = random_image(size * size, 1);
  for (auto _ : state) {
    auto coeffs = hsrecon::scatter2d(img, bank);
    benchmark::DoNotOptimize(coeffs);
  }
}
BENCHMARK(BM_Scatter2d)->Arg(32)->Arg(64)->Arg(128);

void BM_ScatterMsiStack(benchmark::State& state) {
  const std::size_t size = 64;
  const auto bank = hsrecon::build_filter_bank(2, 4, size, size);
  const auto stack = random_image(4 * size * size, 2);
  for (auto _ : state) {
    auto coeffs = hsrecon::scatter_multichannel(stack, 4, bank);
    benchmark::DoNotOptimize(coeffs);
  }
}
BENCHMARK(BM_ScatterMsiStack);

}  // namespace

BENCHMARK_MAIN();
