#include <benchmark/benchmark.h>

#include "hsrecon/common.hpp"
#include "hsrecon/networks.hpp"
#include "hsrecon/optim.hpp"
#include "hsrecon/tensor.hpp"

namespace {

hsrecon::Tensor random_tensor(hsrecon::Shape shape, std::uint64_t seed, bool grad = false) {
  hsrecon::Rng rng(seed);
  std::vector<double> data(hsrecon::shape_numel(shape));
  for (auto& v : data) v = rng.next_uniform(-1.0, 1.0);
  return hsrecon::Tensor::from(std::move(data), std::move(shape), grad);
}

void BM_MatmulForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto a = random_tensor({n, n}, 1);
  auto b = random_tensor({n, n}, 2);
  for (auto _ : state) {
    auto c = hsrecon::matmul(a, b);
    benchmark::DoNotOptimize(c);
  }
}
BENCHMARK(BM_MatmulForward)->Arg(128)->Arg(256)->Arg(512);

void BM_Conv2dTrainStep(benchmark::State& state) {
  // one forward+backward of the widest convolution in the inverse network
  auto x = random_tensor({4, 775, 8, 8}, 3, false);
  auto w = random_tensor({16, 775, 3, 3}, 4, true);
  auto b = random_tensor({16}, 5, true);
  auto t = random_tensor({4, 16, 8, 8}, 6);
  for (auto _ : state) {
    w.zero_grad();
    b.zero_grad();
    auto loss = hsrecon::mse_loss(hsrecon::conv2d_same(x, w, b), t);
    loss.backward();
    benchmark::DoNotOptimize(loss);
  }
}
BENCHMARK(BM_Conv2dTrainStep);

void BM_MatchingTrainStep(benchmark::State& state) {
  auto net = hsrecon::make_matching_net(100, 128, 775, 7);
  auto x = random_tensor({1024, 100}, 8);
  auto t = random_tensor({1024, 775}, 9);
  auto params = hsrecon::parameters(net);
  hsrecon::Adam adam(params);
  for (auto _ : state) {
    for (auto* p : params) p->zero_grad();
    auto loss = hsrecon::loss_l2(hsrecon::matching_apply(net, x), t);
    loss.backward();
    adam.step();
    benchmark::DoNotOptimize(loss);
  }
}
BENCHMARK(BM_MatchingTrainStep);

void BM_AdamStep(benchmark::State& state) {
  auto p = random_tensor({static_cast<std::size_t>(state.range(0))}, 10, true);
  p.zero_grad();
  hsrecon::sum(hsrecon::mul(p, p)).backward();
  hsrecon::Adam adam({&p});
  for (auto _ : state) adam.step();
}
BENCHMARK(BM_AdamStep)->Arg(1 << 12)->Arg(1 << 16)->Arg(1 << 20);

}  // namespace
