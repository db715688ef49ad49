#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "hsrecon/networks.hpp"
#include "hsrecon/optim.hpp"

using namespace hsrecon;
using testutil::random_tensor;

TEST_CASE("adam first step closed form") {
  Tensor theta = Tensor::scalar(0.0, true);
  Adam adam({&theta});
  theta.zero_grad();
  // plant a constant gradient of 1
  add(theta, 0.0).backward();
  CHECK(theta.grad()[0] == 1.0);
  adam.step();
  const double expected = -1e-3 / (1.0 + 1e-8);  // -lr * mhat / (sqrt(vhat) + eps)
  CHECK(theta.data()[0] == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("adam never moves parameters with zero gradient") {
  Tensor theta = Tensor::from({0.5, -0.25}, {2}, true);
  Adam adam({&theta});
  for (int i = 0; i < 25; ++i) {
    theta.zero_grad();
    adam.step();
  }
  CHECK(theta.data()[0] == 0.5);
  CHECK(theta.data()[1] == -0.25);
}

TEST_CASE("adam raises on missing gradient") {
  Tensor theta = Tensor::scalar(1.0, true);
  Adam adam({&theta});
  CHECK_THROWS_AS(adam.step(), Error);
}

// Independent scalar recomputation of Adam on f(t) = t^2 from t = 1.
TEST_CASE("adam trajectory matches a scalar reference to 1e-12") {
  const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double ref = 1.0, m = 0.0, v = 0.0;
  std::vector<double> reference;
  for (int t = 1; t <= 10; ++t) {
    const double g = 2.0 * ref;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    ref -= lr * mhat / (std::sqrt(vhat) + eps);
    reference.push_back(ref);
  }

  Tensor theta = Tensor::scalar(1.0, true);
  Adam adam({&theta});
  for (int t = 0; t < 10; ++t) {
    theta.zero_grad();
    mul(theta, theta).backward();
    adam.step();
    CHECK(std::abs(theta.data()[0] - reference[t]) <= 1e-12);
  }
}

TEST_CASE("stage defaults follow the training recipe") {
  auto m = default_train_config(Stage::Matching);
  CHECK(m.epochs == 100);
  CHECK(m.loss == LossKind::L2);
  CHECK(m.lr == 1e-3);
  auto i = default_train_config(Stage::Inverse);
  CHECK(i.epochs == 150);
  CHECK(i.loss == LossKind::L1);
  auto s30 = default_train_config(Stage::Misr, Parity::None, 30);
  CHECK(s30.epochs == 30);
  CHECK(s30.loss == LossKind::L2);
  auto s60 = default_train_config(Stage::Misr, Parity::None, 60);
  CHECK(s60.epochs == 60);
}

namespace {

// y = 2x regression on a single linear layer.
struct ToyProblem {
  std::vector<double> xs, ys;
  Linear layer;
  ToyProblem(std::uint64_t seed, std::size_t n = 32) {
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = rng.next_uniform(-1.0, 1.0);
      xs.push_back(x);
      ys.push_back(2.0 * x);
    }
    Rng init(seed + 100);
    layer.weight = Tensor::from({init.next_uniform(-1.0, 1.0)}, {1, 1}, true);
    layer.bias = Tensor::zeros({1}, true);
  }
  Tensor forward(std::span<const std::size_t> batch) {
    std::vector<double> x, y;
    for (auto i : batch) {
      x.push_back(xs[i]);
      y.push_back(ys[i]);
    }
    const std::size_t n = batch.size();
    Tensor tx = Tensor::from(std::move(x), {n, 1});
    Tensor ty = Tensor::from(std::move(y), {n, 1});
    return loss_l2(add_row_vector(matmul(tx, layer.weight), layer.bias), ty);
  }
};

}  // namespace

TEST_CASE("training converges on the linear toy problem") {
  ToyProblem toy(5);
  TrainConfig cfg = default_train_config(Stage::Matching);
  cfg.epochs = 200;
  cfg.lr = 0.01;
  cfg.seed = 5;
  auto fwd = [&](std::span<const std::size_t> b) { return toy.forward(b); };
  TrainLog log = train({&toy.layer.weight, &toy.layer.bias}, toy.xs.size(), fwd, cfg);
  REQUIRE(log.epoch_mean_loss.size() == 200);
  CHECK(log.epoch_mean_loss.back() < 1e-3);
  CHECK(toy.layer.weight.data()[0] == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("training is reproducible for a fixed seed") {
  auto run = [] {
    ToyProblem toy(9);
    TrainConfig cfg = default_train_config(Stage::Matching);
    cfg.epochs = 20;
    cfg.lr = 0.01;
    cfg.seed = 42;
    auto fwd = [&](std::span<const std::size_t> b) { return toy.forward(b); };
    return train({&toy.layer.weight, &toy.layer.bias}, toy.xs.size(), fwd, cfg);
  };
  TrainLog a = run(), b = run();
  REQUIRE(a.epoch_mean_loss.size() == b.epoch_mean_loss.size());
  for (std::size_t i = 0; i < a.epoch_mean_loss.size(); ++i)
    CHECK(a.epoch_mean_loss[i] == b.epoch_mean_loss[i]);  // bit-identical
}

TEST_CASE("zero epochs leaves parameters untouched") {
  ToyProblem toy(3);
  const double w0 = toy.layer.weight.data()[0];
  TrainConfig cfg;
  cfg.epochs = 0;
  auto fwd = [&](std::span<const std::size_t> b) { return toy.forward(b); };
  TrainLog log = train({&toy.layer.weight, &toy.layer.bias}, toy.xs.size(), fwd, cfg);
  CHECK(log.epoch_mean_loss.empty());
  CHECK(toy.layer.weight.data()[0] == w0);
}

TEST_CASE("empty dataset and non-finite loss are rejected") {
  ToyProblem toy(3);
  TrainConfig cfg;
  auto fwd = [&](std::span<const std::size_t> b) { return toy.forward(b); };
  CHECK_THROWS_AS(train({&toy.layer.weight}, 0, fwd, cfg), DataError);

  auto nan_fwd = [&](std::span<const std::size_t>) {
    Tensor x = Tensor::scalar(0.0, true);
    return div(x, x);  // 0/0
  };
  cfg.epochs = 1;
  CHECK_THROWS_AS(train({&toy.layer.weight}, 4, nan_fwd, cfg), NumericError);
}

// A miniature matching-style task: random two-layer net fit to a random
// linear map. The epoch-100 loss should beat epoch 1 for nearly every seed.
TEST_CASE("loss decreases over 100 epochs on seeded matching tasks") {
  int improved = 0;
  const int runs = 20;
  for (int run = 0; run < runs; ++run) {
    Rng rng(1000 + run);
    const std::size_t n = 24, d_in = 6, d_out = 5;
    std::vector<double> proj(d_in * d_out);
    for (auto& v : proj) v = rng.next_uniform(-1.0, 1.0);
    std::vector<std::vector<double>> xs(n), ys(n);
    for (std::size_t i = 0; i < n; ++i) {
      xs[i].resize(d_in);
      for (auto& v : xs[i]) v = rng.next_uniform(-1.0, 1.0);
      ys[i].assign(d_out, 0.0);
      for (std::size_t o = 0; o < d_out; ++o)
        for (std::size_t k = 0; k < d_in; ++k) ys[i][o] += 0.3 * xs[i][k] * proj[k * d_out + o];
    }
    MatchingNet net = make_matching_net(d_in, 8, d_out, 2000 + run);
    auto fwd = [&](std::span<const std::size_t> batch) {
      std::vector<double> x, y;
      for (auto i : batch) {
        x.insert(x.end(), xs[i].begin(), xs[i].end());
        y.insert(y.end(), ys[i].begin(), ys[i].end());
      }
      Tensor tx = Tensor::from(std::move(x), {batch.size(), d_in});
      Tensor ty = Tensor::from(std::move(y), {batch.size(), d_out});
      return loss_l2(matching_apply(net, tx), ty);
    };
    TrainConfig cfg = default_train_config(Stage::Matching);
    cfg.seed = 3000 + run;
    TrainLog log = train(parameters(net), n, fwd, cfg);
    if (log.epoch_mean_loss.back() < log.epoch_mean_loss.front()) ++improved;
  }
  CHECK(improved >= 19);  // >= 95% of runs
}

TEST_CASE("loss log serialization") {
  TrainLog log;
  log.epoch_mean_loss = {0.5, 0.25};
  const std::string csv = train_log_csv(log);
  CHECK(csv == "epoch,mean_loss\n1,0.5\n2,0.25\n");
}
