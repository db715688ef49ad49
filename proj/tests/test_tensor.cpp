#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "hsrecon/tensor.hpp"

using namespace hsrecon;
using testutil::gradcheck;
using testutil::random_tensor;
using testutil::random_tensor_nonzero;

TEST_CASE("elementwise arithmetic") {
  Tensor a = Tensor::from({1, 2}, {2});
  Tensor b = Tensor::from({3, 4}, {2});
  auto r = add(a, b);
  CHECK(r.data()[0] == 4.0);
  CHECK(r.data()[1] == 6.0);

  Tensor c = Tensor::from({2, 3}, {2});
  auto z = mul(c, 0.0);
  CHECK(z.data()[0] == 0.0);
  CHECK(z.data()[1] == 0.0);

  CHECK(sub(a, b).data()[0] == -2.0);
  CHECK(div(b, a).data()[1] == 2.0);

  Tensor bad = Tensor::from({1, 2, 3}, {3});
  CHECK_THROWS_AS(add(a, bad), ShapeError);
}

TEST_CASE("gradient of sum(a*a)") {
  Tensor a = Tensor::from({1, 2}, {2}, /*requires_grad=*/true);
  auto fn = [&] { return sum(mul(a, a)); };
  CHECK(gradcheck(fn, {&a}) < 1e-6);
  a.zero_grad();
  sum(mul(a, a)).backward();
  CHECK(a.grad()[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(a.grad()[1] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("matmul values") {
  Tensor eye = Tensor::from({1, 0, 0, 1}, {2, 2});
  Tensor m = Tensor::from({5, 6, 7, 8}, {2, 2});
  auto r = matmul(eye, m);
  for (std::size_t i = 0; i < 4; ++i) CHECK(r.data()[i] == m.data()[i]);

  Tensor row = Tensor::from({1, 2}, {1, 2});
  Tensor col = Tensor::from({3, 4}, {2, 1});
  CHECK(matmul(row, col).item() == 11.0);

  CHECK_THROWS_AS(matmul(row, row), ShapeError);
}

TEST_CASE("matmul gradient vs finite differences") {
  Rng rng(7);
  Tensor a = random_tensor({3, 4}, rng, -1, 1, true);
  Tensor b = random_tensor({4, 2}, rng, -1, 1, true);
  auto fn = [&] { return sum(matmul(a, b)); };
  CHECK(gradcheck(fn, {&a, &b}) < 1e-6);
}

TEST_CASE("activations") {
  Tensor x = Tensor::from({-1, 0, 2}, {3});
  auto r = relu(x);
  CHECK(r.data()[0] == 0.0);
  CHECK(r.data()[1] == 0.0);
  CHECK(r.data()[2] == 2.0);
  CHECK(hsrecon::tanh(Tensor::scalar(0.0)).item() == 0.0);

  // analytic identity 1 - tanh(x)^2 at x = 0.5
  Tensor t = Tensor::scalar(0.5, true);
  hsrecon::tanh(t).backward();
  const double expected = 1.0 - std::tanh(0.5) * std::tanh(0.5);
  CHECK(t.grad()[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(t.grad()[0] == doctest::Approx(0.786448).epsilon(1e-6));

  Rng rng(3);
  Tensor xr = random_tensor_nonzero({17}, rng, 0.05, true);
  auto fn_relu = [&] { return sum(mul(relu(xr), 0.5)); };
  CHECK(gradcheck(fn_relu, {&xr}) < 1e-6);
  Tensor xt = random_tensor({17}, rng, -2, 2, true);
  auto fn_tanh = [&] { return sum(hsrecon::tanh(xt)); };
  CHECK(gradcheck(fn_tanh, {&xt}) < 1e-4);
}

TEST_CASE("upsample_nearest2") {
  Tensor one = Tensor::from({1}, {1, 1, 1});
  auto up = upsample_nearest2(one);
  CHECK(up.shape() == Shape{1, 2, 2});
  for (double v : up.data()) CHECK(v == 1.0);

  Tensor x = Tensor::zeros({3, 8, 8});
  CHECK(upsample_nearest2(x).shape() == Shape{3, 16, 16});

  Tensor g = Tensor::full({2, 3, 3}, 1.5, true);
  sum(upsample_nearest2(g)).backward();
  for (double v : g.grad()) CHECK(v == 4.0);  // each pixel feeds a 2x2 block
}

TEST_CASE("conv2d_same basics") {
  // 1x1 kernel with weight 1, bias 0 is the identity
  Rng rng(11);
  Tensor x = random_tensor({2, 4, 4}, rng);
  Tensor w = Tensor::from({1, 0, 0, 1}, {2, 2, 1, 1});
  Tensor b = Tensor::zeros({2});
  auto y = conv2d_same(x, w, b);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);

  // all-zero input: output equals the broadcast bias
  Tensor x0 = Tensor::zeros({3, 5, 5});
  Tensor w0 = random_tensor({2, 3, 3, 3}, rng);
  Tensor b0 = Tensor::from({0.25, -0.5}, {2});
  auto y0 = conv2d_same(x0, w0, b0);
  for (std::size_t i = 0; i < 25; ++i) {
    CHECK(y0.data()[i] == 0.25);
    CHECK(y0.data()[25 + i] == -0.5);
  }

  Tensor even = Tensor::zeros({1, 1, 2, 2});
  CHECK_THROWS_AS(conv2d_same(x0, even, b0), ShapeError);
  Tensor wrongc = Tensor::zeros({2, 4, 3, 3});
  CHECK_THROWS_AS(conv2d_same(x0, wrongc, b0), ShapeError);
}

TEST_CASE("conv2d_same gradient vs finite differences") {
  Rng rng(13);
  Tensor x = random_tensor({2, 5, 5}, rng, -1, 1, true);
  Tensor w = random_tensor({3, 2, 3, 3}, rng, -0.5, 0.5, true);
  Tensor b = random_tensor({3}, rng, -0.2, 0.2, true);
  Tensor target = random_tensor({3, 5, 5}, rng);
  auto fn = [&] { return mse_loss(conv2d_same(x, w, b), target); };
  CHECK(gradcheck(fn, {&x, &w, &b}) < 1e-5);
}

TEST_CASE("batchnorm2d statistics") {
  Rng rng(17);
  Tensor x = random_tensor({4, 2, 3, 3}, rng, -3, 5);
  Tensor gamma = Tensor::from({1, 1}, {2});
  Tensor beta = Tensor::from({0, 0}, {2});
  std::vector<double> rm(2, 0.0), rv(2, 1.0);
  auto y = batchnorm2d(x, gamma, beta, rm, rv, /*training=*/true);

  const std::size_t hw = 9, m = 4 * hw;
  for (int c = 0; c < 2; ++c) {
    double sum = 0.0, sq = 0.0;
    for (int n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < hw; ++i) {
        const double v = y.data()[(n * 2 + c) * hw + i];
        sum += v;
        sq += v * v;
      }
    const double mean = sum / m;
    const double var = sq / m - mean * mean;
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-4);  // eps shifts the variance slightly
  }

  // gamma=2, beta=3 on standardized input: mean 3, std 2
  Tensor g2 = Tensor::from({2, 2}, {2});
  Tensor b3 = Tensor::from({3, 3}, {2});
  std::vector<double> rm2(2, 0.0), rv2(2, 1.0);
  auto y2 = batchnorm2d(x, g2, b3, rm2, rv2, /*training=*/true);
  for (int c = 0; c < 2; ++c) {
    double sum = 0.0, sq = 0.0;
    for (int n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < hw; ++i) {
        const double v = y2.data()[(n * 2 + c) * hw + i];
        sum += v;
        sq += v * v;
      }
    const double mean = sum / m;
    CHECK(mean == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(std::sqrt(sq / m - mean * mean) == doctest::Approx(2.0).epsilon(1e-4));
  }

  Tensor empty = Tensor::zeros({0, 2, 3, 3});
  CHECK_THROWS_AS(batchnorm2d(empty, gamma, beta, rm, rv, true), ShapeError);
}

TEST_CASE("batchnorm2d gradient vs finite differences") {
  Rng rng(19);
  Tensor x = random_tensor({4, 2, 3, 3}, rng, -2, 2, true);
  Tensor gamma = random_tensor({2}, rng, 0.5, 1.5, true);
  Tensor beta = random_tensor({2}, rng, -0.5, 0.5, true);
  Tensor target = random_tensor({4, 2, 3, 3}, rng);
  std::vector<double> rm(2, 0.0), rv(2, 1.0);
  auto fn = [&] { return mse_loss(batchnorm2d(x, gamma, beta, rm, rv, true), target); };
  CHECK(gradcheck(fn, {&x, &gamma, &beta}) < 1e-4);
}

TEST_CASE("identity-like chains pass gradients through exactly") {
  Tensor x = Tensor::scalar(3.25, true);
  Tensor y = reshape(x, {1, 1});
  y = transpose2d(y);
  y = reshape(y, {1});
  y = add(y, 0.0);
  y = mul(y, 1.0);
  sum(y).backward();
  CHECK(x.grad()[0] == 1.0);  // exactly
}

TEST_CASE("backward requires a scalar root") {
  Tensor x = Tensor::from({1, 2}, {2}, true);
  auto y = mul(x, 2.0);
  CHECK_THROWS_AS(y.backward(), ShapeError);
}

TEST_CASE("losses") {
  Tensor p = Tensor::from({1, 2}, {2});
  Tensor t = Tensor::from({0, 0}, {2});
  CHECK(mse_loss(p, t).item() == 2.5);
  Tensor p2 = Tensor::from({1, -2}, {2});
  CHECK(l1_loss(p2, t).item() == 1.5);

  // L2 gradient 2(pred-target)/n
  Rng rng(23);
  Tensor pr = random_tensor({6}, rng, -1, 1, true);
  Tensor tg = random_tensor({6}, rng);
  auto fn = [&] { return mse_loss(pr, tg); };
  CHECK(gradcheck(fn, {&pr}) < 1e-6);
  pr.zero_grad();
  mse_loss(pr, tg).backward();
  for (std::size_t i = 0; i < 6; ++i)
    CHECK(pr.grad()[i] ==
          doctest::Approx(2.0 * (pr.data()[i] - tg.data()[i]) / 6.0).epsilon(1e-12));

  Tensor pl = random_tensor_nonzero({6}, rng, 0.2, true);
  Tensor tl = Tensor::zeros({6});
  auto fn_l1 = [&] { return l1_loss(pl, tl); };
  CHECK(gradcheck(fn_l1, {&pl}) < 1e-6);
}

TEST_CASE("grad accumulates across reuse of one tensor") {
  Tensor x = Tensor::scalar(2.0, true);
  // y = x*x + 3x  =>  dy/dx = 2x + 3 = 7
  Tensor y = add(mul(x, x), mul(x, 3.0));
  y.backward();
  CHECK(x.grad()[0] == doctest::Approx(7.0).epsilon(1e-14));
}

TEST_CASE("eval-mode batchnorm forward is bit-identical across runs") {
  Rng rng(29);
  Tensor x = random_tensor({2, 3, 4, 4}, rng);
  Tensor gamma = random_tensor({3}, rng, 0.5, 1.5);
  Tensor beta = random_tensor({3}, rng, -0.5, 0.5);
  std::vector<double> rm = {0.1, -0.2, 0.05}, rv = {1.2, 0.8, 1.0};
  auto y1 = batchnorm2d(x, gamma, beta, rm, rv, /*training=*/false);
  auto y2 = batchnorm2d(x, gamma, beta, rm, rv, /*training=*/false);
  for (std::size_t i = 0; i < y1.numel(); ++i) CHECK(y1.data()[i] == y2.data()[i]);
}
