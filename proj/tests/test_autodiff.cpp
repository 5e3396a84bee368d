#include <doctest.h>

#include <cmath>
#include <random>

#include "flowcast/error.hpp"
#include "flowcast/optim.hpp"
#include "flowcast/tensor.hpp"
#include "support.hpp"

using namespace flowcast::ad;
using testing::check_gradients;
using testing::projection_loss;
using testing::random_tensor;
using testing::random_values;

namespace {

constexpr double kTol = 1e-4;
constexpr double kTolBatchNorm = 1e-3;

// Values bounded away from 0 so relu never sits within h of its kink.
Tensor away_from_zero(std::mt19937_64& rng, Shape shape) {
  auto v = random_values(rng, numel(shape), 0.05, 1.0);
  for (auto& x : v) x = (rng() & 1) ? x : -x;
  return Tensor::from(std::move(shape), std::move(v), true);
}

}  // namespace

TEST_CASE("sum gives unit gradient") {
  auto x = Tensor::from({3}, {1.0, -2.0, 0.5}, true);
  backward(sum(x));
  CHECK(x.grad()[0] == 1.0);
  CHECK(x.grad()[1] == 1.0);
  CHECK(x.grad()[2] == 1.0);
}

TEST_CASE("two backward calls double leaf gradients") {
  std::mt19937_64 rng(3);
  auto a = random_tensor(rng, {2, 3});
  auto b = random_tensor(rng, {3, 2});
  const auto loss = sum(relu(matmul(a, b)));
  backward(loss);
  const std::vector<double> once(a.grad().begin(), a.grad().end());
  backward(loss);
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(a.grad()[i] == 2.0 * once[i]);
}

TEST_CASE("shared subexpression accumulates both paths") {
  auto x = Tensor::from({2}, {1.5, -0.5}, true);
  const auto y = hadamard(x, x);  // d/dx x^2 = 2x
  backward(sum(add(y, x)));       // + 1
  CHECK(x.grad()[0] == doctest::Approx(4.0));
  CHECK(x.grad()[1] == doctest::Approx(0.0));
}

TEST_CASE("elementwise primitives match finite differences") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    CAPTURE(seed);
    std::mt19937_64 rng(seed);
    auto a = random_tensor(rng, {2, 3, 4});
    auto b = random_tensor(rng, {2, 3, 4});
    auto row = random_tensor(rng, {4});
    const auto w = random_values(rng, 24);

    CHECK(check_gradients([&] { return projection_loss(add(a, b), w); }, {a, b}).max_rel_error < kTol);
    CHECK(check_gradients([&] { return projection_loss(sub(a, b), w); }, {a, b}).max_rel_error < kTol);
    CHECK(check_gradients([&] { return projection_loss(hadamard(a, b), w); }, {a, b}).max_rel_error < kTol);
    CHECK(check_gradients([&] { return projection_loss(hadamard(a, row), w); }, {a, row}).max_rel_error < kTol);
    CHECK(check_gradients([&] { return projection_loss(add(a, row), w); }, {a, row}).max_rel_error < kTol);
    CHECK(check_gradients([&] { return projection_loss(scale(a, -1.7), w); }, {a}).max_rel_error < kTol);
    CHECK(check_gradients([&] { return projection_loss(sigmoid(a), w); }, {a}).max_rel_error < kTol);
    auto r = away_from_zero(rng, {2, 3, 4});
    CHECK(check_gradients([&] { return projection_loss(relu(r), w); }, {r}).max_rel_error < kTol);
    CHECK(check_gradients([&] { return mse(a, b); }, {a, b}).max_rel_error < kTol);
    CHECK(check_gradients([&] { return sum(a); }, {a}).max_rel_error < kTol);
  }
}

TEST_CASE("structural primitives match finite differences") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    CAPTURE(seed);
    std::mt19937_64 rng(seed);
    auto a = random_tensor(rng, {2, 3, 4});
    auto m = random_tensor(rng, {4, 5});
    const auto wm = random_values(rng, 30);
    CHECK(check_gradients([&] { return projection_loss(matmul(a, m), wm); }, {a, m}).max_rel_error < kTol);
    const auto wp = random_values(rng, 24);
    CHECK(check_gradients([&] { return projection_loss(permute(a, {2, 0, 1}), wp); }, {a}).max_rel_error < kTol);
    CHECK(check_gradients([&] { return projection_loss(reshape(a, {6, 4}), wp); }, {a}).max_rel_error < kTol);

    auto x = random_tensor(rng, {2, 3, 7, 4});
    auto k = random_tensor(rng, {5, 3, 3});
    auto bias = random_tensor(rng, {5});
    const auto wc = random_values(rng, 2 * 5 * 5 * 4);
    CHECK(check_gradients([&] { return projection_loss(temporal_conv1d(x, k, bias), wc); }, {x, k, bias})
              .max_rel_error < kTol);
  }
}

TEST_CASE("composite relu(matmul) graph matches finite differences") {
  for (std::uint64_t seed : {4u, 5u, 6u}) {
    std::mt19937_64 rng(seed);
    auto a = random_tensor(rng, {3, 4});
    auto b = random_tensor(rng, {4, 3});
    const auto w = random_values(rng, 9);
    const auto res = check_gradients([&] { return projection_loss(relu(matmul(a, b)), w); }, {a, b});
    CHECK(res.max_rel_error < kTol);
  }
}

TEST_CASE("batch norm matches finite differences in train and eval mode") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    CAPTURE(seed);
    std::mt19937_64 rng(seed);
    auto x = random_tensor(rng, {3, 2, 4, 3});
    auto gamma = random_tensor(rng, {2}, 0.5, 1.5);
    auto beta = random_tensor(rng, {2});
    const auto w = random_values(rng, 72);
    BatchNormStats stats(2);
    CHECK(check_gradients([&] { return projection_loss(batch_norm(x, gamma, beta, stats, Mode::train), w); },
                          {x, gamma, beta})
              .max_rel_error < kTolBatchNorm);
    BatchNormStats fixed(2);
    fixed.running_mean = {0.1, -0.2};
    fixed.running_var = {0.9, 1.3};
    CHECK(check_gradients([&] { return projection_loss(batch_norm(x, gamma, beta, fixed, Mode::eval), w); },
                          {x, gamma, beta})
              .max_rel_error < kTolBatchNorm);
  }
}

TEST_CASE("sigmoid stays in (0,1) and relu is non-negative") {
  auto x = Tensor::from({5}, {-800.0, -3.0, 0.0, 3.0, 800.0});
  const auto sx = sigmoid(x);
  for (double v : sx.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  std::mt19937_64 rng(9);
  auto y = random_tensor(rng, {50}, -5.0, 5.0);
  const auto sy = sigmoid(y);
  const auto ry = relu(y);
  for (double v : sy.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  for (double v : ry.values()) CHECK(v >= 0.0);
}

TEST_CASE("relu subgradient at zero is zero") {
  auto x = Tensor::from({3}, {0.0, 1.0, -1.0}, true);
  backward(sum(relu(x)));
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
  CHECK(x.grad()[2] == 0.0);
}

TEST_CASE("temporal convolution output length is T - K_t + 1") {
  std::mt19937_64 rng(1);
  for (std::size_t t = 1; t <= 8; ++t) {
    for (std::size_t kt = 1; kt <= t; ++kt) {
      auto x = random_tensor(rng, {2, 3, t, 4});
      auto w = random_tensor(rng, {2, 3, kt});
      auto b = random_tensor(rng, {2});
      const auto y = temporal_conv1d(x, w, b);
      CHECK(y.shape() == Shape{2, 2, t - kt + 1, 4});
    }
    auto x = random_tensor(rng, {1, 1, t, 1});
    CHECK_THROWS_AS(temporal_conv1d(x, random_tensor(rng, {1, 1, t + 1}), random_tensor(rng, {1})), flowcast::Error);
  }
}

TEST_CASE("temporal convolution matches a direct loop") {
  std::mt19937_64 rng(12);
  auto x = random_tensor(rng, {2, 3, 6, 4});
  auto w = random_tensor(rng, {5, 3, 2});
  auto b = random_tensor(rng, {5});
  const auto y = temporal_conv1d(x, w, b);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t o = 0; o < 5; ++o)
      for (std::size_t t = 0; t < 5; ++t)
        for (std::size_t v = 0; v < 4; ++v) {
          double acc = b.at({o});
          for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t k = 0; k < 2; ++k) acc += w.at({o, c, k}) * x.at({n, c, t + k, v});
          CHECK(y.at({n, o, t, v}) == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("batch norm train output is standardized per channel") {
  std::mt19937_64 rng(21);
  auto x = random_tensor(rng, {4, 3, 5, 6}, -10.0, 30.0);
  auto gamma = Tensor::full({3}, 1.0);
  auto beta = Tensor::zeros({3});
  BatchNormStats stats(3);
  const auto y = batch_norm(x, gamma, beta, stats, Mode::train);
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0, sq = 0.0;
    std::size_t count = 0;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t t = 0; t < 5; ++t)
        for (std::size_t v = 0; v < 6; ++v) {
          const double val = y.at({b, c, t, v});
          mean += val;
          sq += val * val;
          ++count;
        }
    mean /= static_cast<double>(count);
    const double var = sq / static_cast<double>(count) - mean * mean;
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-4);
  }
}

TEST_CASE("batch norm updates running statistics with momentum") {
  auto x = Tensor::from({2, 1, 1, 2}, {1.0, 3.0, 5.0, 7.0});
  auto gamma = Tensor::full({1}, 1.0);
  auto beta = Tensor::zeros({1});
  BatchNormStats stats(1);
  batch_norm(x, gamma, beta, stats, Mode::train);
  // batch mean 4, biased variance 5
  CHECK(stats.running_mean[0] == doctest::Approx(0.4));
  CHECK(stats.running_var[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 5.0));
  const auto y = batch_norm(x, gamma, beta, stats, Mode::eval);
  CHECK(y.at({0, 0, 0, 0}) == doctest::Approx((1.0 - 0.4) / std::sqrt(1.4 + 1e-5)));
}

TEST_CASE("matmul broadcasts over leading dimensions") {
  auto a = Tensor::from({2, 1, 2}, {1, 2, 3, 4});
  auto b = Tensor::from({2, 2}, {1, 0, 0, 2});
  const auto y = matmul(a, b);
  CHECK(y.shape() == Shape{2, 1, 2});
  CHECK(y.at({0, 0, 1}) == 4.0);
  CHECK(y.at({1, 0, 0}) == 3.0);
  CHECK_THROWS_AS(matmul(a, Tensor::zeros({3, 2})), flowcast::Error);
}

TEST_CASE("permute moves axes") {
  auto x = Tensor::from({2, 3}, {0, 1, 2, 3, 4, 5});
  const auto y = permute(x, {1, 0});
  CHECK(y.shape() == Shape{3, 2});
  CHECK(y.at({2, 1}) == 5.0);
  CHECK(y.at({1, 0}) == 1.0);
  CHECK_THROWS_AS(permute(x, {0, 0}), flowcast::Error);
}

TEST_CASE("tensor construction validates sizes") {
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0}), flowcast::Error);
  CHECK_THROWS_AS(Tensor::zeros({0, 2}), flowcast::Error);
  CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), flowcast::Error);
  CHECK(Tensor::scalar(2.5).item() == 2.5);
}

TEST_CASE("backward visits nodes in reverse topological order") {
  // A diamond: x -> (a, b) -> c. Each interior gradient must be complete
  // before it is pushed further, so the result equals the analytic value.
  auto x = Tensor::from({1}, {0.3}, true);
  const auto a = sigmoid(x);
  const auto b = hadamard(a, a);
  const auto c = add(hadamard(b, a), a);  // a^3 + a
  backward(sum(c));
  const double s = 1.0 / (1.0 + std::exp(-0.3));
  const double ds = s * (1.0 - s);
  CHECK(x.grad()[0] == doctest::Approx((3.0 * s * s + 1.0) * ds).epsilon(1e-12));
}

TEST_CASE("rmsprop with zero gradient leaves parameters unchanged") {
  std::mt19937_64 rng(5);
  auto p = random_tensor(rng, {4, 3});
  auto q = random_tensor(rng, {2});
  const std::vector<double> before(p.values().begin(), p.values().end());
  const std::vector<double> before_q(q.values().begin(), q.values().end());
  p.zero_grad();
  RmsProp opt({p, q}, {1e-2, 0.99, 1e-8});
  for (int i = 0; i < 3; ++i) opt.step();
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(p.values()[i] == before[i]);
  for (std::size_t i = 0; i < before_q.size(); ++i) CHECK(q.values()[i] == before_q[i]);
}

TEST_CASE("rmsprop step follows the update rule") {
  auto p = Tensor::from({2}, {1.0, -1.0}, true);
  p.mutable_grad()[0] = 0.5;
  p.mutable_grad()[1] = -2.0;
  std::vector<Tensor> params{p};
  OptimizerState state;
  state.options = {0.1, 0.9, 1e-8};
  rmsprop_step(params, state);
  const double s0 = 0.1 * 0.25, s1 = 0.1 * 4.0;
  CHECK(p.values()[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (std::sqrt(s0) + 1e-8)).epsilon(1e-14));
  CHECK(p.values()[1] == doctest::Approx(-1.0 + 0.1 * 2.0 / (std::sqrt(s1) + 1e-8)).epsilon(1e-14));
  CHECK(state.square_avg[0][1] == doctest::Approx(s1));
}

TEST_CASE("checkpoint round trip is exact") {
  std::mt19937_64 rng(8);
  NamedTensors ts{{"w", random_tensor(rng, {2, 3})}, {"b", random_tensor(rng, {3})}, {"s", Tensor::scalar(4.25)}};
  const auto bytes = encode_checkpoint(ts);
  CHECK(bytes.substr(0, 4) == "CNW1");
  const auto back = decode_checkpoint(bytes);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].first == ts[i].first);
    CHECK(back[i].second.shape() == ts[i].second.shape());
    for (std::size_t j = 0; j < ts[i].second.numel(); ++j) CHECK(back[i].second.values()[j] == ts[i].second.values()[j]);
  }
  CHECK(encode_checkpoint(back) == bytes);
  CHECK_THROWS_AS(decode_checkpoint("XXXX"), flowcast::Error);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), flowcast::Error);
}
