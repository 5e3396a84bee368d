#include <doctest.h>

#include <cmath>
#include <random>

#include "flowcast/error.hpp"
#include "flowcast/metrics.hpp"
#include "support.hpp"

using namespace flowcast;
using V = std::vector<double>;

TEST_CASE("rmse examples and oracle") {
  CHECK(metrics::rmse(V{1, 2, 3}, V{1, 2, 3}) == 0.0);
  CHECK(metrics::rmse(V{0}, V{3}) == 3.0);
  CHECK_THROWS_AS(metrics::rmse(V{0, 1}, V{3}), Error);
  CHECK_THROWS_AS(metrics::rmse(V{}, V{}), Error);
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 1 + rng() % 200;
    const auto p = testing::random_values(rng, n, -5, 5);
    const auto t = testing::random_values(rng, n, -5, 5);
    // Expanded-square form as an independent route to the same value.
    double pp = 0, pt = 0, tt = 0;
    for (std::size_t i = 0; i < n; ++i) {
      pp += p[i] * p[i];
      pt += p[i] * t[i];
      tt += t[i] * t[i];
    }
    const double expected = std::sqrt(std::max(0.0, (pp - 2 * pt + tt) / static_cast<double>(n)));
    CHECK(metrics::rmse(p, t) == doctest::Approx(expected).epsilon(1e-10));
    CHECK(metrics::rmse(p, t) == metrics::rmse(t, p));
  }
}

TEST_CASE("nrmse examples") {
  CHECK(metrics::nrmse(2.0, 10.0, 0.0) == doctest::Approx(0.2));
  CHECK(metrics::nrmse(0.0, 10.0, 3.0) == 0.0);
  CHECK(metrics::nrmse(3.0, 7.0, 1.0) == 0.5);
  CHECK_THROWS_AS(metrics::nrmse(1.0, 5.0, 5.0), Error);
  CHECK_THROWS_AS(metrics::nrmse(1.0, 4.0, 5.0), Error);
}

TEST_CASE("cpc examples") {
  CHECK(metrics::cpc(V{1, 2, 0, 4}, V{1, 2, 0, 4}) == 1.0);
  CHECK(metrics::cpc(V{1, 0, 3, 0}, V{0, 2, 0, 5}) == 0.0);
  CHECK(metrics::cpc(V{2}, V{4}) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS_AS(metrics::cpc(V{0, 0}, V{0, 0}), Error);
  CHECK_THROWS_AS(metrics::cpc(V{-1, 2}, V{0, 2}), Error);
  CHECK_THROWS_AS(metrics::cpc(V{1}, V{0, 2}), Error);
}

TEST_CASE("cpc agrees with its absolute-difference form and is symmetric and scale free") {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 1 + rng() % 50;
    auto p = testing::random_values(rng, n, 0, 10);
    auto t = testing::random_values(rng, n, 0, 10);
    for (std::size_t i = 0; i < n; ++i) {
      if (rng() % 4 == 0) p[i] = 0;
      if (rng() % 4 == 0) t[i] = 0;
    }
    p[0] += 1.0;
    double diff = 0, total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      diff += std::abs(p[i] - t[i]);
      total += p[i] + t[i];
    }
    const double c = metrics::cpc(p, t);
    CHECK(c == doctest::Approx(1.0 - diff / total).epsilon(1e-12));
    CHECK(c >= 0.0);
    CHECK(c <= 1.0);
    CHECK(c == doctest::Approx(metrics::cpc(t, p)).epsilon(1e-15));
    const double k = testing::uniform(rng, 0.1, 100);
    auto ps = p, ts = t;
    for (auto& v : ps) v *= k;
    for (auto& v : ts) v *= k;
    CHECK(metrics::cpc(ps, ts) == doctest::Approx(c).epsilon(1e-12));
  }
}
