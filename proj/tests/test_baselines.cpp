#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "flowcast/baselines.hpp"
#include "flowcast/error.hpp"
#include "support.hpp"

using namespace flowcast;
using namespace flowcast::baselines;
using testing::uniform;

namespace {

struct VarProcess {
  std::size_t d = 0;
  std::size_t p = 0;
  std::vector<std::vector<double>> lags;
  std::vector<double> intercept;
  std::vector<double> series;  ///< (t, d)
};

std::vector<double> step(const VarProcess& v, const std::vector<double>& series, std::size_t now) {
  std::vector<double> y = v.intercept;
  for (std::size_t lag = 1; lag <= v.p; ++lag)
    for (std::size_t i = 0; i < v.d; ++i)
      for (std::size_t j = 0; j < v.d; ++j) y[i] += v.lags[lag - 1][i * v.d + j] * series[(now - lag) * v.d + j];
  return y;
}

using Mat = std::vector<double>;  // d x d row-major

Mat matmul(const Mat& a, const Mat& b, std::size_t d) {
  Mat c(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t j = 0; j < d; ++j) c[i * d + j] += a[i * d + k] * b[k * d + j];
  return c;
}

Mat inverse(Mat a, std::size_t d) {
  Mat inv(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) inv[i * d + i] = 1.0;
  for (std::size_t c = 0; c < d; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < d; ++r)
      if (std::abs(a[r * d + c]) > std::abs(a[piv * d + c])) piv = r;
    for (std::size_t j = 0; j < d; ++j) {
      std::swap(a[c * d + j], a[piv * d + j]);
      std::swap(inv[c * d + j], inv[piv * d + j]);
    }
    const double f = a[c * d + c];
    for (std::size_t j = 0; j < d; ++j) {
      a[c * d + j] /= f;
      inv[c * d + j] /= f;
    }
    for (std::size_t r = 0; r < d; ++r) {
      if (r == c) continue;
      const double g = a[r * d + c];
      for (std::size_t j = 0; j < d; ++j) {
        a[r * d + j] -= g * a[c * d + j];
        inv[r * d + j] -= g * inv[c * d + j];
      }
    }
  }
  return inv;
}

// S R S^-1 where R holds 2x2 rotations (and one negative real root for odd d)
// with modulus close to 1 and the given angles.
Mat oscillator(std::mt19937_64& rng, std::size_t d, const std::vector<double>& angles, double real_root) {
  Mat r(d * d, 0.0);
  std::size_t next = 0;
  for (std::size_t b = 0; b + 1 < d; b += 2) {
    const double rho = uniform(rng, 0.98, 1.0), th = angles[next++];
    r[b * d + b] = rho * std::cos(th);
    r[b * d + b + 1] = -rho * std::sin(th);
    r[(b + 1) * d + b] = rho * std::sin(th);
    r[(b + 1) * d + b + 1] = rho * std::cos(th);
  }
  if (d % 2 == 1) r[(d - 1) * d + d - 1] = real_root;
  Mat s = testing::random_values(rng, d * d, -0.3, 0.3);
  for (std::size_t i = 0; i < d; ++i) s[i * d + i] += 1.0;
  return matmul(matmul(s, r, d), inverse(s, d), d);
}

// Noiseless VAR(p) whose characteristic polynomial factors as
// (I z - B_1) ... (I z - B_p); every root sits near the unit circle at a
// distinct angle so the trajectory keeps exciting all coefficients.
VarProcess random_process(std::mt19937_64& rng, std::size_t d, std::size_t p, std::size_t t) {
  constexpr double kRealRoots[] = {-0.97, 0.96, -0.6};
  const std::size_t pairs = d / 2;
  std::vector<double> angles(pairs * p);
  for (std::size_t k = 0; k < angles.size(); ++k) {
    angles[k] = (static_cast<double>(k) + 0.5 + uniform(rng, -0.2, 0.2)) * 3.14159265358979 /
                static_cast<double>(angles.size() + 1);
  }
  std::shuffle(angles.begin(), angles.end(), rng);
  // poly[k] is the coefficient of z^(p-k); poly[0] = I.
  std::vector<Mat> poly{Mat(d * d, 0.0)};
  for (std::size_t i = 0; i < d; ++i) poly[0][i * d + i] = 1.0;
  for (std::size_t f = 0; f < p; ++f) {
    const std::vector<double> mine(angles.begin() + static_cast<std::ptrdiff_t>(f * pairs),
                                   angles.begin() + static_cast<std::ptrdiff_t>((f + 1) * pairs));
    const Mat b = oscillator(rng, d, mine, kRealRoots[f]);
    std::vector<Mat> next(poly.size() + 1, Mat(d * d, 0.0));
    for (std::size_t k = 0; k < poly.size(); ++k) {
      const Mat pb = matmul(poly[k], b, d);
      for (std::size_t e = 0; e < d * d; ++e) {
        next[k][e] += poly[k][e];
        next[k + 1][e] -= pb[e];
      }
    }
    poly = std::move(next);
  }
  VarProcess v{d, p, {}, testing::random_values(rng, d, -1.0, 1.0), testing::random_values(rng, p * d, -10.0, 10.0)};
  for (std::size_t lag = 1; lag <= p; ++lag) {
    Mat a = poly[lag];
    for (auto& x : a) x = -x;
    v.lags.push_back(std::move(a));
  }
  for (std::size_t now = p; now < t; ++now) {
    const auto y = step(v, v.series, now);
    v.series.insert(v.series.end(), y.begin(), y.end());
  }
  return v;
}

}  // namespace

TEST_CASE("naive mean examples") {
  CHECK(naive_predict({3, 5, 7}, 1, 3) == std::vector<double>{5});
  CHECK(naive_predict({3, 5, 7}, 1, 1) == std::vector<double>{7});
  CHECK(naive_predict({1, 2, 3, 4, 5, 6}, 2, 2) == std::vector<double>{4, 5});
  CHECK_THROWS_AS(naive_predict({3, 5, 7}, 1, 4), Error);
  CHECK_THROWS_AS(naive_predict({3, 5, 7}, 1, 0), Error);
  CHECK_THROWS_AS(naive_predict({3, 5, 7}, 2, 1), Error);
}

TEST_CASE("naive mean matches a loop and is translation equivariant") {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t t = 20, slice = 16, w = 1 + rng() % t;
    const auto h = testing::random_values(rng, t * slice, -10, 10);
    const auto pred = naive_predict(h, slice, w);
    for (std::size_t i = 0; i < slice; ++i) {
      double acc = 0.0;
      for (std::size_t s = t - w; s < t; ++s) acc += h[s * slice + i];
      CHECK(std::abs(pred[i] - acc / static_cast<double>(w)) <= 1e-12);
    }
    const double c = uniform(rng, -50, 50);
    auto shifted = h;
    for (auto& v : shifted) v += c;
    const auto moved = naive_predict(shifted, slice, w);
    for (std::size_t i = 0; i < slice; ++i) CHECK(moved[i] == doctest::Approx(pred[i] + c).epsilon(1e-12));
  }
}

TEST_CASE("var recovers a scalar AR(1)") {
  std::vector<double> s{16.0};
  for (int i = 0; i < 40; ++i) s.push_back(0.5 * s.back());
  // Keep the signal well above roundoff.
  s.resize(20);
  const auto m = var_fit(s, 1, 1);
  CHECK(m.fitted());
  CHECK(m.coefficients(1)[0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(std::abs(m.intercept()[0]) < 1e-6);
  CHECK(var_predict(m, {4.0})[0] == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("var recovers coupled generators") {
  VarProcess v{2, 1, {{0.6, -0.5, 0.5, 0.6}}, {0.3, -0.2}, {1.0, 2.0}};
  for (std::size_t now = 1; now < 40; ++now) {
    const auto y = step(v, v.series, now);
    v.series.insert(v.series.end(), y.begin(), y.end());
  }
  const auto m = var_fit(v.series, 2, 1);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(m.coefficients(1)[i] - v.lags[0][i]) < 1e-6);

  for (std::uint64_t seed : {77u, 78u, 79u, 80u, 81u}) {
  std::mt19937_64 rng(seed);
  for (std::size_t d = 1; d <= 6; ++d) {
    for (std::size_t p = 1; p <= 3; ++p) {
      const std::size_t t = 400;
      const auto proc = random_process(rng, d, p, t);
      const auto fit = var_fit(proc.series, d, p);
      double worst = 0.0;
      for (std::size_t lag = 1; lag <= p; ++lag)
        for (std::size_t i = 0; i < d * d; ++i)
          worst = std::max(worst, std::abs(fit.coefficients(lag)[i] - proc.lags[lag - 1][i]));
      for (std::size_t i = 0; i < d; ++i) worst = std::max(worst, std::abs(fit.intercept()[i] - proc.intercept[i]));
      CAPTURE(d);
      CAPTURE(p);
      CHECK(worst < 1e-6);

      const std::vector<double> recent(proc.series.end() - static_cast<std::ptrdiff_t>(p * d), proc.series.end());
      auto extended = proc.series;
      const auto next = step(proc, [&] {
        extended.resize(extended.size() + d);
        return extended;
      }(), t);
      const auto pred = var_predict(fit, recent);
      for (std::size_t i = 0; i < d; ++i) CHECK(std::abs(pred[i] - next[i]) < 1e-6);
    }
  }
  }
}

TEST_CASE("var degenerate and invalid inputs") {
  const std::vector<double> flat(60, 7.5);
  const auto m = var_fit(flat, 2, 3);
  const auto pred = var_predict(m, std::vector<double>(6, 7.5));
  CHECK(pred[0] == doctest::Approx(7.5).epsilon(1e-6));
  CHECK(pred[1] == doctest::Approx(7.5).epsilon(1e-6));

  const auto c = VarModel::from_coefficients({{0, 0, 0, 0}}, {1.5, -2.0});
  CHECK(var_predict(c, {9, 9}) == std::vector<double>{1.5, -2.0});

  // d = 2, p = 2 needs 2 + 4 + 1 = 7 observations.
  CHECK_THROWS_AS(var_fit(std::vector<double>(12, 1.0), 2, 2), Error);
  CHECK_NOTHROW(var_fit(std::vector<double>(14, 1.0), 2, 2));
  CHECK_THROWS_AS(var_fit(std::vector<double>(13, 1.0), 2, 2), Error);
  CHECK_THROWS_AS(var_predict(VarModel{}, {1.0}), Error);
  CHECK_THROWS_AS(var_predict(m, {1.0}), Error);
  CHECK_THROWS_AS(VarModel::from_coefficients({{0, 0, 0}}, {1.0, 2.0}), Error);
}

TEST_CASE("var fitting is deterministic") {
  std::mt19937_64 rng(5);
  const auto s = testing::random_values(rng, 4 * 80);
  const auto a = var_fit(s, 4, 3);
  const auto b = var_fit(s, 4, 3);
  for (std::size_t lag = 1; lag <= 3; ++lag) CHECK(a.coefficients(lag) == b.coefficients(lag));
  CHECK(a.intercept() == b.intercept());
}
