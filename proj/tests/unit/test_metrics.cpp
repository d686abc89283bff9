#include <cmath>
#include <numbers>
#include <random>

#include "captime/metrics.hpp"
#include "doctest.h"

using namespace captime;
namespace mt = captime::metrics;

namespace {

std::vector<double> seasonal_series(std::size_t n, std::size_t m, double level, double amp) {
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t) x[t] = level + amp * std::sin(2.0 * std::numbers::pi * static_cast<double>(t % m) / m);
  return x;
}

}  // namespace

TEST_CASE("smape examples") {
  const std::vector<double> y{100}, f{110};
  CHECK(mt::smape(y, f) == doctest::Approx(200.0 * 10.0 / 210.0).epsilon(1e-14));
  CHECK(mt::smape(y, f) == doctest::Approx(9.5238).epsilon(1e-4));
  CHECK(mt::smape(f, f) == 0.0);
  CHECK(mt::smape(std::vector<double>{0}, std::vector<double>{0}) == 0.0);
  CHECK(mt::smape(std::vector<double>{0, 1}, std::vector<double>{0, 3}) == doctest::Approx(100.0 * 2.0 / 4.0));
  CHECK_THROWS(mt::smape(y, std::vector<double>{1, 2}));
}

TEST_CASE("mse and mae") {
  const std::vector<double> y{1, 2, 3}, f{2, 2, 1};
  CHECK(mt::mse(y, f) == doctest::Approx(5.0 / 3.0));
  CHECK(mt::mae(y, f) == doctest::Approx(1.0));
  CHECK(mt::mse(y, y) == 0.0);
}

TEST_CASE("mase") {
  const std::size_t m = 4;
  const auto insample = seasonal_series(40, m, 5.0, 1.0);
  std::vector<double> noisy = insample;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 0.2);
  for (double& v : noisy) v += g(rng);
  // Seasonal-naive continuation of the noisy history against the clean
  // future: the denominator is the noise scale, the numerator stays small.
  std::vector<double> y(8), f(8);
  for (std::size_t h = 0; h < 8; ++h) {
    y[h] = insample[(40 + h) % m];
    f[h] = noisy[40 - m + h % m];
  }
  const double v = mt::mase(y, f, noisy, m);
  CHECK(v > 0.0);
  CHECK(v < 1.0);
  CHECK(mt::mase(y, y, noisy, m) == 0.0);
  for (double c : {0.001, 3.0, 1e4}) {
    std::vector<double> ys = y, fs = f, is = noisy;
    for (double& x : ys) x *= c;
    for (double& x : fs) x *= c;
    for (double& x : is) x *= c;
    CHECK(mt::mase(ys, fs, is, m) == doctest::Approx(v).epsilon(1e-12));
  }
  CHECK_THROWS(mt::mase(y, f, insample, m));  // exact seasonal pattern: zero denominator
  CHECK_THROWS(mt::mase(y, f, std::vector<double>(10, 2.0), 1));
}

TEST_CASE("owa") {
  CHECK(mt::owa(12.0, 1.5, 12.0, 1.5) == 1.0);
  CHECK(mt::owa(6.0, 0.75, 12.0, 1.5) == 0.5);
  CHECK(mt::owa(6.0, 1.5, 12.0, 1.5) == 0.75);
  CHECK_THROWS(mt::owa(1.0, 1.0, 0.0, 1.0));
  CHECK_THROWS(mt::owa(1.0, 1.0, 1.0, 0.0));
}

TEST_CASE("naive2 reduces to the last value without seasonality") {
  const std::vector<double> x{3, 1, 4, 1, 5, 9, 2, 6};
  for (double v : mt::naive2(x, 5, 1)) CHECK(v == 6.0);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> noise(60);
  for (double& v : noise) v = 10.0 + g(rng);
  CHECK(!mt::seasonal(noise, 12));
  for (double v : mt::naive2(noise, 4, 12)) CHECK(v == noise.back());
}

TEST_CASE("naive2 reseasonalizes a seasonal series") {
  const std::size_t m = 6;
  const auto x = seasonal_series(60, m, 10.0, 3.0);
  CHECK(mt::seasonal(x, m));
  const auto d = mt::seasonal_indices(x, m);
  CHECK(d.multiplicative);
  REQUIRE(d.index.size() == m);
  double mean = 0.0;
  for (double v : d.index) mean += v / m;
  CHECK(mean == doctest::Approx(1.0).epsilon(1e-9));
  // A pure seasonal pattern over a constant level is continued exactly.
  const auto f = mt::naive2(x, 12, m);
  for (std::size_t h = 0; h < 12; ++h) CHECK(f[h] == doctest::Approx(x[(60 + h) % m]).epsilon(1e-9));

  // With negative values the decomposition turns additive.
  const auto xa = seasonal_series(60, m, -1.0, 3.0);
  CHECK(!mt::seasonal_indices(xa, m).multiplicative);
  const auto fa = mt::naive2(xa, 6, m);
  for (std::size_t h = 0; h < 6; ++h) CHECK(fa[h] == doctest::Approx(xa[(60 + h) % m]).epsilon(1e-9));
}

TEST_CASE("autocorrelation") {
  const std::vector<double> x{1, -1, 1, -1, 1, -1, 1, -1};
  CHECK(mt::acf(x, 1) == doctest::Approx(-7.0 / 8.0));
  CHECK(mt::acf(x, 2) == doctest::Approx(6.0 / 8.0));
}
