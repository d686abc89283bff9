#include <cmath>
#include <random>

#include "captime/inference.hpp"
#include "captime/trainer.hpp"
#include "doctest.h"

using namespace captime;

namespace {

Model small_model() {
  return init_model(tiny_config(9), Vocabulary::from_tokens({"<pad>", "<unk>", "<query>", "<sep>", "demand"}));
}

ForecastRequest request(std::size_t horizon) {
  ForecastRequest r;
  for (int t = 0; t < 8; ++t) r.lookback.push_back(2.0 + std::sin(0.8 * t));
  r.horizon = horizon;
  return r;
}

Corpus noise_corpus(std::size_t n, std::uint64_t seed) {
  Corpus c;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  c.channel_names = {"x"};
  c.channels.resize(1);
  for (std::size_t t = 0; t < n; ++t) {
    c.timestamps.push_back(static_cast<double>(t));
    c.channels[0].push_back(g(rng));
  }
  return c;
}

ForecastResult constant_gaussian(std::size_t horizon) {
  ForecastResult r;
  r.point = r.mu = std::vector<double>(horizon, 0.0);
  r.sigma = std::vector<double>(horizon, 1.0);
  r.nu = std::vector<double>(horizon, 1e7);
  return r;
}

}  // namespace

TEST_CASE("generation step count and truncation") {
  const Model m = small_model();
  const ForecastResult a = forecast(m, request(4));
  CHECK(a.steps == 1);
  CHECK(a.point.size() == 4);
  const ForecastResult b = forecast(m, request(5));
  CHECK(b.steps == 2);
  CHECK(b.point.size() == 5);
  CHECK(b.sigma.size() == 5);
  CHECK(b.nu.size() == 5);
  for (std::size_t f = 1; f <= 8; ++f) CHECK(forecast(m, request(f)).point.size() == f);
}

TEST_CASE("generation loop replays bitwise") {
  const Model m = small_model();
  const ForecastResult once = forecast(m, request(4));
  const ForecastResult twice = forecast(m, request(8));
  CHECK(forecast(m, request(8)).point == twice.point);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(twice.point[i] == once.point[i]);
    CHECK(twice.sigma[i] == once.sigma[i]);
  }
}

TEST_CASE("horizon errors") {
  const Model m = small_model();
  CHECK_THROWS(forecast(m, request(0)));
  CHECK_THROWS(forecast(m, request(40)));
}

TEST_CASE("quantile paths are ordered") {
  const Model m = small_model();
  ForecastRequest r = request(8);
  r.quantiles = {0.1, 0.5, 0.9};
  const ForecastResult f = forecast(m, r);
  REQUIRE(f.quantiles.size() == 3);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(f.quantiles.at(0.1)[i] < f.quantiles.at(0.5)[i]);
    CHECK(f.quantiles.at(0.5)[i] < f.quantiles.at(0.9)[i]);
    CHECK(f.quantiles.at(0.5)[i] == doctest::Approx(f.mu[i]).epsilon(1e-7));
  }
}

TEST_CASE("point forecasts are affine equivariant") {
  const Model m = small_model();
  const ForecastResult base = forecast(m, request(8));
  for (auto [a, b] : {std::pair{3.0, -7.0}, std::pair{0.01, 100.0}, std::pair{250.0, 0.5}}) {
    ForecastRequest r = request(8);
    for (double& v : r.lookback) v = a * v + b;
    const ForecastResult f = forecast(m, r);
    for (std::size_t i = 0; i < 8; ++i) {
      CHECK(std::abs(f.point[i] - (a * base.point[i] + b)) <= 1e-6 * std::max(1.0, std::abs(a * base.point[i] + b)));
      CHECK(f.sigma[i] == doctest::Approx(a * base.sigma[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("scoring oracles") {
  const Corpus c = noise_corpus(20000, 5);
  const auto windows = make_windows(c, {0, c.length()}, 8, 4, 4);
  const std::size_t h = 4;

  const auto oracle = score(c, windows, h, [&](const Window& w) {
    ForecastResult r;
    const auto v = window_values(c, w);
    r.point = r.mu = std::vector<double>(v.begin() + 8, v.end());
    return r;
  });
  CHECK(oracle.mse == 0.0);
  CHECK(oracle.mae == 0.0);
  CHECK(!oracle.coverage80.has_value());

  const auto constant = score(c, windows, h, [&](const Window&) { return constant_gaussian(h); });
  CHECK(std::abs(constant.mse - 1.0) < 0.1);
  REQUIRE(constant.coverage80.has_value());
  CHECK(std::abs(*constant.coverage80 - 0.80) < 0.03);
  CHECK(std::abs(*constant.coverage95 - 0.95) < 0.03);
  CHECK(constant.nll.value() == doctest::Approx(0.5 * std::log(2 * M_PI) + 0.5).epsilon(0.05));
  CHECK(constant.windows == windows.size());
}

TEST_CASE("point-forecast models refuse quantiles") {
  ModelConfig cfg = tiny_config(9);
  cfg.ablation = Ablation::kPointForecast;
  const Model m = init_model(cfg, Vocabulary::from_tokens({"<pad>", "<unk>", "<query>", "<sep>"}));
  const ForecastResult f = forecast(m, request(6));
  CHECK(f.point.size() == 6);
  CHECK(f.sigma.empty());
  ForecastRequest r = request(6);
  r.quantiles = {0.5};
  CHECK_THROWS_AS(forecast(m, r), std::invalid_argument);
}

TEST_CASE("attention maps are kept per step on request") {
  const Model m = small_model();
  ForecastRequest r = request(8);
  r.prompt = tokenize("demand demand", m.vocab, 16);
  r.keep_attention = true;
  const ForecastResult f = forecast(m, r);
  REQUIRE(f.attention.size() == 2);
  CHECK(f.attention[0].rows() == 3);
  CHECK(f.attention[1].rows() == 4);
  CHECK(f.attention[0].cols() == 2);
}

TEST_CASE("evaluate returns one row per horizon") {
  SyntheticSpec s;
  s.length = 400;
  s.period = 8.0;
  s.segment = 16;
  s.seed = 2;
  const Corpus c = generate_synthetic(s).corpus;
  const Model m = small_model();
  const auto rows = evaluate(m, c, {300, 400}, {4, 8});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].horizon == 4);
  CHECK(rows[1].horizon == 8);
  CHECK(rows[0].windows > 0);
  CHECK(rows[0].coverage80.has_value());
  CHECK_THROWS(evaluate(m, c, {390, 395}, {8}));
}
