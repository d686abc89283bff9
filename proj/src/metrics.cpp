#include "captime/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace captime::metrics {

namespace {

void check_pair(std::span<const double> y, std::span<const double> yhat, const char* what) {
  if (y.size() != yhat.size()) {
    throw std::invalid_argument(std::string(what) + ": length mismatch (" + std::to_string(y.size()) + " vs " +
                                std::to_string(yhat.size()) + ")");
  }
  if (y.empty()) throw std::invalid_argument(std::string(what) + ": empty input");
}

double mean(std::span<const double> x) { return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size()); }

}  // namespace

double mse(std::span<const double> y, std::span<const double> yhat) {
  check_pair(y, yhat, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return s / static_cast<double>(y.size());
}

double mae(std::span<const double> y, std::span<const double> yhat) {
  check_pair(y, yhat, "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(y[i] - yhat[i]);
  return s / static_cast<double>(y.size());
}

double smape(std::span<const double> y, std::span<const double> yhat) {
  check_pair(y, yhat, "smape");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double den = std::abs(y[i]) + std::abs(yhat[i]);
    if (den > 0.0) s += std::abs(y[i] - yhat[i]) / den;
  }
  return 200.0 * s / static_cast<double>(y.size());
}

double mase(std::span<const double> y, std::span<const double> yhat, std::span<const double> insample, std::size_t m) {
  check_pair(y, yhat, "mase");
  if (m == 0) throw std::invalid_argument("mase: seasonal period must be >= 1");
  if (insample.size() <= m) throw std::invalid_argument("mase: in-sample series must be longer than the period");
  double den = 0.0;
  for (std::size_t t = m; t < insample.size(); ++t) den += std::abs(insample[t] - insample[t - m]);
  den /= static_cast<double>(insample.size() - m);
  if (den == 0.0) throw std::domain_error("mase: in-sample seasonal differences are all zero");
  return mae(y, yhat) / den;
}

double owa(double smape_v, double mase_v, double smape_naive2, double mase_naive2) {
  if (!(smape_naive2 > 0.0) || !(mase_naive2 > 0.0)) throw std::domain_error("owa: Naive2 baselines must be positive");
  return 0.5 * (smape_v / smape_naive2 + mase_v / mase_naive2);
}

double acf(std::span<const double> x, std::size_t lag) {
  if (lag >= x.size()) throw std::invalid_argument("acf: lag must be smaller than the series");
  const double mu = mean(x);
  double num = 0.0, den = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) den += (x[t] - mu) * (x[t] - mu);
  for (std::size_t t = lag; t < x.size(); ++t) num += (x[t] - mu) * (x[t - lag] - mu);
  return den == 0.0 ? 0.0 : num / den;
}

bool seasonal(std::span<const double> insample, std::size_t m) {
  if (m <= 1 || insample.size() < 3 * m) return false;
  double s = 0.0;
  for (std::size_t k = 1; k < m; ++k) {
    const double r = acf(insample, k);
    s += r * r;
  }
  const double limit = 1.645 * std::sqrt((1.0 + 2.0 * s) / static_cast<double>(insample.size()));
  return std::abs(acf(insample, m)) > limit;
}

Decomposition seasonal_indices(std::span<const double> x, std::size_t m) {
  const std::size_t n = x.size();
  if (m <= 1 || n < 2 * m) throw std::invalid_argument("seasonal_indices: need m >= 2 and two full periods");
  Decomposition d;
  d.multiplicative = std::all_of(x.begin(), x.end(), [](double v) { return v > 0.0; });
  // Centered moving average: weights 1/m, halved at both ends for even m.
  const std::size_t half = m / 2;
  std::vector<double> sums(m, 0.0);
  std::vector<std::size_t> counts(m, 0);
  for (std::size_t t = half; t + half < n; ++t) {
    double trend = 0.0;
    if (m % 2 == 1) {
      for (std::size_t k = t - half; k <= t + half; ++k) trend += x[k];
      trend /= static_cast<double>(m);
    } else {
      trend = 0.5 * (x[t - half] + x[t + half]);
      for (std::size_t k = t - half + 1; k < t + half; ++k) trend += x[k];
      trend /= static_cast<double>(m);
    }
    sums[t % m] += d.multiplicative ? x[t] / trend : x[t] - trend;
    ++counts[t % m];
  }
  d.index.resize(m);
  for (std::size_t i = 0; i < m; ++i) d.index[i] = sums[i] / static_cast<double>(counts[i]);
  const double avg = mean(d.index);
  for (double& v : d.index) v = d.multiplicative ? v / avg : v - avg;
  return d;
}

std::vector<double> naive2(std::span<const double> insample, std::size_t horizon, std::size_t m) {
  if (insample.empty()) throw std::invalid_argument("naive2: empty in-sample series");
  const std::size_t n = insample.size();
  if (!seasonal(insample, m)) return std::vector<double>(horizon, insample.back());
  const Decomposition d = seasonal_indices(insample, m);
  const double last_adj =
      d.multiplicative ? insample.back() / d.index[(n - 1) % m] : insample.back() - d.index[(n - 1) % m];
  std::vector<double> out(horizon);
  for (std::size_t h = 0; h < horizon; ++h) {
    const double si = d.index[(n + h) % m];
    out[h] = d.multiplicative ? last_adj * si : last_adj + si;
  }
  return out;
}

}  // namespace captime::metrics
