#pragma once

// Point-forecast error metrics and the Naive2 reference forecaster used to
// normalize OWA.

#include <cstddef>
#include <span>
#include <vector>

namespace captime::metrics {

double mse(std::span<const double> y, std::span<const double> yhat);
double mae(std::span<const double> y, std::span<const double> yhat);

/// (200 / n) * sum |y - yhat| / (|y| + |yhat|), in percent. Terms whose
/// denominator is zero contribute 0.
double smape(std::span<const double> y, std::span<const double> yhat);

/// mean |y - yhat| divided by the in-sample mean absolute seasonal
/// difference at lag m. Throws when that denominator is zero.
double mase(std::span<const double> y, std::span<const double> yhat, std::span<const double> insample, std::size_t m);

/// 0.5 * (smape / smape_naive2 + mase / mase_naive2).
double owa(double smape, double mase, double smape_naive2, double mase_naive2);

double acf(std::span<const double> x, std::size_t lag);

/// 90% one-sided autocorrelation test at lag m:
/// |r_m| > 1.645 * sqrt((1 + 2 sum_{k<m} r_k^2) / n). Requires n >= 3m.
bool seasonal(std::span<const double> insample, std::size_t m);

/// Seasonal indices from classical decomposition (centered moving average
/// trend); multiplicative when every value is positive, additive otherwise.
/// Index i applies to positions t with t mod m == i.
struct Decomposition {
  std::vector<double> index;
  bool multiplicative = true;
};
Decomposition seasonal_indices(std::span<const double> insample, std::size_t m);

/// Naive forecast of the seasonally adjusted series, reseasonalized; plain
/// naive when m <= 1 or the seasonality test fails.
std::vector<double> naive2(std::span<const double> insample, std::size_t horizon, std::size_t m);

}  // namespace captime::metrics
