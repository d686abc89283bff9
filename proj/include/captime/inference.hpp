#pragma once

// Autoregressive forecasting and horizon-wise evaluation.

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "captime/data_io.hpp"
#include "captime/model.hpp"

namespace captime {

struct ForecastRequest {
  std::vector<double> lookback;  // one channel, raw units
  TextPrompt prompt;  // empty reads as the pad prompt
  std::size_t horizon = 0;
  std::vector<double> quantiles;  // rejected by point-forecast models
  bool keep_attention = false;
};

struct ForecastResult {
  std::vector<double> point;  // == mu
  std::vector<double> mu, sigma, nu;  // sigma/nu empty for point forecasts
  std::map<double, std::vector<double>> quantiles;
  std::vector<Tensor> attention;  // one n x N_s map per generation step
  std::size_t steps = 0;
};

/// ceil(F / L_p) forward passes; each appends the mu patch of the last
/// token to the normalized series. Stats come from the original lookback.
ForecastResult forecast(const Model& m, const ForecastRequest& req);

/// Forecast one corpus window (lookback + texts).
ForecastResult forecast_window(const Model& m, const Corpus& c, const Window& w, std::size_t horizon,
                               const std::vector<double>& quantiles = {});

struct HorizonMetrics {
  std::size_t horizon = 0;
  std::size_t windows = 0;
  double mse = 0.0;
  double mae = 0.0;
  std::optional<double> nll;
  std::optional<double> coverage80;
  std::optional<double> coverage95;
};

using Predictor = std::function<ForecastResult(const Window&)>;

/// Scores any predictor on the given windows against the corpus values that
/// follow each lookback. NLL and coverage are reported when the predictor
/// returns sigma and nu.
HorizonMetrics score(const Corpus& c, const std::vector<Window>& windows, std::size_t horizon, const Predictor& predict);

struct EvalOptions {
  std::size_t stride = 0;  // 0: patch_len
  std::size_t align = 0;
};

/// One row per horizon from the same checkpoint.
std::vector<HorizonMetrics> evaluate(const Model& m, const Corpus& c, Range range, const std::vector<std::size_t>& horizons,
                                     const EvalOptions& opts = {});

nlohmann::json forecast_to_json(const ForecastResult& r);
void write_forecast_csv(const std::filesystem::path& path, const ForecastResult& r);
/// Rows: token index; columns: text token.
void write_attention_csv(const std::filesystem::path& path, const Tensor& attention, const TextPrompt& prompt,
                         const Vocabulary& vocab);
nlohmann::json metrics_to_json(const HorizonMetrics& h);

}  // namespace captime
