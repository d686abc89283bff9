#include "captime/inference.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "captime/series_prep.hpp"
#include "captime/student_t.hpp"

namespace captime {

ForecastResult forecast(const Model& m, const ForecastRequest& req) {
  const ModelConfig& cfg = m.cfg;
  const std::size_t L = cfg.patch_len;
  if (req.horizon == 0) throw std::invalid_argument("forecast: horizon must be >= 1");
  if (req.lookback.size() < 2) throw std::invalid_argument("forecast: lookback needs at least 2 values");
  if (!cfg.probabilistic() && !req.quantiles.empty()) {
    throw std::invalid_argument("forecast: point-forecast model has no predictive distribution for quantiles");
  }
  const std::size_t steps = (req.horizon + L - 1) / L;
  const std::size_t needed = patch_count(req.lookback.size() + (steps - 1) * L, L);
  if (needed > cfg.backbone.max_positions) {
    throw std::length_error("forecast: horizon " + std::to_string(req.horizon) + " needs " + std::to_string(needed) +
                            " tokens, more than max_positions " + std::to_string(cfg.backbone.max_positions));
  }
  const ChannelStats stats = channel_stats(req.lookback);
  std::vector<double> series = normalize_channel(req.lookback, stats);
  // No text at all reads as the pad prompt.
  TextPrompt prompt = req.prompt;
  if (prompt.token_ids.empty()) prompt.token_ids = {Vocabulary::kPad};
  const Tensor text = embed(prompt, m.token_table());

  ForecastResult out;
  out.steps = steps;
  std::vector<double> mu, sigma, nu;
  for (std::size_t s = 0; s < steps; ++s) {
    const PatchSet ps = patchify(series, L);
    Graph g;
    Binder b(g, static_cast<const ParameterStore&>(m.store));
    ForwardResult r = forward(b, cfg, ps.patches, text);
    const std::size_t last = ps.count() - 1;
    const Tensor& mu_t = r.params.mu.value();
    for (std::size_t j = 0; j < L; ++j) {
      mu.push_back(mu_t(last, j));
      series.push_back(mu_t(last, j));
      if (r.params.probabilistic()) {
        sigma.push_back(r.params.sigma.value()(last, j));
        nu.push_back(r.params.nu.value()(last, j));
      }
    }
    if (req.keep_attention && r.text) out.attention.push_back(r.text->attention.value());
  }

  mu.resize(req.horizon);
  out.mu = denormalize_channel(mu, stats);
  out.point = out.mu;
  if (!sigma.empty()) {
    sigma.resize(req.horizon);
    nu.resize(req.horizon);
    for (double& v : sigma) v *= stats.std;
    out.sigma = std::move(sigma);
    out.nu = std::move(nu);
    for (double q : req.quantiles) {
      std::vector<double> path(req.horizon);
      for (std::size_t t = 0; t < req.horizon; ++t) path[t] = student_t::quantile(q, out.mu[t], out.sigma[t], out.nu[t]);
      out.quantiles[q] = std::move(path);
    }
  }
  return out;
}

ForecastResult forecast_window(const Model& m, const Corpus& c, const Window& w, std::size_t horizon,
                               const std::vector<double>& quantiles) {
  const auto& ch = c.channels.at(w.channel);
  ForecastRequest req;
  req.lookback.assign(ch.begin() + static_cast<std::ptrdiff_t>(w.start),
                      ch.begin() + static_cast<std::ptrdiff_t>(w.start + w.lookback));
  Window ctx = w;
  ctx.context = w.lookback;
  req.prompt = window_prompt(c, ctx, m.vocab, m.cfg.text_max_len);
  req.horizon = horizon;
  req.quantiles = quantiles;
  return forecast(m, req);
}

HorizonMetrics score(const Corpus& c, const std::vector<Window>& windows, std::size_t horizon, const Predictor& predict) {
  if (windows.empty()) throw std::invalid_argument("evaluate: no windows in the split for horizon " + std::to_string(horizon));
  HorizonMetrics h;
  h.horizon = horizon;
  h.windows = windows.size();
  double se = 0.0, ae = 0.0, nll = 0.0;
  std::size_t hit80 = 0, hit95 = 0, count = 0;
  bool probabilistic = true;
  for (const Window& w : windows) {
    const ForecastResult r = predict(w);
    if (r.point.size() != horizon) throw std::logic_error("predictor returned a path of the wrong length");
    const auto& ch = c.channels.at(w.channel);
    probabilistic = probabilistic && !r.sigma.empty();
    for (std::size_t t = 0; t < horizon; ++t) {
      const double y = ch.at(w.start + w.lookback + t);
      const double e = r.point[t] - y;
      se += e * e;
      ae += std::abs(e);
      ++count;
      if (!probabilistic) continue;
      nll -= student_t::logpdf(y, r.mu[t], r.sigma[t], r.nu[t]);
      const double lo80 = student_t::quantile(0.1, r.mu[t], r.sigma[t], r.nu[t]);
      const double hi80 = 2.0 * r.mu[t] - lo80;
      const double lo95 = student_t::quantile(0.025, r.mu[t], r.sigma[t], r.nu[t]);
      const double hi95 = 2.0 * r.mu[t] - lo95;
      hit80 += (y >= lo80 && y <= hi80);
      hit95 += (y >= lo95 && y <= hi95);
    }
  }
  const double n = static_cast<double>(count);
  h.mse = se / n;
  h.mae = ae / n;
  if (probabilistic) {
    h.nll = nll / n;
    h.coverage80 = static_cast<double>(hit80) / n;
    h.coverage95 = static_cast<double>(hit95) / n;
  }
  return h;
}

std::vector<HorizonMetrics> evaluate(const Model& m, const Corpus& c, Range range, const std::vector<std::size_t>& horizons,
                                     const EvalOptions& opts) {
  if (horizons.empty()) throw std::invalid_argument("evaluate: no horizons requested");
  std::vector<HorizonMetrics> out;
  const std::size_t stride = opts.stride == 0 ? m.cfg.patch_len : opts.stride;
  for (std::size_t f : horizons) {
    const auto windows = make_windows(c, range, m.cfg.lookback, f, stride, opts.align);
    out.push_back(score(c, windows, f, [&](const Window& w) { return forecast_window(m, c, w, f); }));
  }
  return out;
}

nlohmann::json forecast_to_json(const ForecastResult& r) {
  nlohmann::json q = nlohmann::json::object();
  for (const auto& [level, path] : r.quantiles) {
    char key[32];
    std::snprintf(key, sizeof key, "%g", level);
    q[key] = path;
  }
  return {{"point", r.point}, {"mu", r.mu}, {"sigma", r.sigma}, {"nu", r.nu}, {"quantiles", q}};
}

void write_forecast_csv(const std::filesystem::path& path, const ForecastResult& r) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "step,point,mu,sigma,nu";
  for (const auto& [level, _] : r.quantiles) out << ",q" << level;
  out << '\n';
  for (std::size_t t = 0; t < r.point.size(); ++t) {
    out << t + 1 << ',' << r.point[t] << ',' << r.mu[t] << ',';
    if (!r.sigma.empty()) out << r.sigma[t];
    out << ',';
    if (!r.nu.empty()) out << r.nu[t];
    for (const auto& [_, p] : r.quantiles) out << ',' << p[t];
    out << '\n';
  }
}

void write_attention_csv(const std::filesystem::path& path, const Tensor& attention, const TextPrompt& prompt,
                         const Vocabulary& vocab) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "token";
  for (std::size_t j = 0; j < attention.cols(); ++j) {
    const std::string& tok = j < prompt.size() ? vocab.token(prompt.token_ids[j]) : std::string("?");
    out << ',' << j << ':' << tok;
  }
  out << '\n';
  for (std::size_t i = 0; i < attention.rows(); ++i) {
    out << i;
    for (std::size_t j = 0; j < attention.cols(); ++j) out << ',' << attention(i, j);
    out << '\n';
  }
}

nlohmann::json metrics_to_json(const HorizonMetrics& h) {
  nlohmann::json j{{"horizon", h.horizon}, {"windows", h.windows}, {"mse", h.mse}, {"mae", h.mae}};
  if (h.nll) j["nll"] = *h.nll;
  if (h.coverage80) j["coverage80"] = *h.coverage80;
  if (h.coverage95) j["coverage95"] = *h.coverage95;
  return j;
}

}  // namespace captime
