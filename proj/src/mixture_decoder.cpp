#include "captime/mixture_decoder.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace captime::mixture_decoder {

namespace {

std::string head(std::size_t m) { return "decoder.head" + std::to_string(m); }

}  // namespace

void init(ParameterStore& store, const ModelConfig& cfg, Rng& rng) {
  const std::size_t d = cfg.d_model();
  const std::size_t out = cfg.probabilistic() ? 3 * cfg.patch_len : cfg.patch_len;
  const double std = 1.0 / std::sqrt(static_cast<double>(d));
  add_linear(store, "decoder.gate", d, cfg.experts, std, true, rng);
  for (std::size_t m = 0; m < cfg.experts; ++m) add_linear(store, head(m), d, out, std, true, rng);
}

Tensor top_k_mask(const Tensor& probs, std::size_t k) {
  const std::size_t n = probs.rows(), m = probs.cols();
  if (k < 1 || k > m) {
    throw std::invalid_argument("top-K: K=" + std::to_string(k) + " outside [1, " + std::to_string(m) + "]");
  }
  Tensor mask = Tensor::matrix(n, m);
  std::vector<std::size_t> idx(m);
  for (std::size_t i = 0; i < n; ++i) {
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return probs(i, a) > probs(i, b); });
    for (std::size_t j = 0; j < k; ++j) mask(i, idx[j]) = 1.0;
  }
  return mask;
}

Routing route_logits(Var logits, std::size_t k) {
  Routing r;
  r.probs = softmax(logits);
  r.mask = top_k_mask(r.probs.value(), k);
  r.weights = mul(r.probs, logits.graph->constant(r.mask));
  return r;
}

Routing route(const Binder& b, const ModelConfig& cfg, Var gate_input) {
  return route_logits(linear(b, "decoder.gate", gate_input), cfg.top_k);
}

DecodedParams apply_links(Var raw, std::size_t patch_len) {
  DecodedParams p;
  p.raw = raw;
  if (raw.cols() == patch_len) {
    p.mu = raw;
    return p;
  }
  if (raw.cols() != 3 * patch_len) throw ShapeError("decoder: raw width " + std::to_string(raw.cols()));
  p.mu = slice_cols(raw, 0, patch_len);
  p.sigma = add_scalar(softplus(slice_cols(raw, patch_len, 2 * patch_len)), kSigmaFloor);
  p.nu = add_scalar(softplus(slice_cols(raw, 2 * patch_len, 3 * patch_len)), 1.0);
  return p;
}

DecodedParams decode(const Binder& b, const ModelConfig& cfg, Var z, const Routing& r) {
  if (z.rows() != r.mask.rows()) throw ShapeError("decoder: routing rows do not match tokens");
  Var combined{};
  bool any = false;
  for (std::size_t m = 0; m < cfg.experts; ++m) {
    bool used = false;
    for (std::size_t i = 0; i < r.mask.rows() && !used; ++i) used = r.mask(i, m) != 0.0;
    if (!used) continue;  // unselected everywhere: the head is not evaluated
    Var term = mul(linear(b, head(m), z), slice_cols(r.weights, m, m + 1));
    combined = any ? add(combined, term) : term;
    any = true;
  }
  return apply_links(combined, cfg.patch_len);
}

Var nll_loss(const DecodedParams& p, Var targets) {
  if (!p.probabilistic()) throw std::invalid_argument("nll_loss: point-forecast heads carry no distribution");
  if (targets.shape() != p.mu.shape()) {
    throw ShapeError("nll_loss: targets " + shape_str(targets.shape()) + " vs params " + shape_str(p.mu.shape()));
  }
  return neg(reduce_mean(student_t::logpdf(targets, p.mu, p.sigma, p.nu)));
}

Var mse_loss(Var mu, Var targets) {
  if (targets.shape() != mu.shape()) throw ShapeError("mse_loss: shape mismatch");
  return reduce_mean(square(sub(mu, targets)));
}

RoutingStats routing_stats(const Tensor& probs, const Tensor& mask) {
  const std::size_t n = probs.rows(), m = probs.cols();
  if (n == 0) throw std::invalid_argument("routing_stats: no tokens");
  RoutingStats s{std::vector<double>(m, 0.0), std::vector<double>(m, 0.0)};
  double slots = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      s.fraction[j] += mask(i, j);
      slots += mask(i, j);
      s.mean_prob[j] += probs(i, j);
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    s.fraction[j] /= slots;
    s.mean_prob[j] /= static_cast<double>(n);
  }
  return s;
}

Var load_balance_loss(Var probs, const Tensor& mask, double alpha) {
  const RoutingStats st = routing_stats(probs.value(), mask);
  const std::size_t m = probs.cols();
  Var f = probs.graph->constant(Tensor::matrix(1, m, st.fraction));
  return scale(reduce_sum(mul(mean_rows(probs), f)), alpha * static_cast<double>(m));
}

double load_balance_value(const Tensor& probs, const Tensor& mask, double alpha) {
  const RoutingStats st = routing_stats(probs, mask);
  double s = 0.0;
  for (std::size_t j = 0; j < st.fraction.size(); ++j) s += st.fraction[j] * st.mean_prob[j];
  return alpha * static_cast<double>(st.fraction.size()) * s;
}

Tensor point_forecast(const PatchDistParams& p) { return p.mu; }

Tensor quantile(const PatchDistParams& p, double q) {
  if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("quantile: q must lie in (0, 1)");
  Tensor out(p.mu.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = student_t::quantile(q, p.mu[i], p.sigma[i], p.nu[i]);
  return out;
}

PatchDistParams to_params(const DecodedParams& p) {
  PatchDistParams out;
  out.mu = p.mu.value();
  if (p.probabilistic()) {
    out.sigma = p.sigma.value();
    out.nu = p.nu.value();
  }
  return out;
}

}  // namespace captime::mixture_decoder
