#pragma once

// Sparse mixture of Student's t expert heads with a softmax gate.
//
// Tensor names:
//   decoder.gate.{weight,bias}      D x M
//   decoder.head{m}.{weight,bias}   D x 3 L_p   (D x L_p for point forecasts)
//
// Head outputs are combined in raw space, h_i = sum_m g_im Head_m(Z_i), and
// the links are applied afterwards: mu = h_mu, sigma = softplus(h_sigma) +
// 1e-4, nu = 1 + softplus(h_nu). Gate weights are the softmax probabilities
// of the selected experts, not renormalized.

#include <cstddef>
#include <vector>

#include "captime/config.hpp"
#include "captime/layers.hpp"
#include "captime/student_t.hpp"

namespace captime::mixture_decoder {

inline constexpr double kSigmaFloor = 1e-4;

void init(ParameterStore& store, const ModelConfig& cfg, Rng& rng);

/// 0/1 mask (n x M) keeping the K largest entries per row; ties go to the
/// lower expert index.
Tensor top_k_mask(const Tensor& probs, std::size_t k);

struct Routing {
  Var probs;    // s: n x M softmax probabilities
  Tensor mask;  // n x M, exactly K ones per row
  Var weights;  // g = s * mask
};

/// Routing from an arbitrary gate input (A, or Z under a2/a3).
Routing route(const Binder& b, const ModelConfig& cfg, Var gate_input);
/// Routing from raw gate logits.
Routing route_logits(Var logits, std::size_t k);

struct DecodedParams {
  Var mu;     // n x L_p
  Var sigma;  // absent (graph == nullptr) for point forecasts
  Var nu;
  Var raw;    // combined head outputs before the links

  bool probabilistic() const { return sigma.graph != nullptr; }
};

/// Combines head outputs in raw space and applies the links.
DecodedParams decode(const Binder& b, const ModelConfig& cfg, Var z, const Routing& r);
/// Link functions applied to a combined raw output (n x 3 L_p).
DecodedParams apply_links(Var raw, std::size_t patch_len);

/// Mean negative log-likelihood over every element.
Var nll_loss(const DecodedParams& p, Var targets);
/// Mean squared error of mu.
Var mse_loss(Var mu, Var targets);

/// Per-expert routing fraction f_m = (assignments to m) / (n K) and mean
/// probability P_m from stacked routing over all tokens of a batch.
struct RoutingStats {
  std::vector<double> fraction;
  std::vector<double> mean_prob;
};
RoutingStats routing_stats(const Tensor& probs, const Tensor& mask);

/// alpha * M * sum_m f_m P_m. f is a constant; gradient flows through P.
Var load_balance_loss(Var probs, const Tensor& mask, double alpha);
double load_balance_value(const Tensor& probs, const Tensor& mask, double alpha);

/// The t mode, mu.
Tensor point_forecast(const PatchDistParams& p);
Tensor quantile(const PatchDistParams& p, double q);

PatchDistParams to_params(const DecodedParams& p);

}  // namespace captime::mixture_decoder
