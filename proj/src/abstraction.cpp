#include "captime/abstraction.hpp"

#include <cmath>
#include <stdexcept>

namespace captime::abstraction {

namespace {

/// Standard deviation of the non-pad rows of the frozen token table.
double table_std(const Tensor& table) {
  double s = 0.0, s2 = 0.0;
  std::size_t n = 0;
  for (std::size_t i = table.cols(); i < table.size(); ++i, ++n) {
    s += table[i];
    s2 += table[i] * table[i];
  }
  if (n == 0) return 1.0;
  const double mean = s / static_cast<double>(n);
  const double var = s2 / static_cast<double>(n) - mean * mean;
  return var > 0.0 ? std::sqrt(var) : 1.0;
}

}  // namespace

void init(ParameterStore& store, const ModelConfig& cfg, Rng& rng) {
  const std::size_t d = cfg.d_model();
  const double std = 1.0 / std::sqrt(static_cast<double>(d));
  // Key and value maps start variance-preserving for the text embeddings,
  // whatever scale the frozen table has.
  const double text_std = store.contains("backbone.wte") ? table_std(store.at("backbone.wte").value) : 1.0;
  store.add("abstraction.queries", normal_tensor(cfg.backbone.max_positions, d, 1.0, rng), true);
  add_linear(store, "abstraction.q", d, d, std, true, rng);
  add_linear(store, "abstraction.k", d, d, std / text_std, true, rng);
  add_linear(store, "abstraction.v", d, d, std / text_std, true, rng);
}

AbstractionSet abstract(const Binder& b, const ModelConfig& cfg, Var text, std::size_t n) {
  const std::size_t d = cfg.d_model();
  if (text.rows() == 0) throw ShapeError("abstraction: empty text embedding");
  if (text.cols() != d) throw ShapeError("abstraction: text width " + std::to_string(text.cols()) + " != " + std::to_string(d));
  if (n == 0 || n > cfg.backbone.max_positions) {
    throw std::out_of_range("abstraction: position " + std::to_string(n) + " outside the query table (" +
                            std::to_string(cfg.backbone.max_positions) + " rows)");
  }
  Var q = linear(b, "abstraction.q", slice_rows(b("abstraction.queries"), 0, n));
  Var k = linear(b, "abstraction.k", text);
  Var v = linear(b, "abstraction.v", text);
  Var att = softmax(scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(d))));
  return {matmul(att, v), att};
}

Var fuse(Var tokens, Var abstraction) {
  if (tokens.shape() != abstraction.shape()) {
    throw ShapeError("fuse: " + shape_str(tokens.shape()) + " vs " + shape_str(abstraction.shape()));
  }
  return add(tokens, abstraction);
}

}  // namespace captime::abstraction
