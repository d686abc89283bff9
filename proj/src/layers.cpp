#include "captime/layers.hpp"

namespace captime {

Tensor normal_tensor(std::size_t rows, std::size_t cols, double std, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std);
  Tensor t = Tensor::matrix(rows, cols);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

void add_linear(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out, double std,
                bool trainable, Rng& rng) {
  store.add(prefix + ".weight", normal_tensor(in, out, std, rng), trainable);
  store.add(prefix + ".bias", Tensor::matrix(1, out), trainable);
}

void add_layer_norm(ParameterStore& store, const std::string& prefix, std::size_t width, bool trainable) {
  store.add(prefix + ".gain", Tensor::matrix(1, width, 1.0), trainable);
  store.add(prefix + ".bias", Tensor::matrix(1, width), trainable);
}

Var linear(const Binder& b, const std::string& prefix, Var x) {
  return add(matmul(x, b(prefix + ".weight")), b(prefix + ".bias"));
}

Var layer_norm(const Binder& b, const std::string& prefix, Var x) {
  return layer_norm(x, b(prefix + ".gain"), b(prefix + ".bias"));
}

}  // namespace captime
