#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "captime/diffnum.hpp"
#include "captime/layers.hpp"
#include "captime/special.hpp"
#include "doctest.h"

using namespace captime;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t = Tensor::matrix(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

/// Central-difference check of a unary or binary op through a random linear
/// read-out, so every output element contributes.
double primitive_error(const std::function<Var(Graph&, Var, Var)>& op, Tensor a, Tensor b, const Tensor& probe) {
  ParameterStore store;
  store.add("a", std::move(a), true);
  store.add("b", std::move(b), true);
  const auto rep = grad_check(
      [&](Graph& g) {
        Var out = op(g, g.param(store.at("a")), g.param(store.at("b")));
        return reduce_sum(mul(out, g.constant(probe)));
      },
      store, GradCheckOptions{1e-5, 1e-4, 1e-6});
  return rep.max_rel_error;
}

}  // namespace

TEST_CASE("softmax of equal logits is uniform") {
  Graph g;
  Var s = softmax(g.constant(Tensor::matrix(1, 3, 0.0)));
  for (std::size_t i = 0; i < 3; ++i) CHECK(s.value()[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("softplus(0) is ln 2 and stays finite for large inputs") {
  Graph g;
  Var s = softplus(g.constant(Tensor::matrix(1, 3, std::vector<double>{0.0, 800.0, -800.0})));
  CHECK(s.value()[0] == doctest::Approx(0.693147180559945).epsilon(1e-14));
  CHECK(s.value()[1] == doctest::Approx(800.0));
  CHECK(s.value()[2] >= 0.0);
  CHECK(s.value()[2] < 1e-300);
}

TEST_CASE("lgamma matches closed forms") {
  // ln Gamma(1/2) = ln sqrt(pi); Gamma(n) = (n-1)!.
  CHECK(special::lgamma(0.5) == doctest::Approx(0.5 * std::log(std::numbers::pi)).epsilon(1e-13));
  CHECK(special::lgamma(1.0) == doctest::Approx(0.0).epsilon(1e-13));
  CHECK(special::lgamma(6.0) == doctest::Approx(std::log(120.0)).epsilon(1e-13));
  for (double x : {0.1, 0.7, 2.5, 13.3, 171.0}) CHECK(special::lgamma(x) == doctest::Approx(std::lgamma(x)).epsilon(1e-12));
  // digamma(1) = -Euler-Mascheroni.
  CHECK(special::digamma(1.0) == doctest::Approx(-0.5772156649015329).epsilon(1e-12));
  Graph g;
  CHECK_THROWS_AS(lgamma(g.constant(Tensor::scalar(-1.0))), DomainError);
  CHECK_THROWS_AS(lgamma(g.constant(Tensor::scalar(0.0))), DomainError);
}

TEST_CASE("quadratic gradient") {
  ParameterStore store;
  Parameter& x = store.add("x", Tensor::matrix(1, 2, std::vector<double>{1.0, 2.0}), true);
  Graph g;
  Var v = g.param(x);
  g.backward(reduce_sum(mul(v, v)));
  CHECK(x.grad[0] == 2.0);
  CHECK(x.grad[1] == 4.0);
}

TEST_CASE("softmax cross-entropy gradient at uniform logits is p - onehot") {
  ParameterStore store;
  Parameter& z = store.add("z", Tensor::matrix(1, 4, 0.0), true);
  Graph g;
  Var p = softmax(g.param(z));
  Tensor onehot = Tensor::matrix(1, 4, 0.0);
  onehot[2] = 1.0;
  g.backward(neg(reduce_sum(mul(log(p), g.constant(onehot)))));
  for (std::size_t i = 0; i < 4; ++i) CHECK(z.grad[i] == doctest::Approx(0.25 - onehot[i]).epsilon(1e-14));
}

TEST_CASE("shared subexpressions accumulate gradients") {
  ParameterStore store;
  Parameter& x = store.add("x", Tensor::scalar(3.0), true);
  Graph g;
  Var v = g.param(x);
  Var y = add(mul(v, v), scale(v, 5.0));  // x^2 + 5x
  g.backward(reduce_sum(y));
  CHECK(x.grad[0] == doctest::Approx(11.0));
}

TEST_CASE("backward errors") {
  ParameterStore store;
  Parameter& x = store.add("x", Tensor::matrix(1, 2, 1.0), true);
  Graph g;
  Var v = g.param(x);
  CHECK_THROWS_AS(g.backward(v), ShapeError);
  Var l = reduce_sum(v);
  g.backward(l);
  CHECK_THROWS_AS(g.backward(l), std::logic_error);
}

TEST_CASE("non-finite results are errors") {
  Graph g;
  CHECK_THROWS_AS(g.constant(Tensor::scalar(std::nan(""))), NumericError);
  Var big = g.constant(Tensor::scalar(800.0));
  CHECK_THROWS_AS(exp(big), NumericError);
  CHECK_THROWS_AS(log(g.constant(Tensor::scalar(0.0))), DomainError);
}

TEST_CASE("shape mismatches are errors") {
  Graph g;
  Var a = g.constant(Tensor::matrix(2, 3));
  Var b = g.constant(Tensor::matrix(2, 3));
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
  CHECK_THROWS_AS(add(a, g.constant(Tensor::matrix(3, 2))), ShapeError);
  CHECK_THROWS_AS(slice_rows(a, 1, 4), ShapeError);
}

TEST_CASE("every primitive matches central differences on 100 random trials") {
  Rng rng(1234);
  struct Case {
    const char* name;
    std::function<Var(Graph&, Var, Var)> op;
    bool positive = false;
  };
  const std::vector<Case> cases{
      {"matmul", [](Graph&, Var a, Var b) { return matmul(a, transpose(b)); }},
      {"add", [](Graph&, Var a, Var b) { return add(a, b); }},
      {"add_row", [](Graph&, Var a, Var b) { return add(a, slice_rows(b, 0, 1)); }},
      {"sub", [](Graph&, Var a, Var b) { return sub(a, b); }},
      {"mul", [](Graph&, Var a, Var b) { return mul(a, b); }},
      {"div", [](Graph&, Var a, Var b) { return div(a, b); }, true},
      {"softmax", [](Graph&, Var a, Var) { return softmax(a); }},
      {"softmax_causal", [](Graph&, Var a, Var b) { return softmax(matmul(a, transpose(b)), true); }},
      {"layer_norm", [](Graph&, Var a, Var b) { return layer_norm(a, slice_rows(b, 0, 1), slice_rows(b, 1, 2)); }},
      {"gelu", [](Graph&, Var a, Var) { return gelu(a); }},
      {"softplus", [](Graph&, Var a, Var) { return softplus(a); }},
      {"exp", [](Graph&, Var a, Var) { return exp(a); }},
      {"log", [](Graph&, Var a, Var) { return log(a); }, true},
      {"lgamma", [](Graph&, Var a, Var) { return lgamma(a); }, true},
      {"square", [](Graph&, Var a, Var) { return square(a); }},
      {"transpose", [](Graph&, Var a, Var) { return transpose(a); }},
      {"slice_cols", [](Graph&, Var a, Var) { return slice_cols(a, 1, a.cols()); }},
      {"concat_rows", [](Graph&, Var a, Var b) { return concat_rows({a, b}); }},
      {"concat_cols", [](Graph&, Var a, Var b) { return concat_cols({a, b}); }},
      {"reduce_mean", [](Graph&, Var a, Var) { return reduce_mean(a); }},
      {"mean_rows", [](Graph&, Var a, Var) { return mean_rows(a); }},
      {"scale_shift", [](Graph&, Var a, Var) { return add_scalar(scale(neg(a), 1.7), 0.3); }},
  };
  for (const auto& c : cases) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t r = 2 + static_cast<std::size_t>(trial % 3), k = 3;
      const double lo = c.positive ? 0.3 : -2.0, hi = c.positive ? 3.0 : 2.0;
      Tensor a = random_matrix(r, k, rng, lo, hi);
      Tensor b = random_matrix(r, k, rng, lo, hi);
      Graph g;
      Var probe_shape = c.op(g, g.constant(a), g.constant(b));
      const Tensor probe = random_matrix(probe_shape.rows(), probe_shape.cols(), rng);
      worst = std::max(worst, primitive_error(c.op, a, b, Tensor(probe_shape.shape(), probe.vec())));
    }
    INFO(c.name);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("random three-layer MLP gradients match finite differences") {
  Rng rng(99);
  ParameterStore store;
  add_linear(store, "l1", 5, 8, 0.5, true, rng);
  add_linear(store, "l2", 8, 8, 0.5, true, rng);
  add_linear(store, "l3", 8, 2, 0.5, true, rng);
  for (auto& [name, p] : store) {
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] += 0.1 * std::sin(static_cast<double>(i + name.size()));
  }
  const Tensor x = random_matrix(4, 5, rng);
  const auto rep = grad_check(
      [&](Graph& g) {
        Binder b(g, store);
        Var h = gelu(linear(b, "l1", g.constant(x)));
        h = gelu(linear(b, "l2", h));
        return reduce_mean(square(linear(b, "l3", h)));
      },
      store, GradCheckOptions{1e-5, 1e-4, 1e-6});
  CHECK(rep.passed);
  CHECK(rep.max_rel_error < 1e-4);
  CHECK(rep.entries.size() == 6);
}

TEST_CASE("frozen leaves are absent from the gradient check report and untouched") {
  ParameterStore store;
  store.add("w", Tensor::matrix(1, 3, 0.5), true);
  Parameter& frozen = store.add("table", Tensor::matrix(1, 3, 2.0), false);
  const auto rep = grad_check(
      [&](Graph& g) { return reduce_sum(mul(g.param(store.at("w")), g.param(store.at("table")))); }, store);
  CHECK(rep.find("w") != nullptr);
  CHECK(rep.find("table") == nullptr);
  for (std::size_t i = 0; i < frozen.grad.size(); ++i) CHECK(frozen.grad[i] == 0.0);
  CHECK(frozen.value == Tensor::matrix(1, 3, 2.0));
}

TEST_CASE("ops are deterministic") {
  Rng r1(5), r2(5);
  const Tensor a = random_matrix(3, 4, r1), b = random_matrix(3, 4, r2);
  Graph g1, g2;
  Var y1 = layer_norm(softmax(g1.constant(a)), g1.constant(Tensor::matrix(1, 4, 1.0)), g1.constant(Tensor::matrix(1, 4)));
  Var y2 = layer_norm(softmax(g2.constant(b)), g2.constant(Tensor::matrix(1, 4, 1.0)), g2.constant(Tensor::matrix(1, 4)));
  CHECK(y1.value() == y2.value());
}
