#include <cmath>
#include <numbers>
#include <random>

#include "captime/student_t.hpp"
#include "doctest.h"

using namespace captime;

TEST_CASE("Cauchy density at the mode") {
  CHECK(student_t::logpdf(0.0, 0.0, 1.0, 1.0) == doctest::Approx(-std::log(std::numbers::pi)).epsilon(1e-12));
  CHECK(student_t::logpdf(2.0, 2.0, 1.0, 1.0) == doctest::Approx(-1.1447298858494).epsilon(1e-12));
}

TEST_CASE("large nu approaches the normal density") {
  CHECK(student_t::logpdf(0.0, 0.0, 1.0, 1e6) == doctest::Approx(-0.918938533204673).epsilon(1e-6));
  CHECK(std::abs(student_t::logpdf(1.3, 0.0, 1.0, 1e6) - (-0.918938533204673 - 0.5 * 1.69)) < 1e-3);
}

TEST_CASE("density integrates to one over +-50 sigma") {
  // Composite Simpson on [-50 sigma, 50 sigma]; the heavy tails beyond that
  // are added from the closed-form CDF so the check measures the density.
  for (double sigma : {0.1, 1.0, 10.0}) {
    for (double nu : {1.5, 3.0, 30.0}) {
      const double mu = -0.4, lo = mu - 50 * sigma, hi = mu + 50 * sigma;
      const int n = 200000;
      const double h = (hi - lo) / n;
      double s = 0.0;
      for (int i = 0; i <= n; ++i) {
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        s += w * std::exp(student_t::logpdf(lo + i * h, mu, sigma, nu));
      }
      const double inside = s * h / 3.0;
      const double tails = 2.0 * student_t::cdf(lo, mu, sigma, nu);
      INFO("sigma=" << sigma << " nu=" << nu);
      CHECK(std::abs(inside + tails - 1.0) < 1e-4);
    }
  }
}

TEST_CASE("mode, symmetry and grid argmax") {
  const double mu = 3.5, sigma = 0.7, nu = 4.0;
  for (double d : {0.1, 1.0, 5.0}) {
    CHECK(student_t::logpdf(mu + d, mu, sigma, nu) == doctest::Approx(student_t::logpdf(mu - d, mu, sigma, nu)));
  }
  double best = -1e300, arg = 0.0;
  for (int i = -5000; i <= 5000; ++i) {
    const double y = mu + i * 1e-3;
    const double v = student_t::logpdf(y, mu, sigma, nu);
    if (v > best) {
      best = v;
      arg = y;
    }
  }
  CHECK(std::abs(arg - mu) <= 1e-3);
}

TEST_CASE("quantiles") {
  CHECK(student_t::quantile(0.75, 0.0, 1.0, 1.0) == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(student_t::quantile(0.5, 2.0, 3.0, 5.0) == doctest::Approx(2.0).epsilon(1e-8));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> q(0.001, 0.999), s(0.05, 20.0), n(1.01, 60.0), m(-10.0, 10.0);
  for (int i = 0; i < 500; ++i) {
    const double qq = q(rng), mu = m(rng), sigma = s(rng), nu = n(rng);
    CHECK(std::abs(student_t::cdf(student_t::quantile(qq, mu, sigma, nu), mu, sigma, nu) - qq) < 1e-6);
  }
  CHECK_THROWS(student_t::quantile(0.0, 0.0, 1.0, 3.0));
  CHECK_THROWS(student_t::quantile(1.0, 0.0, 1.0, 3.0));
}

TEST_CASE("differentiable log density matches the scalar version and central differences") {
  ParameterStore store;
  store.add("mu", Tensor::matrix(1, 3, std::vector<double>{0.2, -1.0, 3.0}), true);
  store.add("sigma", Tensor::matrix(1, 3, std::vector<double>{0.5, 1.2, 2.0}), true);
  store.add("nu", Tensor::matrix(1, 3, std::vector<double>{1.5, 4.0, 25.0}), true);
  const Tensor y = Tensor::matrix(1, 3, std::vector<double>{0.9, -0.3, -2.0});
  {
    Graph g;
    Var lp = student_t::logpdf(g.constant(y), g.param(store.at("mu")), g.param(store.at("sigma")), g.param(store.at("nu")));
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(lp.value()[i] == doctest::Approx(student_t::logpdf(y[i], store.at("mu").value[i], store.at("sigma").value[i],
                                                              store.at("nu").value[i]))
                                 .epsilon(1e-12));
    }
  }
  const auto rep = grad_check(
      [&](Graph& g) {
        return neg(reduce_sum(student_t::logpdf(g.constant(y), g.param(store.at("mu")), g.param(store.at("sigma")),
                                                g.param(store.at("nu")))));
      },
      store, GradCheckOptions{1e-5, 1e-4, 1e-6});
  CHECK(rep.passed);
  CHECK(rep.max_rel_error < 1e-4);
}
