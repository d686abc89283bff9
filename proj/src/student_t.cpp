#include "captime/student_t.hpp"

#include <cmath>
#include <numbers>

#include "captime/special.hpp"

namespace captime::student_t {

namespace {

void check_domain(double sigma, double nu) {
  if (!(sigma > 0.0)) throw DomainError("student_t: sigma must be > 0");
  if (!(nu > 0.0)) throw DomainError("student_t: nu must be > 0");
}

}  // namespace

double logpdf(double y, double mu, double sigma, double nu) {
  check_domain(sigma, nu);
  const double z = (y - mu) / sigma;
  return special::lgamma(0.5 * (nu + 1.0)) - special::lgamma(0.5 * nu) - 0.5 * std::log(nu * std::numbers::pi) -
         std::log(sigma) - 0.5 * (nu + 1.0) * std::log1p(z * z / nu);
}

double cdf(double y, double mu, double sigma, double nu) {
  check_domain(sigma, nu);
  const double t = (y - mu) / sigma;
  if (t == 0.0) return 0.5;
  const double x = nu / (nu + t * t);
  const double tail = 0.5 * special::incomplete_beta(0.5 * nu, 0.5, x);
  return t > 0.0 ? 1.0 - tail : tail;
}

double quantile(double q, double mu, double sigma, double nu, double tol) {
  if (!(q > 0.0 && q < 1.0)) throw DomainError("student_t::quantile: q must lie in (0, 1)");
  check_domain(sigma, nu);
  if (q == 0.5) return mu;
  // Standardized bracket, widened geometrically.
  double lo = -1.0, hi = 1.0;
  while (cdf(lo, 0.0, 1.0, nu) > q) lo *= 2.0;
  while (cdf(hi, 0.0, 1.0, nu) < q) hi *= 2.0;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (cdf(mid, 0.0, 1.0, nu) < q) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return mu + sigma * 0.5 * (lo + hi);
}

Var logpdf(Var y, Var mu, Var sigma, Var nu) {
  Var half_nu_plus = scale(add_scalar(nu, 1.0), 0.5);
  Var z = div(sub(y, mu), sigma);
  Var log_kernel = log(add_scalar(div(square(z), nu), 1.0));
  Var norm = sub(lgamma(half_nu_plus), lgamma(scale(nu, 0.5)));
  norm = sub(norm, scale(log(scale(nu, std::numbers::pi)), 0.5));
  norm = sub(norm, log(sigma));
  return sub(norm, mul(half_nu_plus, log_kernel));
}

}  // namespace captime::student_t
