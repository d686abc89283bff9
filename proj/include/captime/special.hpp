#pragma once

namespace captime::special {

/// ln Gamma(x) for x > 0 via the Lanczos approximation (g = 7, 9 terms),
/// with the reflection formula for x < 0.5.
double lgamma(double x);

/// Digamma psi(x) for x > 0: upward recurrence to x >= 6, then the
/// asymptotic Bernoulli series.
double digamma(double x);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

}  // namespace captime::special
