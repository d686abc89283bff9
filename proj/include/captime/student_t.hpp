#pragma once

#include <vector>

#include "captime/diffnum.hpp"

namespace captime {

/// Per-token, per-timestep Student's t parameters. Each field is N x L_p.
struct PatchDistParams {
  Tensor mu;
  Tensor sigma;
  Tensor nu;
};

namespace student_t {

/// log density of a location-scale Student's t.
double logpdf(double y, double mu, double sigma, double nu);
double cdf(double y, double mu, double sigma, double nu);
/// Inverse CDF by bisection on cdf(); |cdf(result) - q| small, bracket
/// width below `tol` (relative to sigma).
double quantile(double q, double mu, double sigma, double nu, double tol = 1e-8);

/// Differentiable elementwise log density over same-shaped Vars.
Var logpdf(Var y, Var mu, Var sigma, Var nu);

}  // namespace student_t

}  // namespace captime
