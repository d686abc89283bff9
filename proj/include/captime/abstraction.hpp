#pragma once

// Text abstraction: one learnable query per token position attends over the
// embedded prompt (single head, scale 1/sqrt(D), no output projection).
//
// Tensor names:
//   abstraction.queries          N_max x D
//   abstraction.{q,k,v}.{weight,bias}   D x D

#include "captime/config.hpp"
#include "captime/layers.hpp"

namespace captime::abstraction {

void init(ParameterStore& store, const ModelConfig& cfg, Rng& rng);

struct AbstractionSet {
  Var values;     // n x D
  Var attention;  // n x N_s, rows are probability vectors
};

/// A_i for positions 0..n-1 given the prompt embedding E_s (N_s x D, at
/// least one row).
AbstractionSet abstract(const Binder& b, const ModelConfig& cfg, Var text, std::size_t n);

/// E = T + A.
Var fuse(Var tokens, Var abstraction);

}  // namespace captime::abstraction
