#pragma once

// Shared building blocks for the model modules: parameter binding and the
// affine / normalization helpers every module uses.

#include <cstdint>
#include <random>
#include <string>

#include "captime/diffnum.hpp"

namespace captime {

/// Resolves parameter names to graph leaves. A mutable store yields
/// gradient-tracking leaves (for trainable parameters); a const store yields
/// read-only leaves, which is what inference uses.
class Binder {
 public:
  Binder(Graph& g, ParameterStore& store) : graph_(&g), mut_(&store), const_(&store) {}
  Binder(Graph& g, const ParameterStore& store) : graph_(&g), const_(&store) {}

  Var operator()(const std::string& name) const {
    return mut_ ? graph_->param(mut_->at(name)) : graph_->frozen(const_->at(name));
  }
  Graph& graph() const { return *graph_; }

 private:
  Graph* graph_;
  ParameterStore* mut_ = nullptr;
  const ParameterStore* const_;
};

using Rng = std::mt19937_64;

Tensor normal_tensor(std::size_t rows, std::size_t cols, double std, Rng& rng);

/// Adds `<prefix>.weight` (in x out, N(0, std)) and `<prefix>.bias` (1 x out,
/// zeros).
void add_linear(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out, double std,
                bool trainable, Rng& rng);
/// Adds `<prefix>.gain` (ones) and `<prefix>.bias` (zeros), both 1 x width.
void add_layer_norm(ParameterStore& store, const std::string& prefix, std::size_t width, bool trainable);

Var linear(const Binder& b, const std::string& prefix, Var x);
Var layer_norm(const Binder& b, const std::string& prefix, Var x);

}  // namespace captime
