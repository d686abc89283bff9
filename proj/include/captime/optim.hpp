#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "captime/diffnum.hpp"

namespace captime {

/// Scales all gradients so their joint L2 norm is at most max_norm. Returns
/// the norm before clipping.
double clip_grad_norm(const std::vector<Parameter*>& params, double max_norm);

class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  std::size_t steps() const { return t_; }

  /// One bias-corrected update of every parameter in `params` from its grad.
  void step(const std::vector<Parameter*>& params);

 private:
  struct Moments {
    Tensor m, v;
  };
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace captime
