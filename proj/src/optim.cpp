#include "captime/optim.hpp"

#include <cmath>

namespace captime {

double clip_grad_norm(const std::vector<Parameter*>& params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    for (double g : p->grad.data()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double k = max_norm / norm;
    for (Parameter* p : params) {
      for (double& g : p->grad.data()) g *= k;
    }
  }
  return norm;
}

void Adam::step(const std::vector<Parameter*>& params) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Parameter* p : params) {
    if (p->grad.size() != p->value.size()) continue;  // untouched this step
    auto [it, fresh] = state_.try_emplace(p->name);
    Moments& s = it->second;
    if (fresh) {
      s.m = Tensor(p->value.shape());
      s.v = Tensor(p->value.shape());
    }
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g;
      s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g * g;
      const double mhat = s.m[i] / c1;
      const double vhat = s.v[i] / c2;
      p->value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace captime
