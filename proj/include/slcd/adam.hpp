#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "slcd/tensor.hpp"

namespace slcd {

// Adam with bias correction (Kingma & Ba defaults except lr).
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Tensor> m, v;
};

inline AdamState make_adam(const std::vector<Tensor*>& params, double lr) {
  AdamState s;
  s.lr = lr;
  for (const Tensor* p : params) {
    s.m.emplace_back(p->shape, 0.0);
    s.v.emplace_back(p->shape, 0.0);
  }
  return s;
}

inline void adam_step(AdamState& s, const std::vector<Tensor*>& params,
                      const std::vector<Tensor>& grads) {
  require(params.size() == s.m.size() && grads.size() == params.size(),
          "adam_step: parameter/gradient count mismatch");
  s.step += 1;
  double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = grads[k];
    check_same_shape(p, g, "adam_step");
    require(g.all_finite(),
            "adam_step: non-finite gradient in parameter " + std::to_string(k));
    Tensor& m = s.m[k];
    Tensor& v = s.v[k];
    for (std::size_t i = 0; i < p.numel(); ++i) {
      double gi = g.data[i];
      m.data[i] = s.beta1 * m.data[i] + (1.0 - s.beta1) * gi;
      v.data[i] = s.beta2 * v.data[i] + (1.0 - s.beta2) * gi * gi;
      double mhat = m.data[i] / bc1;
      double vhat = v.data[i] / bc2;
      p.data[i] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
    }
  }
}

}  // namespace slcd
