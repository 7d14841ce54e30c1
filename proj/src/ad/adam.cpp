#include "predgan/ad/adam.hpp"

#include <cmath>

#include "predgan/util/error.hpp"

namespace predgan::ad {

AdamState AdamState::zeros_like(std::span<const Tensor* const> params) {
  AdamState s;
  for (const Tensor* p : params) {
    s.m.emplace_back(p->shape(), 0.0);
    s.v.emplace_back(p->shape(), 0.0);
  }
  return s;
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size()) {
    throw ShapeError("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k]->shape() != grads[k].shape() || params[k]->shape() != state.m[k].shape()) {
      throw ShapeError("adam_step: shape mismatch for parameter " + std::to_string(k) + ": " +
                       shape_str(params[k]->shape()) + " vs gradient " +
                       shape_str(grads[k].shape()));
    }
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k]->data();
    auto g = grads[k].data();
    auto m = state.m[k].data();
    auto v = state.v[k].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      p[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
    }
  }
}

}  // namespace predgan::ad
