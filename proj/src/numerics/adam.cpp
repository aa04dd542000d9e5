#include "gcbf/numerics/adam.hpp"

#include <cmath>

#include "gcbf/error.hpp"

namespace gcbf::num {

AdamState AdamState::for_params(std::span<const Tensor> params, double lr) {
  AdamState s;
  s.lr = lr;
  for (const Tensor& p : params) {
    s.m.push_back(Tensor::like(p));
    s.v.push_back(Tensor::like(p));
  }
  return s;
}

void adam_update(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size() || params.size() != state.v.size()) {
    throw ShapeError("adam: parameter, gradient and moment counts differ");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].shape() != grads[k].shape() || params[k].shape() != state.m[k].shape() ||
        params[k].shape() != state.v[k].shape()) {
      throw ShapeError("adam: shape mismatch for tensor " + std::to_string(k) + ": " + params[k].shape_string() +
                       " vs gradient " + grads[k].shape_string());
    }
    grads[k].require_finite("adam gradient");
  }
  if (state.step < 0) throw ShapeError("adam: negative step counter");

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    double* p = params[k].ptr();
    double* m = state.m[k].ptr();
    double* v = state.v[k].ptr();
    const double* g = grads[k].ptr();
    for (std::size_t i = 0; i < params[k].size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      p[i] -= state.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps);
    }
  }
}

}  // namespace gcbf::num
