#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gcbf/numerics/tensor.hpp"

namespace gcbf::num {

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(std::span<const Tensor> params, double lr);
};

// One bias-corrected Adam step in place. Throws ShapeError on mismatched
// shapes and NonFiniteError on a non-finite gradient (before touching anything).
void adam_update(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state);

}  // namespace gcbf::num
