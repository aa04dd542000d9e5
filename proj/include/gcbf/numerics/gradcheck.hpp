#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "gcbf/numerics/tape.hpp"

namespace gcbf::num {

// Builds a scalar on `tape` from the given differentiable inputs.
using ScalarFn = std::function<Var(Tape& tape, std::span<const Var> inputs)>;

struct GradCheckOptions {
  double step = 1e-6;
  double tolerance = 1e-5;
  // Denominator floor of the relative error |a-b| / max(|a|, |b|, floor).
  double floor = 1e-4;
  // 0 probes every coordinate; otherwise a seeded random subset per input.
  std::size_t max_coords_per_input = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  bool passed = true;
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  // Coordinates where the probe crossed a kink (relu/hinge sign, argmax,
  // zero norm, graph topology); these are not compared.
  std::size_t skipped = 0;
};

// Reverse-mode gradient vs central differences, coordinate by coordinate.
// Throws NonFiniteError when the function is not finite near the point.
GradCheckReport gradient_check(const ScalarFn& f, std::span<const Tensor> point, const GradCheckOptions& opts = {});

}  // namespace gcbf::num
