#include "gcbf/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gcbf/error.hpp"
#include "gcbf/numerics/rng.hpp"

namespace gcbf::num {

namespace {

struct Probe {
  double value;
  std::uint64_t signature;
};

Probe run(const ScalarFn& f, std::span<const Tensor> point) {
  Tape tape;
  tape.track_branches(true);
  std::vector<Var> vars;
  vars.reserve(point.size());
  for (const Tensor& t : point) vars.push_back(tape.input(t));
  const Var out = f(tape, vars);
  return {out.value().item(), tape.branch_signature()};
}

}  // namespace

GradCheckReport gradient_check(const ScalarFn& f, std::span<const Tensor> point, const GradCheckOptions& opts) {
  std::vector<Tensor> analytic;
  std::uint64_t base_signature = 0;
  {
    Tape tape;
    tape.track_branches(true);
    std::vector<Var> vars;
    for (const Tensor& t : point) vars.push_back(tape.input(t));
    const Var out = f(tape, vars);
    if (out.value().size() != 1) throw ShapeError("gradient_check needs a scalar function");
    tape.backward(out);
    for (const Var& v : vars) analytic.push_back(tape.grad(v));
    base_signature = tape.branch_signature();
  }

  GradCheckReport report;
  std::vector<Tensor> probe(point.begin(), point.end());
  Rng rng(opts.seed, 0x67726164ull);
  for (std::size_t k = 0; k < probe.size(); ++k) {
    const std::size_t n = probe[k].size();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opts.max_coords_per_input > 0 && opts.max_coords_per_input < n) {
      for (std::size_t i = 0; i < opts.max_coords_per_input; ++i) {
        std::swap(coords[i], coords[i + rng.below(n - i)]);
      }
      coords.resize(opts.max_coords_per_input);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t idx : coords) {
      const double x0 = probe[k][idx];
      probe[k][idx] = x0 + opts.step;
      const Probe plus = run(f, probe);
      probe[k][idx] = x0 - opts.step;
      const Probe minus = run(f, probe);
      probe[k][idx] = x0;
      if (plus.signature != base_signature || minus.signature != base_signature) {
        ++report.skipped;
        continue;
      }
      const double numeric = (plus.value - minus.value) / (2.0 * opts.step);
      const double a = analytic[k][idx];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opts.floor});
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_input = k;
        report.worst_index = idx;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error < opts.tolerance;
  return report;
}

}  // namespace gcbf::num
