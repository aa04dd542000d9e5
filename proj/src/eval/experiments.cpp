#include "gcbf/eval/experiments.hpp"

#include <chrono>
#include <new>

namespace gcbf::eval {

std::vector<SweepPoint> sensitivity_grid(const train::TrainConfig& base) {
  std::vector<SweepPoint> grid;
  for (double a : kSweepAlphas) grid.push_back({a, base.horizon});
  for (int t : kSweepHorizons) {
    if (t != base.horizon) grid.push_back({1.0, t});
  }
  return grid;
}

std::vector<SweepCell> sweep_sensitivity(const train::TrainConfig& base, const EvalSpec& eval,
                                         const std::vector<SweepPoint>& grid, std::uint64_t seed,
                                         const SweepCallback& on_cell) {
  eval.validate();
  std::vector<SweepCell> cells;
  for (const SweepPoint& pt : grid) {
    train::TrainConfig cfg = base;
    cfg.alpha = pt.alpha;
    cfg.horizon = pt.horizon;
    num::Rng rng(seed);
    const train::TrainResult tr = train::train(cfg, rng);
    EvalSpec spec = eval;
    spec.controller = ControllerKind::GcbfPlus;
    SweepCell cell;
    cell.point = pt;
    cell.metrics = rollout_eval(spec, &tr.params).metrics;
    cell.final_loss = tr.curve.empty() ? 0.0 : tr.curve.back().loss.total;
    if (on_cell) on_cell(cell);
    cells.push_back(cell);
  }
  return cells;
}

ScalingResult scaling_experiment(const EvalSpec& base, const std::vector<int>& n_list, const gnn::GnnParams* p) {
  ScalingResult out;
  for (int n : n_list) {
    EvalSpec spec = base;
    spec.n_agents = n;
    spec.record_trajectories = false;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      ScalingPoint pt;
      pt.metrics = rollout_eval(spec, p).metrics;
      pt.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      out.points.push_back(pt);
    } catch (const std::bad_alloc&) {
      out.stopped_after = out.points.empty() ? 0 : out.points.back().metrics.n_agents;
      break;
    }
  }
  return out;
}

}  // namespace gcbf::eval
