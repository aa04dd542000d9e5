#pragma once

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "gcbf/eval/metrics.hpp"
#include "gcbf/train/trainer.hpp"

namespace gcbf::eval {

inline const std::vector<double> kSweepAlphas = {1e-2, 1e-1, 1.0, 1e1, 1e2};
inline const std::vector<int> kSweepHorizons = {4, 8, 16, 32, 64};

struct SweepPoint {
  double alpha = 1.0;
  int horizon = 32;
};

// alpha varied at the base horizon, then T varied at alpha = 1, without repeats.
std::vector<SweepPoint> sensitivity_grid(const train::TrainConfig& base);

struct SweepCell {
  SweepPoint point;
  Metrics metrics;
  double final_loss = 0;
};

using SweepCallback = std::function<void(const SweepCell&)>;

// Trains one policy per cell from Rng(seed) and evaluates it with `eval`.
std::vector<SweepCell> sweep_sensitivity(const train::TrainConfig& base, const EvalSpec& eval,
                                         const std::vector<SweepPoint>& grid, std::uint64_t seed,
                                         const SweepCallback& on_cell = {});

struct ScalingPoint {
  Metrics metrics;
  double wall_seconds = 0;
};

struct ScalingResult {
  std::vector<ScalingPoint> points;
  // Largest N that completed; set when a cell ran out of memory.
  std::optional<int> stopped_after;
};

// Evaluation only: the same controller at every N in `n_list`.
ScalingResult scaling_experiment(const EvalSpec& base, const std::vector<int>& n_list, const gnn::GnnParams* p);

}  // namespace gcbf::eval
