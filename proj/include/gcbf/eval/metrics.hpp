#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "gcbf/gnn/gnn.hpp"
#include "gcbf/train/rollout.hpp"

namespace gcbf::eval {

using dyn::Vec;

enum class ControllerKind { GcbfPlus, Cbf1, Cbf01, DecCbf1, DecCbf01, Nominal };

std::string_view controller_name(ControllerKind k);  // "gcbf+", "cbf1.0", "deccbf0.1", ...
// Throws ConfigError for unknown names.
ControllerKind controller_from_name(std::string_view name);
// Class-K gain of the CBF-QP baselines; 0 for the others.
double baseline_alpha(ControllerKind k);

// One evaluation cell: every seed runs `instances` random scenarios of
// `episode_length` steps.
struct EvalSpec {
  dyn::EnvKind env = dyn::EnvKind::DoubleIntegrator;
  ControllerKind controller = ControllerKind::GcbfPlus;
  int n_agents = 8;
  int n_obstacles = 0;
  world::WorldParams world;
  int episode_length = 4096;
  int instances = 8;
  std::vector<std::uint64_t> seeds = {0};
  bool record_trajectories = false;
  // Unset means DynamicsConfig::defaults(env).
  std::optional<dyn::DynamicsConfig> dynamics;

  dyn::DynamicsConfig dynamics_config() const { return dynamics ? *dynamics : dyn::DynamicsConfig::defaults(env); }

  // Throws ConfigError on non-positive sizes or an empty seed list.
  void validate() const;
  int total_instances() const { return instances * static_cast<int>(seeds.size()); }
};

// Grid over N and obstacle counts at a fixed side length.
struct ExperimentSpec {
  dyn::EnvKind env = dyn::EnvKind::DoubleIntegrator;
  ControllerKind controller = ControllerKind::GcbfPlus;
  std::vector<int> n_agents;
  double area = 4.0;
  std::vector<int> n_obstacles = {0};
  int episode_length = 4096;
  int instances = 32;
  int seeds = 3;

  // 32 instances x 3 seeds and N = 8..1024.
  static ExperimentSpec full_scale(dyn::EnvKind env, ControllerKind controller, double area);
  // 8 instances x 1 seed and N = 8..256.
  static ExperimentSpec desk(dyn::EnvKind env, ControllerKind controller, double area);
  void validate() const;
  std::vector<EvalSpec> cells() const;
};

struct Metrics {
  dyn::EnvKind env = dyn::EnvKind::DoubleIntegrator;
  ControllerKind controller = ControllerKind::Nominal;
  int n_agents = 0;
  double area = 0;
  int n_obstacles = 0;
  int episode_length = 0;
  int instances = 0;  // over all seeds
  int seeds = 0;
  double density = 0;  // N / l^dim
  // Means over agents, then over instances; std is across instances.
  double safety = 0, reach = 0, success = 0;
  double safety_std = 0, reach_std = 0, success_std = 0;
};

struct InstanceOutcome {
  std::uint64_t seed = 0;
  int instance = 0;
  std::vector<bool> safe;     // S_N,i at every step of the episode
  std::vector<bool> reached;  // |p_i - goal_i| <= 2r at the final step
  std::vector<std::int64_t> first_unsafe_step;  // -1 when never unsafe
};

struct EvalResult {
  Metrics metrics;
  std::vector<InstanceOutcome> outcomes;
  std::vector<std::vector<world::World>> trajectories;  // episode_length + 1 worlds each, when recorded
};

// Scenario of instance k under seed s: sample_scenario with Rng(s).split(k).
world::World scenario(const EvalSpec& spec, std::uint64_t seed, int instance);

// Throws ConfigError when gcbf+ has no parameters, EnvMismatchError when they
// belong to another environment.
train::Controller make_controller(ControllerKind k, const gnn::GnnParams* p, const dyn::Dynamics& d);

// Runs every instance (in parallel) and reduces the outcomes.
EvalResult rollout_eval(const EvalSpec& spec, const gnn::GnnParams* p = nullptr);
// Same, from an explicit initial world per instance.
EvalResult rollout_eval(const EvalSpec& spec, const std::vector<world::World>& starts, const gnn::GnnParams* p);

Metrics reduce(const EvalSpec& spec, const std::vector<InstanceOutcome>& outcomes);

}  // namespace gcbf::eval
