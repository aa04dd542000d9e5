#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "gcbf/gnn/gnn.hpp"
#include "gcbf/numerics/adam.hpp"
#include "gcbf/train/rollout.hpp"

namespace gcbf::train {

enum class CtrlTarget { Qp, Nominal };

struct TrainConfig {
  dyn::EnvKind env = dyn::EnvKind::DoubleIntegrator;
  int horizon = 32;  // T, labeling horizon in steps
  double eta_ctrl = 1e-4;
  double eta_deriv = 0.2;
  double gamma = 0.02;
  double alpha = 1.0;
  double lr_policy = 1e-5;
  double lr_cbf = 1e-5;
  int total_steps = 1000;
  // Data schedule, not given by the method: scenarios per collection round,
  // steps per rollout, gradient steps between collections and snapshots per step.
  int n_scenarios = 16;
  int rollout_length = 64;
  int collect_every = 32;
  int batch_size = 64;
  int n_agents = 8;
  int n_obstacles = 8;
  world::WorldParams world;
  CtrlTarget ctrl_target = CtrlTarget::Qp;
  // Control limits and step size; unset means DynamicsConfig::defaults(env).
  std::optional<dyn::DynamicsConfig> dynamics;

  dyn::DynamicsConfig dynamics_config() const { return dynamics ? *dynamics : dyn::DynamicsConfig::defaults(env); }
  // Per-environment values of T, eta_ctrl and the two learning rates, area 4
  // in 2D and 2 in 3D.
  static TrainConfig defaults(dyn::EnvKind env);
  // Throws ConfigError on non-positive values.
  void validate() const;
};

struct Transition {
  world::World world;  // at t_k
  world::SceneGraph graph;
  std::vector<Vec> actions;  // applied, clamped
  std::vector<Vec> u_nom;
  std::vector<Vec> target;   // control-loss target computed at collection
  bool target_relaxed = false;
  world::World next;         // at t_k+1
  int rollout = 0;
  int t = 0;
};

// Rollout-major: items[r * length + t].
struct Buffer {
  std::vector<Transition> items;
  int n_rollouts = 0;
  int length = 0;
  std::uint64_t policy_fingerprint = 0;
};

// Rolls out the current policy from freshly sampled scenarios and attaches
// control targets (pi_QP with the current certificate, or clamped nominal).
Buffer collect_onpolicy(const gnn::GnnParams& p, const dyn::Dynamics& d, const TrainConfig& cfg, num::Rng& rng,
                        bool with_targets = true);

enum class Label : std::int8_t { Unsafe = -1, Unlabeled = 0, Safe = 1 };

struct LabeledDataset {
  std::vector<std::vector<Label>> labels;  // [transition][agent]
  std::size_t count(Label l) const;
};

// Unsafe now -> D_A; safe at this and the next T states of the closed loop
// under p -> D_C; otherwise unlabeled. When p is the policy that collected the
// buffer, the recorded rollout is the closed loop and only the tail is simulated.
LabeledDataset label_invariance(const Buffer& buffer, const gnn::GnnParams& p, const dyn::Dynamics& d, int horizon);

// (h(z_i(t_k+1)) - h(z_i(t_k))) / dt with t_k+1 reached under the current policy.
double hdot_estimate(const gnn::GnnParams& p, const Transition& tr, const dyn::Dynamics& d, int i);

struct Minibatch {
  std::vector<const Transition*> items;
  std::vector<const std::vector<Label>*> labels;
};

struct LossBreakdown {
  double total = 0, deriv = 0, safe = 0, unsafe = 0, ctrl = 0;
  std::size_t samples = 0, n_safe = 0, n_unsafe = 0;
};

struct LossVars {
  num::Var total, deriv, safe, unsafe, ctrl;
};

// Certificate loss: eta_deriv sum [gamma - hdot - alpha h]+ over every agent
// sample, sum over D_C of [gamma - h]+ and over D_A of [gamma + h]+. Control
// loss: eta_ctrl sum |pi(z_i) - target_i|, using the pre-clamp policy output.
// The step to t_k+1 uses the clamped control; saturated coordinates carry no
// gradient there.
LossVars build_losses(num::Tape& tape, const gnn::NetVars& cert, const gnn::NetVars& policy, const Minibatch& mb,
                      const dyn::Dynamics& d, const TrainConfig& cfg);
LossBreakdown evaluate_losses(const gnn::GnnParams& p, const Minibatch& mb, const dyn::Dynamics& d,
                              const TrainConfig& cfg);

struct Optimizers {
  num::AdamState cert;
  num::AdamState policy;
  static Optimizers make(const gnn::GnnParams& p, const TrainConfig& cfg);
};

// One Adam update of both networks. Throws NonFiniteError on a non-finite loss.
LossBreakdown train_step(gnn::GnnParams& p, Optimizers& opt, const Minibatch& mb, const dyn::Dynamics& d,
                         const TrainConfig& cfg);

struct StepRecord {
  int step = 0;
  LossBreakdown loss;
  double wall_seconds = 0;
  std::size_t d_c = 0, d_a = 0, unlabeled = 0;
  int relaxed_targets = 0;
};

struct TrainResult {
  gnn::GnnParams params;
  std::vector<StepRecord> curve;
};

using StepCallback = std::function<void(const StepRecord&, const gnn::GnnParams&)>;

// collect -> label -> targets -> collect_every gradient steps, repeated for
// total_steps gradient steps.
TrainResult train(const TrainConfig& cfg, num::Rng& rng, const StepCallback& on_step = {});

}  // namespace gcbf::train
