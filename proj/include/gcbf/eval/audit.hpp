#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "gcbf/eval/metrics.hpp"

namespace gcbf::eval {

// Barrier value of an agent pair (i < j) or of one agent's certificate (j = -1).
struct BarrierValue {
  int i = 0;
  int j = -1;
  double h = 0;
};
using BarrierFn = std::function<std::vector<BarrierValue>(const world::World&)>;

// h0 = |p_i - p_j|^2 - 4r^2 for every pair closer than R.
BarrierFn pairwise_distance_barrier(const world::WorldParams& params);
// h_theta(z_i) of every agent.
BarrierFn certificate_barrier(const gnn::GnnParams& p, const dyn::Dynamics& d);

struct AuditEvent {
  std::int64_t step = 0;
  int i = 0;
  int j = -1;  // -1: obstacle (collisions) or per-agent barrier
  double value = 0;
};

struct Theorem1Report {
  static constexpr std::size_t kMaxEvents = 1000;
  bool start_in_set = true;  // every barrier value >= 0 at step 0
  std::size_t checked = 0;   // barrier derivative samples
  // (a) finite-difference hdot + alpha h < -tolerance
  std::size_t derivative_violation_count = 0;
  std::vector<AuditEvent> derivative_violations;
  // (b) a barrier value below zero
  std::size_t negativity_count = 0;
  std::vector<AuditEvent> negativity;
  // (c) two agents within 2r, or an agent within r of an obstacle
  std::size_t collision_count = 0;
  std::vector<AuditEvent> collisions;

  // (a) empty and a start in the set imply (b) and (c) empty.
  bool consistent() const;
};

// hdot at step t is (h(t+1) - h(t)) / dt for keys present at both steps.
Theorem1Report check_theorem1(const std::vector<world::World>& trajectory, const BarrierFn& h, double alpha,
                              double dt, double tolerance = 1e-6);

struct AttentionSample {
  double distance = 0;  // d_ij / R
  double weight = 0;
};

struct Assumption1Report {
  std::vector<AttentionSample> samples;
  double mean_mid = 0;  // d in [0.4R, 0.5R)
  double mean_edge = 0; // d in [0.9R, R)
  std::size_t n_mid = 0, n_edge = 0;
  std::size_t probes = 0;
  std::size_t locality_failures = 0;

  bool decay_holds() const { return n_mid > 0 && n_edge > 0 && mean_edge < mean_mid; }
  bool locality_holds() const { return probes > 0 && locality_failures == 0; }
};

// Rolls out the learned controller on `spec`, records every agent-agent
// certificate attention weight with its distance every `stride` steps, then
// runs `probes` non-neighbour perturbations and requires h_i and pi_i to stay
// bit-identical.
Assumption1Report check_assumption1(const gnn::GnnParams& p, const EvalSpec& spec, int probes, num::Rng& rng,
                                    int stride = 16);

}  // namespace gcbf::eval
