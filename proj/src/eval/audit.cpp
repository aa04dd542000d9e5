#include "gcbf/eval/audit.hpp"

#include <map>

#include "gcbf/error.hpp"

namespace gcbf::eval {

namespace {

std::vector<Vec> positions(const world::World& w) {
  std::vector<Vec> p;
  p.reserve(w.states.size());
  for (int i = 0; i < w.n_agents(); ++i) p.push_back(w.position(i));
  return p;
}

void record(std::vector<AuditEvent>& events, std::size_t& count, AuditEvent e) {
  ++count;
  if (events.size() < Theorem1Report::kMaxEvents) events.push_back(e);
}

}  // namespace

BarrierFn pairwise_distance_barrier(const world::WorldParams& params) {
  return [params](const world::World& w) {
    const auto pos = positions(w);
    const double rr = 4 * params.agent_radius * params.agent_radius;
    std::vector<BarrierValue> out;
    for (const auto& [i, j] : world::close_pairs(pos, params.sense_radius)) {
      out.push_back({i, j, (pos[i] - pos[j]).squaredNorm() - rr});
    }
    return out;
  };
}

BarrierFn certificate_barrier(const gnn::GnnParams& p, const dyn::Dynamics& d) {
  return [&p, &d](const world::World& w) {
    const Vec h = gnn::certificate_values(p, world::build_graph(w, d));
    std::vector<BarrierValue> out;
    for (int i = 0; i < h.size(); ++i) out.push_back({i, -1, h[i]});
    return out;
  };
}

bool Theorem1Report::consistent() const {
  if (derivative_violation_count > 0 || !start_in_set) return true;
  return negativity_count == 0 && collision_count == 0;
}

Theorem1Report check_theorem1(const std::vector<world::World>& trajectory, const BarrierFn& h, double alpha,
                              double dt, double tolerance) {
  Theorem1Report rep;
  std::map<std::pair<int, int>, double> prev;
  for (std::size_t t = 0; t < trajectory.size(); ++t) {
    const world::World& w = trajectory[t];
    const auto step = static_cast<std::int64_t>(t);
    std::map<std::pair<int, int>, double> cur;
    for (const BarrierValue& v : h(w)) {
      cur[{v.i, v.j}] = v.h;
      if (v.h < 0) {
        if (t == 0) rep.start_in_set = false;
        record(rep.negativity, rep.negativity_count, {step, v.i, v.j, v.h});
      }
      const auto it = prev.find({v.i, v.j});
      if (it != prev.end()) {
        ++rep.checked;
        const double residual = (v.h - it->second) / dt + alpha * it->second;
        if (residual < -tolerance) {
          record(rep.derivative_violations, rep.derivative_violation_count, {step - 1, v.i, v.j, residual});
        }
      }
    }
    prev = std::move(cur);

    const auto pos = positions(w);
    const double two_r = 2 * w.params.agent_radius;
    std::vector<bool> in_pair(pos.size(), false);
    for (const auto& [i, j] : world::close_pairs(pos, two_r * (1 + 1e-9))) {
      const double dist = (pos[i] - pos[j]).norm();
      if (dist > two_r) continue;
      in_pair[i] = in_pair[j] = true;
      record(rep.collisions, rep.collision_count, {step, i, j, dist});
    }
    const auto safe = world::safety_status(w);
    for (std::size_t i = 0; i < safe.size(); ++i) {
      if (!safe[i] && !in_pair[i]) record(rep.collisions, rep.collision_count, {step, static_cast<int>(i), -1, 0.0});
    }
  }
  return rep;
}

Assumption1Report check_assumption1(const gnn::GnnParams& p, const EvalSpec& spec, int probes, num::Rng& rng,
                                    int stride) {
  if (stride <= 0) throw ConfigError("stride must be positive");
  EvalSpec s = spec;
  s.controller = ControllerKind::GcbfPlus;
  s.record_trajectories = true;
  const EvalResult res = rollout_eval(s, &p);
  const dyn::Dynamics d(s.dynamics_config());
  const double big_r = s.world.sense_radius;

  Assumption1Report rep;
  double sum_mid = 0, sum_edge = 0;
  for (const auto& traj : res.trajectories) {
    for (std::size_t t = 0; t < traj.size(); t += static_cast<std::size_t>(stride)) {
      const world::World& w = traj[t];
      const world::SceneGraph g = world::build_graph(w, d);
      const Vec att = gnn::all_attention_weights(p, g);
      for (int e = 0; e < g.n_edges(); ++e) {
        const auto& edge = g.edges[e];
        if (edge.sender >= g.n_agents) continue;
        const double dist = (w.position(edge.receiver) - w.position(edge.sender)).norm() / big_r;
        rep.samples.push_back({dist, att[e]});
        if (dist >= 0.4 && dist < 0.5) sum_mid += att[e], ++rep.n_mid;
        if (dist >= 0.9 && dist < 1.0) sum_edge += att[e], ++rep.n_edge;
      }
    }
  }
  if (rep.n_mid) rep.mean_mid = sum_mid / static_cast<double>(rep.n_mid);
  if (rep.n_edge) rep.mean_edge = sum_edge / static_cast<double>(rep.n_edge);

  // Locality probes: move an agent that is not a neighbour of i somewhere else
  // outside i's sensing ball.
  const int pd = dyn::env_shape(s.env).pos_dim;
  for (int attempt = 0; rep.probes < static_cast<std::size_t>(probes) && attempt < 100 * probes; ++attempt) {
    const auto& traj = res.trajectories[rng.below(res.trajectories.size())];
    const world::World& w = traj[rng.below(traj.size())];
    const int i = static_cast<int>(rng.below(static_cast<std::uint64_t>(w.n_agents())));
    std::vector<int> far;
    for (int j = 0; j < w.n_agents(); ++j) {
      if (j != i && (w.position(j) - w.position(i)).norm() >= big_r) far.push_back(j);
    }
    if (far.empty()) continue;
    const int j = far[rng.below(far.size())];
    world::World moved = w;
    Vec dir(pd);
    for (int k = 0; k < pd; ++k) dir[k] = rng.normal();
    dir /= dir.norm();
    Vec& xj = moved.states[static_cast<std::size_t>(j)];
    for (int k = pd; k < xj.size(); ++k) xj[k] += 0.5 * rng.normal();
    xj.head(pd) = w.position(i) + (big_r * (1.0 + 1e-6) + rng.uniform(0.0, 1.0)) * dir;

    const world::SceneGraph g0 = world::build_graph(w, d);
    const world::SceneGraph g1 = world::build_graph(moved, d);
    const bool same_h = gnn::certificate_values(p, g0)[i] == gnn::certificate_values(p, g1)[i];
    const bool same_pi = gnn::policy_deviation(p, g0).row(i) == gnn::policy_deviation(p, g1).row(i);
    ++rep.probes;
    if (!same_h || !same_pi) ++rep.locality_failures;
  }
  return rep;
}

}  // namespace gcbf::eval
