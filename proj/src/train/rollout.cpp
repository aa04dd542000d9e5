#include "gcbf/train/rollout.hpp"

namespace gcbf::train {

std::vector<Vec> nominal_actions(const world::World& w, const dyn::Dynamics& d) {
  std::vector<Vec> u;
  u.reserve(w.states.size());
  for (int i = 0; i < w.n_agents(); ++i) u.push_back(d.nominal(w.states[i], w.goals[i]));
  return u;
}

Controller learned_controller(const gnn::GnnParams& p, const dyn::Dynamics& d) {
  return [&p, &d](const world::World& w, const world::SceneGraph& g) {
    return gnn::policy_actions(p, g, d, nominal_actions(w, d));
  };
}

Controller nominal_controller(const dyn::Dynamics& d) {
  return [&d](const world::World& w, const world::SceneGraph&) { return nominal_actions(w, d); };
}

world::World advance(const world::World& w, const dyn::Dynamics& d, const std::vector<Vec>& actions) {
  world::World next = w;
  for (int i = 0; i < w.n_agents(); ++i) next.states[i] = d.step(w.states[i], actions[i]);
  ++next.time_index;
  return next;
}

}  // namespace gcbf::train
