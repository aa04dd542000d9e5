#pragma once

#include <functional>
#include <vector>

#include "gcbf/gnn/gnn.hpp"
#include "gcbf/world/graph.hpp"

namespace gcbf::train {

using dyn::Mat;
using dyn::Vec;

// Maps a world (and its graph) to one action per agent.
using Controller = std::function<std::vector<Vec>(const world::World&, const world::SceneGraph&)>;

std::vector<Vec> nominal_actions(const world::World& w, const dyn::Dynamics& d);

// clamp(pi_NN + u_nom) for every agent.
Controller learned_controller(const gnn::GnnParams& p, const dyn::Dynamics& d);
Controller nominal_controller(const dyn::Dynamics& d);

// One Euler step of every agent; goals and obstacles are unchanged.
world::World advance(const world::World& w, const dyn::Dynamics& d, const std::vector<Vec>& actions);

}  // namespace gcbf::train
