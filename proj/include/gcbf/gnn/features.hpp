#pragma once

#include <vector>

#include "gcbf/gnn/gnn.hpp"

namespace gcbf::gnn {

// Row r of the result is jac[r] * (row r of d)^T; d is R x k, jac[r] is out x k.
Var row_affine(Tape& tape, Var d, const std::vector<Mat>& jac);

// Value `exact`, derivative w.r.t. row r of x equal to jac[r]. This is how
// the non-polynomial maps (the Euler step, e(x), LiDAR re-hits) enter a tape:
// exact forward values, first-order backward.
Var linearized(Tape& tape, const Tensor& exact, Var x, const std::vector<Mat>& jac);

// Edge inputs of a batch of graphs (same layout as make_batch) as a function
// of the stacked agent states x (sum N x n). x must hold the agent states
// the graphs were built from; goals are constants and every LiDAR hit moves
// with its owner along the tangent plane of the surface it hit.
Var edge_inputs_from_states(Tape& tape, const std::vector<const world::SceneGraph*>& graphs,
                            const dyn::Dynamics& d, Var x);

// d hit / d owner position: I - dir n^T / (n . dir).
Mat hit_jacobian(const world::LidarHit& h);

}  // namespace gcbf::gnn
