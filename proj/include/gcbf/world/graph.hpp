#pragma once

#include <vector>

#include "gcbf/world/world.hpp"

namespace gcbf::world {

enum class NodeKind : int { Agent = 0, Goal = 1, Hit = 2 };

struct Edge {
  int receiver;  // always an agent
  int sender;    // node index
};

// Nodes are laid out as agents [0, N), goals [N, 2N), hits [2N, 2N + H).
// Edges are sorted by receiver and then sender, and agent i's incoming edges
// are edges[offsets[i], offsets[i+1]).
struct SceneGraph {
  dyn::EnvKind env = dyn::EnvKind::DoubleIntegrator;
  int n_agents = 0;
  std::vector<NodeKind> kinds;
  std::vector<Vec> node_states;  // zero-padded n-dim state of every node
  std::vector<LidarHit> hits;
  std::vector<Edge> edges;
  std::vector<std::size_t> offsets;
  Mat edge_features;  // |E| x edge_dim, e(x_j) - e(x_i)

  int n_nodes() const { return static_cast<int>(kinds.size()); }
  int n_edges() const { return static_cast<int>(edges.size()); }
  int goal_node(int i) const { return n_agents + i; }
};

// Agent j -> agent i iff |p_i - p_j| < R; each hit -> its owner; goal i -> agent i.
SceneGraph build_graph(const World& w, const dyn::Dynamics& dynamics);

// Edge-feature encoder input z_ij = [onehot(v_i), onehot(v_j), e_ij].
Mat edge_inputs(const SceneGraph& g);

struct NeighborSet {
  std::vector<int> within;   // senders within R (agents and hits), nearest first
  std::vector<int> closest;  // agent i followed by at most M-1 nearest senders
};

// Ties are broken by the smaller node index.
NeighborSet m_closest(const SceneGraph& g, int i, int m);

// Largest greedy packing of points pairwise >= 2r apart in a ball of radius R
// (the agent at the centre included), used as the default M.
int default_m(double sense_radius, double agent_radius, int pos_dim);

}  // namespace gcbf::world
