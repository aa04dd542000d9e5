#include "gcbf/world/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gcbf::world {

SceneGraph build_graph(const World& w, const dyn::Dynamics& dynamics) {
  SceneGraph g;
  g.env = w.env;
  const int n = w.n_agents();
  const int pd = w.pos_dim();
  const int sd = dynamics.n();
  g.n_agents = n;
  const auto dirs = ray_directions(pd, w.n_rays());
  std::vector<Vec> pos;
  for (int i = 0; i < n; ++i) pos.push_back(w.position(i));
  for (int i = 0; i < n; ++i) {
    auto h = cast_lidar(pos[i], i, w.obstacles, dirs, w.params.sense_radius);
    g.hits.insert(g.hits.end(), h.begin(), h.end());
  }

  g.kinds.assign(static_cast<std::size_t>(n), NodeKind::Agent);
  g.kinds.resize(static_cast<std::size_t>(2 * n), NodeKind::Goal);
  g.kinds.resize(static_cast<std::size_t>(2 * n) + g.hits.size(), NodeKind::Hit);
  g.node_states = w.states;
  auto padded = [&](const Vec& p) {
    Vec x = Vec::Zero(sd);
    x.head(pd) = p;
    return x;
  };
  for (int i = 0; i < n; ++i) g.node_states.push_back(padded(w.goals[i]));
  for (const LidarHit& h : g.hits) g.node_states.push_back(padded(h.position));

  std::vector<std::vector<int>> senders(static_cast<std::size_t>(n));
  for (auto [i, j] : close_pairs(pos, w.params.sense_radius)) {
    senders[i].push_back(j);
    senders[j].push_back(i);
  }
  for (int i = 0; i < n; ++i) senders[i].push_back(g.goal_node(i));
  for (std::size_t k = 0; k < g.hits.size(); ++k) {
    senders[g.hits[k].owner].push_back(2 * n + static_cast<int>(k));
  }
  g.offsets.push_back(0);
  for (int i = 0; i < n; ++i) {
    std::sort(senders[i].begin(), senders[i].end());
    for (int j : senders[i]) g.edges.push_back({i, j});
    g.offsets.push_back(g.edges.size());
  }

  std::vector<Vec> e;
  e.reserve(g.node_states.size());
  for (const Vec& x : g.node_states) e.push_back(dynamics.edge_state(x));
  g.edge_features.resize(static_cast<Eigen::Index>(g.edges.size()), dynamics.edge_dim());
  for (std::size_t k = 0; k < g.edges.size(); ++k) {
    g.edge_features.row(static_cast<Eigen::Index>(k)) = (e[g.edges[k].sender] - e[g.edges[k].receiver]).transpose();
  }
  return g;
}

Mat edge_inputs(const SceneGraph& g) {
  const Eigen::Index ed = g.edge_features.cols();
  Mat z = Mat::Zero(static_cast<Eigen::Index>(g.edges.size()), 6 + ed);
  for (std::size_t k = 0; k < g.edges.size(); ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    z(row, static_cast<int>(g.kinds[g.edges[k].receiver])) = 1.0;
    z(row, 3 + static_cast<int>(g.kinds[g.edges[k].sender])) = 1.0;
    z.block(row, 6, 1, ed) = g.edge_features.row(row);
  }
  return z;
}

NeighborSet m_closest(const SceneGraph& g, int i, int m) {
  NeighborSet ns;
  const int pd = dyn::env_shape(g.env).pos_dim;
  const Vec pi = g.node_states[i].head(pd);
  std::vector<std::pair<double, int>> cand;
  for (std::size_t k = g.offsets[i]; k < g.offsets[i + 1]; ++k) {
    const int j = g.edges[k].sender;
    if (g.kinds[j] == NodeKind::Goal) continue;
    cand.emplace_back((g.node_states[j].head(pd) - pi).norm(), j);
  }
  std::sort(cand.begin(), cand.end());
  for (const auto& c : cand) ns.within.push_back(c.second);
  ns.closest.push_back(i);
  for (std::size_t k = 0; k < cand.size() && static_cast<int>(ns.closest.size()) < m; ++k) {
    ns.closest.push_back(cand[k].second);
  }
  return ns;
}

int default_m(double sense_radius, double agent_radius, int pos_dim) {
  const double step = agent_radius / 2;
  const int half = static_cast<int>(std::floor(sense_radius / step));
  std::vector<std::pair<double, Vec>> cand;
  const int zr = pos_dim == 3 ? half : 0;
  for (int x = -half; x <= half; ++x) {
    for (int y = -half; y <= half; ++y) {
      for (int z = -zr; z <= zr; ++z) {
        Vec p(pos_dim);
        p[0] = x * step;
        p[1] = y * step;
        if (pos_dim == 3) p[2] = z * step;
        const double d = p.norm();
        if (d < sense_radius) cand.emplace_back(d, p);
      }
    }
  }
  std::stable_sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Vec> chosen;
  const double min_sep = 2 * agent_radius - 1e-12;
  for (const auto& [d, p] : cand) {
    bool ok = true;
    for (const Vec& q : chosen) {
      if ((p - q).norm() < min_sep) {
        ok = false;
        break;
      }
    }
    if (ok) chosen.push_back(p);
  }
  return static_cast<int>(chosen.size());
}

}  // namespace gcbf::world
