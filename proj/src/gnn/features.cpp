#include "gcbf/gnn/features.hpp"

#include <cmath>

#include "gcbf/error.hpp"
#include "gcbf/numerics/eigen_bridge.hpp"

namespace gcbf::gnn {

namespace {

bool identity_edge_map(dyn::EnvKind env) {
  return env == dyn::EnvKind::SingleIntegrator || env == dyn::EnvKind::DoubleIntegrator ||
         env == dyn::EnvKind::LinearDrone;
}

}  // namespace

Var row_affine(Tape& tape, Var d, const std::vector<Mat>& jac) {
  const std::size_t rows = d.rows(), k = d.cols();
  if (jac.size() != rows) throw ShapeError("row_affine needs one Jacobian per row");
  const auto out = static_cast<std::size_t>(rows ? jac[0].rows() : 0);
  Var acc;
  for (std::size_t c = 0; c < k; ++c) {
    Tensor coef = Tensor::matrix(rows, out);
    for (std::size_t r = 0; r < rows; ++r) {
      if (jac[r].cols() != static_cast<Eigen::Index>(k) || jac[r].rows() != static_cast<Eigen::Index>(out)) {
        throw ShapeError("row_affine Jacobian shape mismatch");
      }
      for (std::size_t o = 0; o < out; ++o) {
        coef(r, o) = jac[r](static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(c));
      }
    }
    const Var term = tape.mul(tape.slice(d, num::Along::Columns, c, c + 1), tape.constant(std::move(coef)));
    acc = acc.valid() ? tape.add(acc, term) : term;
  }
  if (!acc.valid()) return tape.constant(Tensor::matrix(rows, out));
  return acc;
}

Var linearized(Tape& tape, const Tensor& exact, Var x, const std::vector<Mat>& jac) {
  const Var delta = tape.sub(x, tape.constant(x.value()));
  return tape.add(tape.constant(exact), row_affine(tape, delta, jac));
}

Mat hit_jacobian(const world::LidarHit& h) {
  const auto pd = h.direction.size();
  const double nd = h.normal.dot(h.direction);
  if (std::abs(nd) < 1e-9) return Mat::Identity(pd, pd);
  return Mat::Identity(pd, pd) - h.direction * h.normal.transpose() / nd;
}

Var edge_inputs_from_states(Tape& tape, const std::vector<const world::SceneGraph*>& graphs,
                            const dyn::Dynamics& d, Var x) {
  const dyn::EnvKind env = d.config().env;
  const int rho = d.edge_dim();
  const int pd = d.pos_dim();
  std::size_t n_agents = 0, n_hits = 0;
  for (const auto* g : graphs) {
    n_agents += static_cast<std::size_t>(g->n_agents);
    n_hits += g->hits.size();
  }
  if (x.rows() != n_agents || x.cols() != static_cast<std::size_t>(d.n())) {
    throw ShapeError("agent state matrix " + x.value().shape_string() + " does not match the graphs");
  }
  const Mat xv = num::to_eigen(x.value());

  Var e_agents = x;
  if (!identity_edge_map(env)) {
    Mat exact(xv.rows(), rho);
    std::vector<Mat> jac;
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
      const Vec xr = xv.row(r).transpose();
      exact.row(r) = d.edge_state(xr).transpose();
      jac.push_back(d.edge_state_jacobian(xr));
    }
    e_agents = linearized(tape, num::from_eigen(exact), x, jac);
  }

  Mat goals(static_cast<Eigen::Index>(n_agents), rho);
  std::vector<std::size_t> owners;
  Mat hit_pos(static_cast<Eigen::Index>(n_hits), pd);
  std::vector<Mat> hit_jac;
  std::vector<std::size_t> send, recv;
  std::size_t a0 = 0, h0 = 0;
  for (const auto* g : graphs) {
    const int n = g->n_agents;
    for (int i = 0; i < n; ++i) {
      goals.row(static_cast<Eigen::Index>(a0) + i) = d.edge_state(g->node_states[g->goal_node(i)]).transpose();
    }
    for (std::size_t k = 0; k < g->hits.size(); ++k) {
      owners.push_back(a0 + static_cast<std::size_t>(g->hits[k].owner));
      hit_pos.row(static_cast<Eigen::Index>(h0 + k)) = g->hits[k].position.transpose();
      hit_jac.push_back(hit_jacobian(g->hits[k]));
    }
    auto global = [&](int node) -> std::size_t {
      if (node < n) return a0 + static_cast<std::size_t>(node);
      if (node < 2 * n) return n_agents + a0 + static_cast<std::size_t>(node - n);
      return 2 * n_agents + h0 + static_cast<std::size_t>(node - 2 * n);
    };
    for (const auto& e : g->edges) {
      send.push_back(global(e.sender));
      recv.push_back(global(e.receiver));
    }
    a0 += static_cast<std::size_t>(n);
    h0 += g->hits.size();
  }

  std::vector<Var> rows{e_agents, tape.constant(num::from_eigen(goals))};
  if (n_hits > 0) {
    const Var owner_pos = tape.gather_rows(tape.slice(x, num::Along::Columns, 0, static_cast<std::size_t>(pd)),
                                           make_index(std::move(owners)));
    Var hits = linearized(tape, num::from_eigen(hit_pos), owner_pos, hit_jac);
    if (rho > pd) {
      const Var pad = tape.constant(Tensor::matrix(n_hits, static_cast<std::size_t>(rho - pd)));
      const Var parts[] = {hits, pad};
      hits = tape.concat(parts, num::Along::Columns);
    }
    rows.push_back(hits);
  }
  const Var nodes = tape.concat(rows, num::Along::Rows);
  const Var ef = tape.sub(tape.gather_rows(nodes, make_index(std::move(send))),
                          tape.gather_rows(nodes, make_index(std::move(recv))));

  const GraphBatch b = make_batch(graphs);
  const Var onehot = tape.constant(to_tensor(b.z.leftCols(6)));
  const Var parts[] = {onehot, ef};
  return tape.concat(parts, num::Along::Columns);
}

}  // namespace gcbf::gnn
