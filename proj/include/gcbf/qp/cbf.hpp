#pragma once

#include <utility>
#include <vector>

#include "gcbf/gnn/gnn.hpp"
#include "gcbf/qp/qp.hpp"
#include "gcbf/world/graph.hpp"

namespace gcbf::qp {

struct ControlResult {
  std::vector<Vec> u;
  QpStatus status = QpStatus::Optimal;
  bool relaxed = false;
  int rows = 0;
};

// h_i and its nonzero state gradients: grads[i] lists (j, dh_i/dx_j) for
// agent i itself and every agent sender of i.
struct CertificateGradients {
  Vec h;
  std::vector<std::vector<std::pair<int, Vec>>> grads;
};

// Agents whose neighbourhoods share no agent are seeded together in one
// backward pass, so the pass count is the colour count, not N.
CertificateGradients certificate_gradients(const gnn::GnnParams& p, const world::SceneGraph& g,
                                           const dyn::Dynamics& d);
// Colour of every agent; agents i, k share a colour only if
// ({i} + agent senders of i) and ({k} + agent senders of k) are disjoint.
std::vector<int> neighbourhood_colouring(const world::SceneGraph& g);

// Joint QP over all agents: minimise sum_i |u_i - u_nom_i|^2 inside the box,
// one row per agent sum_j dh_i/dx_j (f_j + g_j u_j) >= -alpha h_i. Relaxed
// with slack penalty 1e3 when infeasible.
QpProblem certificate_qp(const std::vector<Vec>& states, const CertificateGradients& cg, const dyn::Dynamics& d,
                         double alpha, const std::vector<Vec>& u_nom);
ControlResult solve_certificate_qp(const std::vector<Vec>& states, const CertificateGradients& cg,
                                   const dyn::Dynamics& d, double alpha, const std::vector<Vec>& u_nom);

ControlResult pi_qp_target(const world::SceneGraph& g, const gnn::GnnParams& p, const dyn::Dynamics& d,
                           double alpha, const std::vector<Vec>& u_nom);

// Hand-crafted pairwise barrier: h0 = |p_i - p_j|^2 - (2r)^2 and
// h = h0_dot + alpha0 h0 (h = h0 for the single integrator).
struct HocbfParams {
  double alpha0 = 10.0;
  double alpha = 1.0;
  static HocbfParams defaults(dyn::EnvKind env, double alpha);
};

struct HocbfValue {
  double h0 = 0.0;
  double h = 0.0;
};
HocbfValue hocbf_value(const dyn::Dynamics& d, const Vec& x_i, const Vec& x_j, double alpha0, double r);

// a_i u_i + a_j u_j >= rhs, with rhs = -(alpha h + dh/dx_i f_i + dh/dx_j f_j).
// A static obstacle point has a_j = 0 and no drift.
struct PairRow {
  Vec a_i;
  Vec a_j;
  double rhs = 0.0;
  double h = 0.0;
};
PairRow pair_row(const dyn::Dynamics& d, const Vec& x_i, const Vec& x_j, const HocbfParams& hp, double r);
PairRow obstacle_row(const dyn::Dynamics& d, const Vec& x_i, const Vec& point, const HocbfParams& hp, double r);

// Halved shares of a pair row for agent i and agent j: each keeps its own
// term and half of the right-hand side.
std::pair<double, double> shared_rhs(const PairRow& row);

ControlResult centralized_cbfqp_controller(const world::World& w, const dyn::Dynamics& d, const HocbfParams& hp);
ControlResult decentralized_cbfqp_controller(const world::World& w, const dyn::Dynamics& d, const HocbfParams& hp,
                                             int i);

}  // namespace gcbf::qp
