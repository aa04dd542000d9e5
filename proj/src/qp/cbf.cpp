#include "gcbf/qp/cbf.hpp"

#include <algorithm>
#include <set>

#include "gcbf/error.hpp"
#include "gcbf/gnn/features.hpp"
#include "gcbf/numerics/eigen_bridge.hpp"

namespace gcbf::qp {

namespace {

constexpr double kSlackPenalty = 1e3;

std::vector<std::set<int>> dependency_sets(const world::SceneGraph& g) {
  std::vector<std::set<int>> deps(static_cast<std::size_t>(g.n_agents));
  for (int i = 0; i < g.n_agents; ++i) {
    deps[i].insert(i);
    for (std::size_t k = g.offsets[i]; k < g.offsets[i + 1]; ++k) {
      if (g.kinds[g.edges[k].sender] == world::NodeKind::Agent) deps[i].insert(g.edges[k].sender);
    }
  }
  return deps;
}

// Least-squares objective sum |u_i - u_nom_i|^2 (scaled by 1/2) with the box.
QpProblem nominal_objective(const dyn::Dynamics& d, const std::vector<Vec>& u_nom) {
  const int m = d.m();
  const int n = static_cast<int>(u_nom.size()) * m;
  QpProblem p;
  p.H = Mat::Identity(n, n);
  p.f = Vec(n);
  p.lo = Vec(n);
  p.hi = Vec(n);
  for (std::size_t i = 0; i < u_nom.size(); ++i) {
    const auto o = static_cast<Eigen::Index>(i) * m;
    p.f.segment(o, m) = -u_nom[i];
    p.lo.segment(o, m) = d.config().u_lo;
    p.hi.segment(o, m) = d.config().u_hi;
  }
  return p;
}

ControlResult unpack(const QpSolution& s, int agents, int m, int rows) {
  ControlResult r;
  r.status = s.status;
  r.relaxed = s.relaxed;
  r.rows = rows;
  for (int i = 0; i < agents; ++i) r.u.push_back(s.u.segment(static_cast<Eigen::Index>(i) * m, m));
  return r;
}

struct PairTerms {
  double h0, h;
  Vec dh_i, dh_j;  // gradients w.r.t. the two states (dh_j empty for a static point)
};

PairTerms pair_terms(const dyn::Dynamics& d, const Vec& x_i, const Vec* x_j, const Vec& p_j, double alpha0,
                     double r) {
  const int pd = d.pos_dim(), n = d.n();
  const Vec dp = x_i.head(pd) - p_j;
  PairTerms t;
  t.h0 = dp.squaredNorm() - 4.0 * r * r;
  Mat P = Mat::Zero(pd, n);
  P.leftCols(pd).setIdentity();
  if (d.env() == dyn::EnvKind::SingleIntegrator) {
    t.h = t.h0;
    t.dh_i = 2.0 * P.transpose() * dp;
    if (x_j) t.dh_j = -t.dh_i;
    return t;
  }
  const Vec dv = d.velocity(x_i) - (x_j ? d.velocity(*x_j) : Vec::Zero(pd));
  t.h = 2.0 * dp.dot(dv) + alpha0 * t.h0;
  t.dh_i = P.transpose() * (2.0 * dv + 2.0 * alpha0 * dp) + 2.0 * d.velocity_jacobian(x_i).transpose() * dp;
  if (x_j) t.dh_j = -P.transpose() * (2.0 * dv + 2.0 * alpha0 * dp) - 2.0 * d.velocity_jacobian(*x_j).transpose() * dp;
  return t;
}

}  // namespace

std::vector<int> neighbourhood_colouring(const world::SceneGraph& g) {
  const auto deps = dependency_sets(g);
  std::vector<int> colour(static_cast<std::size_t>(g.n_agents), -1);
  std::vector<std::set<int>> used;  // agents covered by each colour
  for (int i = 0; i < g.n_agents; ++i) {
    for (std::size_t c = 0;; ++c) {
      if (c == used.size()) used.emplace_back();
      const bool clash = std::any_of(deps[i].begin(), deps[i].end(), [&](int j) { return used[c].count(j) > 0; });
      if (!clash) {
        colour[i] = static_cast<int>(c);
        used[c].insert(deps[i].begin(), deps[i].end());
        break;
      }
    }
  }
  return colour;
}

CertificateGradients certificate_gradients(const gnn::GnnParams& p, const world::SceneGraph& g,
                                           const dyn::Dynamics& d) {
  const int n_agents = g.n_agents;
  Mat xs(n_agents, d.n());
  for (int i = 0; i < n_agents; ++i) xs.row(i) = g.node_states[i].transpose();
  num::Tape tape;
  const num::Var x = tape.input(gnn::to_tensor(xs));
  const num::Var z = gnn::edge_inputs_from_states(tape, {&g}, d, x);
  const auto out = gnn::gnn_forward(tape, gnn::bind(tape, p.cert, false), z, gnn::make_index(gnn::make_batch({&g}).offsets));

  CertificateGradients cg;
  cg.h = num::to_eigen(out.out.value()).col(0);
  cg.grads.resize(static_cast<std::size_t>(n_agents));
  const auto colour = neighbourhood_colouring(g);
  const auto deps = dependency_sets(g);
  const int colours = n_agents ? *std::max_element(colour.begin(), colour.end()) + 1 : 0;
  for (int c = 0; c < colours; ++c) {
    num::Tensor seed = num::Tensor::matrix(static_cast<std::size_t>(n_agents), 1);
    for (int i = 0; i < n_agents; ++i) seed[static_cast<std::size_t>(i)] = colour[i] == c ? 1.0 : 0.0;
    tape.backward(out.out, seed);
    const Mat gx = num::to_eigen(tape.grad(x));
    for (int i = 0; i < n_agents; ++i) {
      if (colour[i] != c) continue;
      for (int j : deps[i]) cg.grads[i].emplace_back(j, gx.row(j).transpose());
    }
  }
  return cg;
}

QpProblem certificate_qp(const std::vector<Vec>& states, const CertificateGradients& cg, const dyn::Dynamics& d,
                         double alpha, const std::vector<Vec>& u_nom) {
  const int agents = static_cast<int>(states.size());
  const int m = d.m();
  QpProblem p = nominal_objective(d, u_nom);
  std::vector<Vec> f(states.size());
  std::vector<Mat> g(states.size());
  for (int j = 0; j < agents; ++j) d.affine(states[j], f[j], g[j]);
  p.A = Mat::Zero(agents, agents * m);
  p.b = Vec(agents);
  for (int i = 0; i < agents; ++i) {
    double drift = 0.0;
    for (const auto& [j, grad] : cg.grads[i]) {
      drift += grad.dot(f[j]);
      p.A.block(i, j * m, 1, m) += grad.transpose() * g[j];
    }
    p.b[i] = -alpha * cg.h[i] - drift;
  }
  return p;
}

ControlResult solve_certificate_qp(const std::vector<Vec>& states, const CertificateGradients& cg,
                                   const dyn::Dynamics& d, double alpha, const std::vector<Vec>& u_nom) {
  const int agents = static_cast<int>(states.size());
  return unpack(solve_qp_relaxed(certificate_qp(states, cg, d, alpha, u_nom), kSlackPenalty), agents, d.m(), agents);
}

ControlResult pi_qp_target(const world::SceneGraph& g, const gnn::GnnParams& p, const dyn::Dynamics& d,
                           double alpha, const std::vector<Vec>& u_nom) {
  const auto cg = certificate_gradients(p, g, d);
  const std::vector<Vec> states(g.node_states.begin(), g.node_states.begin() + g.n_agents);
  return solve_certificate_qp(states, cg, d, alpha, u_nom);
}

HocbfParams HocbfParams::defaults(dyn::EnvKind env, double alpha) {
  switch (env) {
    case dyn::EnvKind::DoubleIntegrator: return {10.0, alpha};
    case dyn::EnvKind::DubinsCar: return {5.0, alpha};
    case dyn::EnvKind::LinearDrone:
    case dyn::EnvKind::Crazyflie: return {3.0, alpha};
    case dyn::EnvKind::SingleIntegrator: return {1.0, alpha};  // alpha0 unused
  }
  return {1.0, alpha};
}

HocbfValue hocbf_value(const dyn::Dynamics& d, const Vec& x_i, const Vec& x_j, double alpha0, double r) {
  const auto t = pair_terms(d, x_i, &x_j, x_j.head(d.pos_dim()), alpha0, r);
  return {t.h0, t.h};
}

PairRow pair_row(const dyn::Dynamics& d, const Vec& x_i, const Vec& x_j, const HocbfParams& hp, double r) {
  const auto t = pair_terms(d, x_i, &x_j, x_j.head(d.pos_dim()), hp.alpha0, r);
  Vec fi, fj;
  Mat gi, gj;
  d.affine(x_i, fi, gi);
  d.affine(x_j, fj, gj);
  return {gi.transpose() * t.dh_i, gj.transpose() * t.dh_j, -(hp.alpha * t.h + t.dh_i.dot(fi) + t.dh_j.dot(fj)), t.h};
}

PairRow obstacle_row(const dyn::Dynamics& d, const Vec& x_i, const Vec& point, const HocbfParams& hp, double r) {
  const auto t = pair_terms(d, x_i, nullptr, point, hp.alpha0, r);
  Vec fi;
  Mat gi;
  d.affine(x_i, fi, gi);
  return {gi.transpose() * t.dh_i, Vec::Zero(d.m()), -(hp.alpha * t.h + t.dh_i.dot(fi)), t.h};
}

std::pair<double, double> shared_rhs(const PairRow& row) { return {0.5 * row.rhs, 0.5 * row.rhs}; }

ControlResult centralized_cbfqp_controller(const world::World& w, const dyn::Dynamics& d, const HocbfParams& hp) {
  const int agents = w.n_agents(), m = d.m();
  const double r = w.params.agent_radius;
  std::vector<Vec> u_nom, pos;
  for (int i = 0; i < agents; ++i) {
    u_nom.push_back(d.nominal(w.states[i], w.goals[i]));
    pos.push_back(w.position(i));
  }
  QpProblem p = nominal_objective(d, u_nom);
  std::vector<Eigen::RowVectorXd> rows;
  std::vector<double> rhs;
  for (auto [i, j] : world::close_pairs(pos, w.params.sense_radius)) {
    const PairRow row = pair_row(d, w.states[i], w.states[j], hp, r);
    Eigen::RowVectorXd a = Eigen::RowVectorXd::Zero(agents * m);
    a.segment(i * m, m) = row.a_i.transpose();
    a.segment(j * m, m) = row.a_j.transpose();
    rows.push_back(a);
    rhs.push_back(row.rhs);
  }
  const auto dirs = world::ray_directions(w.pos_dim(), w.n_rays());
  for (int i = 0; i < agents; ++i) {
    for (const auto& hit : world::cast_lidar(pos[i], i, w.obstacles, dirs, w.params.sense_radius)) {
      const PairRow row = obstacle_row(d, w.states[i], hit.position, hp, r);
      Eigen::RowVectorXd a = Eigen::RowVectorXd::Zero(agents * m);
      a.segment(i * m, m) = row.a_i.transpose();
      rows.push_back(a);
      rhs.push_back(row.rhs);
    }
  }
  p.A.resize(static_cast<Eigen::Index>(rows.size()), agents * m);
  p.b.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    p.A.row(static_cast<Eigen::Index>(k)) = rows[k];
    p.b[static_cast<Eigen::Index>(k)] = rhs[k];
  }
  return unpack(solve_qp_relaxed(p, kSlackPenalty), agents, m, static_cast<int>(rows.size()));
}

ControlResult decentralized_cbfqp_controller(const world::World& w, const dyn::Dynamics& d, const HocbfParams& hp,
                                             int i) {
  const int m = d.m();
  const double r = w.params.agent_radius;
  const double R = w.params.sense_radius;
  QpProblem p = nominal_objective(d, {d.nominal(w.states[i], w.goals[i])});
  std::vector<Vec> a;
  std::vector<double> rhs;
  const Vec pi = w.position(i);
  for (int j = 0; j < w.n_agents(); ++j) {
    if (j == i || (w.position(j) - pi).norm() >= R) continue;
    const PairRow row = pair_row(d, w.states[i], w.states[j], hp, r);
    a.push_back(row.a_i);
    rhs.push_back(shared_rhs(row).first);
  }
  const auto dirs = world::ray_directions(w.pos_dim(), w.n_rays());
  for (const auto& hit : world::cast_lidar(pi, i, w.obstacles, dirs, R)) {
    const PairRow row = obstacle_row(d, w.states[i], hit.position, hp, r);
    a.push_back(row.a_i);
    rhs.push_back(row.rhs);
  }
  p.A.resize(static_cast<Eigen::Index>(a.size()), m);
  p.b.resize(static_cast<Eigen::Index>(a.size()));
  for (std::size_t k = 0; k < a.size(); ++k) {
    p.A.row(static_cast<Eigen::Index>(k)) = a[k].transpose();
    p.b[static_cast<Eigen::Index>(k)] = rhs[k];
  }
  return unpack(solve_qp_relaxed(p, kSlackPenalty), 1, m, static_cast<int>(a.size()));
}

}  // namespace gcbf::qp
