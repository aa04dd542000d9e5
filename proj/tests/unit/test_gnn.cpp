#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "gcbf/gnn/features.hpp"
#include "gcbf/gnn/gnn.hpp"
#include "gcbf/numerics/eigen_bridge.hpp"
#include "gcbf/numerics/gradcheck.hpp"

using namespace gcbf;
using namespace gcbf::gnn;
using dyn::EnvKind;
using world::World;

namespace {

Vec v2(double x, double y) { return Eigen::Vector2d(x, y); }

World di_world(std::vector<Vec> pos, std::vector<Vec> goals, std::vector<world::Obstacle> obs = {}) {
  World w;
  w.env = EnvKind::DoubleIntegrator;
  for (const Vec& p : pos) {
    Vec x = Vec::Zero(4);
    x.head(2) = p;
    w.states.push_back(x);
  }
  w.goals = std::move(goals);
  w.obstacles = std::move(obs);
  return w;
}

// Plain Eigen evaluation of one MLP, independent of the tape.
Mat mlp_eval(const Mlp& m, Mat x) {
  for (std::size_t k = 0; k < m.weights.size(); ++k) {
    x = (x * num::to_eigen(m.weights[k])).rowwise() + num::to_eigen(m.biases[k]).row(0);
    if (k + 1 < m.weights.size()) x = x.cwiseMax(0.0);
  }
  return x;
}

// Reorders agent i's incoming edges by perm (indices into its segment).
world::SceneGraph permute_segment(world::SceneGraph g, int i, const std::vector<std::size_t>& perm) {
  const std::size_t o = g.offsets[i];
  const auto edges = g.edges;
  const Mat f = g.edge_features;
  for (std::size_t k = 0; k < perm.size(); ++k) {
    g.edges[o + k] = edges[o + perm[k]];
    g.edge_features.row(static_cast<Eigen::Index>(o + k)) = f.row(static_cast<Eigen::Index>(o + perm[k]));
  }
  return g;
}

void perturb(GnnParams& p, num::Rng& rng, double scale) {
  for (Tensor* t : p.tensors()) {
    for (double& v : t->values()) v += scale * rng.normal();
  }
}

}  // namespace

TEST_CASE("parameter shapes and initialisation") {
  num::Rng a(3), b(3);
  const GnnParams p = init_params(a, EnvKind::DubinsCar);
  const GnnParams q = init_params(b, EnvKind::DubinsCar);
  const auto pt = p.tensors(), qt = q.tensors();
  REQUIRE(pt.size() == qt.size());
  for (std::size_t k = 0; k < pt.size(); ++k) CHECK(*pt[k] == *qt[k]);
  CHECK(p.tensor_names().size() == pt.size());
  CHECK(p.tensor_names().front() == "cert.psi1.w0");

  auto dims = [](const Mlp& m) {
    std::vector<std::size_t> d{m.in_dim()};
    for (const Tensor& w : m.weights) d.push_back(w.cols());
    return d;
  };
  CHECK(dims(p.cert.psi1) == std::vector<std::size_t>{10, 256, 256, 128});
  CHECK(dims(p.cert.psi2) == std::vector<std::size_t>{128, 128, 128, 1});
  CHECK(dims(p.cert.psi3) == std::vector<std::size_t>{128, 256, 256, 128});
  CHECK(dims(p.cert.psi4) == std::vector<std::size_t>{128, 256, 256, 1});
  CHECK(dims(p.policy.psi4) == std::vector<std::size_t>{128, 256, 256, 2});

  const Mat w1 = num::to_eigen(p.cert.psi1.weights[1]);
  CHECK((w1.transpose() * w1 - 2.0 * Mat::Identity(256, 256)).cwiseAbs().maxCoeff() < 1e-10);
  const Mat w0 = num::to_eigen(p.cert.psi1.weights[0]);  // 10 x 256: orthogonal rows
  CHECK((w0 * w0.transpose() - 2.0 * Mat::Identity(10, 10)).cwiseAbs().maxCoeff() < 1e-10);
  for (double v : p.policy.psi4.weights.back().values()) CHECK(v == 0.0);
  const Mat hout = num::to_eigen(p.cert.psi4.weights.back());
  CHECK(std::abs(hout.norm() - 0.01) < 1e-12);
}

TEST_CASE("singleton neighbourhood matches a direct evaluation") {
  num::Rng rng(4);
  GnnParams p = init_params(rng, EnvKind::DoubleIntegrator);
  perturb(p, rng, 0.01);
  const World w = di_world({v2(1, 1)}, {v2(1.3, 0.8)});
  const dyn::Dynamics d(dyn::DynamicsConfig::defaults(EnvKind::DoubleIntegrator));
  const auto g = world::build_graph(w, d);
  REQUIRE(g.n_edges() == 1);
  const auto att = attention_weights(p, g, 0);
  REQUIRE(att.size() == 1);
  CHECK(att[0].weight == 1.0);
  CHECK(att[0].sender == 1);
  const Mat z = world::edge_inputs(g);
  const double direct = mlp_eval(p.cert.psi4, mlp_eval(p.cert.psi3, mlp_eval(p.cert.psi1, z)))(0, 0);
  CHECK(gcbf_forward(p, g, 0) == doctest::Approx(direct).epsilon(1e-13));
}

TEST_CASE("certificate and policy are invariant to the order of incoming edges") {
  num::Rng rng(5);
  GnnParams p = init_params(rng, EnvKind::DoubleIntegrator);
  perturb(p, rng, 0.02);
  const World w = di_world({v2(1, 1), v2(1.2, 1), v2(1, 1.3), v2(0.8, 0.9)}, {v2(2, 2), v2(3, 3), v2(0, 3), v2(3, 0)},
                           {world::Obstacle::box(v2(1.0, 0.55), v2(0.4, 0.2))});
  const dyn::Dynamics d(dyn::DynamicsConfig::defaults(EnvKind::DoubleIntegrator));
  const auto g = world::build_graph(w, d);
  const std::size_t deg = g.offsets[1] - g.offsets[0];
  REQUIRE(deg >= 5);
  std::vector<std::size_t> perm(deg);
  std::iota(perm.rbegin(), perm.rend(), std::size_t{0});
  std::swap(perm[0], perm[2]);
  const auto gp = permute_segment(g, 0, perm);
  CHECK(std::abs(gcbf_forward(p, g, 0) - gcbf_forward(p, gp, 0)) < 1e-12);
  const Mat a = policy_deviation(p, g), b = policy_deviation(p, gp);
  CHECK((a.row(0) - b.row(0)).cwiseAbs().maxCoeff() < 1e-12);

  double total = 0;
  for (const auto& e : attention_weights(p, g, 0)) {
    CHECK(e.weight >= 0.0);
    CHECK(e.weight <= 1.0);
    total += e.weight;
  }
  CHECK(std::abs(total - 1.0) < 1e-12);
}

TEST_CASE("duplicated sender splits the attention mass evenly") {
  num::Rng rng(6);
  GnnParams p = init_params(rng, EnvKind::DoubleIntegrator);
  perturb(p, rng, 0.02);
  const World w = di_world({v2(1, 1)}, {v2(1.3, 0.8)});
  const dyn::Dynamics d(dyn::DynamicsConfig::defaults(EnvKind::DoubleIntegrator));
  const auto g = world::build_graph(w, d);
  auto dup = g;
  dup.edges.push_back(g.edges[0]);
  dup.offsets[1] = 2;
  dup.edge_features.conservativeResize(2, Eigen::NoChange);
  dup.edge_features.row(1) = g.edge_features.row(0);
  const auto att = attention_weights(p, dup, 0);
  CHECK(att[0].weight == 0.5);
  CHECK(att[1].weight == 0.5);
  CHECK(std::abs(gcbf_forward(p, dup, 0) - gcbf_forward(p, g, 0)) < 1e-13);
}

TEST_CASE("fresh policy reproduces the clamped nominal controller") {
  for (EnvKind env : dyn::kAllEnvs) {
    num::Rng rng(7);
    const GnnParams p = init_params(rng, env);
    const dyn::Dynamics d(dyn::DynamicsConfig::defaults(env));
    world::WorldParams wp;
    wp.area = 1.5;
    const World w = world::sample_scenario(env, 6, wp, 3, rng);
    const auto g = world::build_graph(w, d);
    std::vector<Vec> nom;
    for (int i = 0; i < w.n_agents(); ++i) nom.push_back(3.0 * d.nominal(w.states[i], w.goals[i]));
    const auto u = policy_actions(p, g, d, nom);
    for (int i = 0; i < w.n_agents(); ++i) CHECK(u[i] == d.clamp(nom[i]));
    const Vec h = certificate_values(p, g);
    CHECK(h.cwiseAbs().maxCoeff() < 1.0);
  }
}

TEST_CASE("policy output stays clamped at the limit") {
  num::Rng rng(8);
  GnnParams p = init_params(rng, EnvKind::DoubleIntegrator);
  Tensor& b = p.policy.psi4.biases.back();
  b[0] = 0.5;
  const dyn::Dynamics d(dyn::DynamicsConfig::defaults(EnvKind::DoubleIntegrator));
  const auto g = world::build_graph(di_world({v2(1, 1)}, {v2(2, 1)}), d);
  const Vec u = policy_forward(p, g, d, 0, v2(1.0, 0.0));
  CHECK(u[0] == 1.0);
  CHECK(u[1] == 0.0);
}

TEST_CASE("outputs depend only on incoming edges") {
  num::Rng rng(9);
  GnnParams p = init_params(rng, EnvKind::DoubleIntegrator);
  perturb(p, rng, 0.02);
  const dyn::Dynamics d(dyn::DynamicsConfig::defaults(EnvKind::DoubleIntegrator));
  World w = di_world({v2(1, 1), v2(1.3, 1), v2(3, 3)}, {v2(2, 2), v2(0, 0), v2(3.5, 3.5)});
  const auto g0 = world::build_graph(w, d);
  const Vec h0 = certificate_values(p, g0);
  const Mat u0 = policy_deviation(p, g0);
  w.states[2] << 3.1, 2.9, 0.4, -0.2;
  w.goals[2] = v2(0.5, 3.5);
  const auto g1 = world::build_graph(w, d);
  const Vec h1 = certificate_values(p, g1);
  const Mat u1 = policy_deviation(p, g1);
  CHECK(h1[0] == h0[0]);
  CHECK(h1[1] == h0[1]);
  CHECK(u1.topRows(2) == u0.topRows(2));
  CHECK(h1[2] != h0[2]);
}

TEST_CASE("state-driven edge inputs reproduce the graph and its Jacobian") {
  for (EnvKind env : {EnvKind::DoubleIntegrator, EnvKind::DubinsCar, EnvKind::Crazyflie}) {
    const dyn::Dynamics d(dyn::DynamicsConfig::defaults(env));
    num::Rng rng(11);
    world::WorldParams wp;
    wp.area = 1.2;
    World w = world::sample_scenario(env, 5, wp, 4, rng);
    for (auto& x : w.states) {
      for (int k = d.pos_dim(); k < d.n(); ++k) x[k] = 0.3 * rng.normal();
    }
    const auto g = world::build_graph(w, d);
    Mat xs(w.n_agents(), d.n());
    for (int i = 0; i < w.n_agents(); ++i) xs.row(i) = w.states[i].transpose();
    Tape t;
    const Var z = edge_inputs_from_states(t, {&g}, d, t.input(to_tensor(xs)));
    CHECK((num::to_eigen(z.value()) - world::edge_inputs(g)).cwiseAbs().maxCoeff() < 1e-15);

    // h_i of the certificate as a function of every agent state, graph rebuilt per probe.
    num::Rng pr(12);
    GnnParams p = init_params(pr, env);
    perturb(p, pr, 0.02);
    num::ScalarFn f = [&](Tape& tape, std::span<const Var> in) {
      World wi = w;
      const Mat xv = num::to_eigen(in[0].value());
      for (int i = 0; i < wi.n_agents(); ++i) wi.states[i] = xv.row(i).transpose();
      const auto gi = world::build_graph(wi, d);
      std::uint64_t topo = gi.hits.size();
      for (const auto& e : gi.edges) topo = topo * 1000003u + static_cast<std::uint64_t>(e.receiver * 4096 + e.sender);
      tape.mix_signature(topo);
      const Var zi = edge_inputs_from_states(tape, {&gi}, d, in[0]);
      const auto r = gnn_forward(tape, bind(tape, p.cert, false), zi, make_index(make_batch({&gi}).offsets));
      return tape.sum(r.out);
    };
    num::GradCheckOptions opts;
    opts.step = 1e-7;
    const Tensor point[] = {to_tensor(xs)};
    const auto rep = num::gradient_check(f, point, opts);
    INFO(dyn::env_name(env), " worst ", rep.worst_analytic, " vs ", rep.worst_numeric);
    CHECK(rep.passed);
    CHECK(rep.checked > rep.skipped);
  }
}

TEST_CASE("gradient of h_i vanishes outside its neighbourhood") {
  num::Rng rng(13);
  GnnParams p = init_params(rng, EnvKind::DoubleIntegrator);
  perturb(p, rng, 0.02);
  const dyn::Dynamics d(dyn::DynamicsConfig::defaults(EnvKind::DoubleIntegrator));
  const World w = di_world({v2(1, 1), v2(1.3, 1), v2(3, 3), v2(1.6, 1.2)}, {v2(2, 2), v2(0, 0), v2(3.5, 3.5), v2(0, 2)});
  const auto g = world::build_graph(w, d);
  Mat xs(4, 4);
  for (int i = 0; i < 4; ++i) xs.row(i) = w.states[i].transpose();
  Tape t;
  const Var x = t.input(to_tensor(xs));
  const Var z = edge_inputs_from_states(t, {&g}, d, x);
  const auto r = gnn_forward(t, bind(t, p.cert, false), z, make_index(make_batch({&g}).offsets));
  Tensor seed = Tensor::matrix(4, 1);
  seed[0] = 1.0;
  t.backward(r.out, seed);
  const Mat gx = num::to_eigen(t.grad(x));
  CHECK(gx.row(0).norm() > 0);
  CHECK(gx.row(1).norm() > 0);
  CHECK(gx.row(2).isZero(0));
  CHECK(gx.row(3).isZero(0));  // 0.64 away from agent 0
}

TEST_CASE("batched forward equals per-graph forward") {
  num::Rng rng(14);
  GnnParams p = init_params(rng, EnvKind::DoubleIntegrator);
  perturb(p, rng, 0.02);
  const dyn::Dynamics d(dyn::DynamicsConfig::defaults(EnvKind::DoubleIntegrator));
  world::WorldParams wp;
  wp.area = 1.5;
  const World a = world::sample_scenario(EnvKind::DoubleIntegrator, 4, wp, 2, rng);
  const World b = world::sample_scenario(EnvKind::DoubleIntegrator, 6, wp, 3, rng);
  const auto ga = world::build_graph(a, d), gb = world::build_graph(b, d);
  const GraphBatch batch = make_batch({&ga, &gb});
  Tape t;
  const auto r = gnn_forward(t, bind(t, p.cert, false), t.constant(to_tensor(batch.z)), make_index(batch.offsets));
  const Mat h = num::to_eigen(r.out.value());
  const Vec ha = certificate_values(p, ga), hb = certificate_values(p, gb);
  CHECK((h.col(0).head(4) - ha).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((h.col(0).tail(6) - hb).cwiseAbs().maxCoeff() < 1e-12);
}
