#pragma once

// Gradient checks of both networks and both loss terms with respect to the
// network parameters, on small random scenes. Shared by the unit tests and
// the acceptance binary.

#include <string>
#include <vector>

#include "gcbf/numerics/gradcheck.hpp"
#include "gcbf/train/trainer.hpp"

namespace suite {

using namespace gcbf;

enum class Target { Certificate, Policy, CbfLoss, CtrlLoss };

inline const char* target_name(Target t) {
  switch (t) {
    case Target::Certificate: return "h_theta";
    case Target::Policy: return "pi_phi";
    case Target::CbfLoss: return "cbf loss";
    case Target::CtrlLoss: return "ctrl loss";
  }
  return "?";
}

struct Scene {
  gnn::GnnParams params;
  train::Buffer buffer;
  train::LabeledDataset labels;
  train::TrainConfig cfg;
};

// Perturbed parameters (so the zero policy head does not hide gradients) and a
// short crowded rollout with labels and QP targets.
inline Scene make_scene(std::uint64_t seed, dyn::EnvKind env = dyn::EnvKind::DoubleIntegrator) {
  Scene s;
  num::Rng rng(seed);
  s.params = gnn::init_params(rng, env);
  for (num::Tensor* t : s.params.tensors()) {
    const double scale = t->rows() == 1 ? 0.05 : 0.05 / std::sqrt(static_cast<double>(t->rows()));
    for (double& v : t->values()) v += scale * rng.normal();
  }
  s.cfg = train::TrainConfig::defaults(env);
  s.cfg.n_scenarios = 1;
  s.cfg.rollout_length = 3;
  s.cfg.n_agents = 4;
  s.cfg.n_obstacles = 2;
  s.cfg.world.area = 1.0;
  s.cfg.horizon = 4;
  s.cfg.eta_ctrl = 1.0;  // keeps the control term at the scale of the others
  const dyn::Dynamics d(dyn::DynamicsConfig::defaults(env));
  s.buffer = train::collect_onpolicy(s.params, d, s.cfg, rng);
  s.labels = train::label_invariance(s.buffer, s.params, d, s.cfg.horizon);
  return s;
}

inline num::GradCheckReport check(const Scene& s, Target target, std::uint64_t seed, std::size_t coords) {
  const dyn::Dynamics d(dyn::DynamicsConfig::defaults(s.params.env));
  const std::size_t nc = s.params.cert_tensor_count();
  const auto all = s.params.tensors();
  const bool cert_side = target == Target::Certificate;
  // The control loss does not depend on the certificate, so only the policy is probed.
  const bool probe_cert = target == Target::Certificate || target == Target::CbfLoss;
  const bool probe_pol = target != Target::Certificate;
  auto probed = [&](std::size_t k) { return k < nc ? probe_cert : probe_pol; };
  std::vector<num::Tensor> point;
  for (std::size_t k = 0; k < all.size(); ++k) {
    if (probed(k)) point.push_back(*all[k]);
  }
  train::Minibatch mb;
  for (std::size_t k = 0; k < s.buffer.items.size(); ++k) {
    mb.items.push_back(&s.buffer.items[k]);
    mb.labels.push_back(&s.labels.labels[k]);
  }
  num::ScalarFn f = [&](num::Tape& tape, std::span<const num::Var> in) {
    gnn::GnnParams p = s.params;
    auto pts = p.tensors();
    std::size_t o = 0;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      if (probed(k)) *pts[k] = in[o++].value();
    }
    // Rebind the probed tensors as the given inputs, the rest as constants.
    auto bind_mixed = [&](const gnn::GnnNet& net, bool probed, std::size_t& cursor) {
      gnn::NetVars v = gnn::bind(tape, net, false);
      if (!probed) return v;
      for (gnn::MlpVars* m : {&v.psi1, &v.psi2, &v.psi3, &v.psi4}) {
        for (std::size_t l = 0; l < m->weights.size(); ++l) {
          m->weights[l] = in[cursor++];
          m->biases[l] = in[cursor++];
        }
      }
      return v;
    };
    std::size_t cursor = 0;
    const gnn::NetVars cert = bind_mixed(p.cert, probe_cert, cursor);
    const gnn::NetVars pol = bind_mixed(p.policy, probe_pol, cursor);
    if (target == Target::Certificate || target == Target::Policy) {
      const auto& g = s.buffer.items[1].graph;
      const gnn::GraphBatch b = gnn::make_batch({&g});
      const auto r = gnn::gnn_forward(tape, cert_side ? cert : pol, tape.constant(gnn::to_tensor(b.z)),
                                      gnn::make_index(b.offsets));
      return tape.sum(r.out);
    }
    const auto lv = train::build_losses(tape, cert, pol, mb, d, s.cfg);
    if (target == Target::CtrlLoss) return lv.ctrl;
    return tape.add(tape.add(lv.deriv, lv.safe), lv.unsafe);
  };
  num::GradCheckOptions opts;
  opts.step = 1e-5;
  opts.max_coords_per_input = coords;
  opts.seed = seed;
  return num::gradient_check(f, point, opts);
}

}  // namespace suite
