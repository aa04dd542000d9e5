#include "gcbf/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <string>

#include "gcbf/error.hpp"
#include "gcbf/gnn/features.hpp"
#include "gcbf/numerics/eigen_bridge.hpp"
#include "gcbf/numerics/parallel.hpp"
#include "gcbf/qp/cbf.hpp"

namespace gcbf::train {

namespace {

using num::Tensor;
using num::Var;

using num::parallel_for;

Tensor stack_rows(const std::vector<const std::vector<Vec>*>& parts, int cols) {
  std::size_t rows = 0;
  for (const auto* p : parts) rows += p->size();
  Tensor t = Tensor::matrix(rows, static_cast<std::size_t>(cols));
  std::size_t r = 0;
  for (const auto* p : parts) {
    for (const Vec& v : *p) {
      for (int c = 0; c < cols; ++c) t(r, static_cast<std::size_t>(c)) = v[c];
      ++r;
    }
  }
  return t;
}

std::uint64_t fnv_mix(std::uint64_t h, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) {
    h ^= (v >> (8 * k)) & 0xffu;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t topology_hash(const world::SceneGraph& g) {
  std::uint64_t h = fnv_mix(1469598103934665603ull, g.hits.size());
  for (const auto& e : g.edges) h = fnv_mix(h, (static_cast<std::uint64_t>(e.receiver) << 32) ^ static_cast<std::uint64_t>(e.sender));
  for (const auto& hit : g.hits) {
    for (Eigen::Index k = 0; k < hit.normal.size(); ++k) h = fnv_mix(h, static_cast<std::uint64_t>(hit.normal[k] > 0) + 2 * (hit.normal[k] < 0));
  }
  return h;
}

std::vector<Tensor> copy_tensors(const std::vector<const Tensor*>& ts, std::size_t begin, std::size_t end) {
  std::vector<Tensor> out;
  for (std::size_t k = begin; k < end; ++k) out.push_back(*ts[k]);
  return out;
}

}  // namespace

TrainConfig TrainConfig::defaults(dyn::EnvKind env) {
  TrainConfig c;
  c.env = env;
  switch (env) {
    case dyn::EnvKind::SingleIntegrator:
      c.horizon = 1, c.eta_ctrl = 1e-4, c.lr_policy = 1e-5, c.lr_cbf = 1e-5;
      break;
    case dyn::EnvKind::DoubleIntegrator:
      c.horizon = 32, c.eta_ctrl = 1e-4, c.lr_policy = 1e-5, c.lr_cbf = 1e-5;
      break;
    case dyn::EnvKind::DubinsCar:
      c.horizon = 32, c.eta_ctrl = 1e-5, c.lr_policy = 3e-5, c.lr_cbf = 3e-5;
      break;
    case dyn::EnvKind::LinearDrone:
      c.horizon = 32, c.eta_ctrl = 1e-3, c.lr_policy = 1e-5, c.lr_cbf = 1e-5;
      break;
    case dyn::EnvKind::Crazyflie:
      c.horizon = 32, c.eta_ctrl = 3e-5, c.lr_policy = 1e-5, c.lr_cbf = 1e-4;
      break;
  }
  c.world.area = dyn::env_shape(env).pos_dim == 2 ? 4.0 : 2.0;
  return c;
}

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be positive");
  };
  auto nonneg = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be non-negative");
  };
  positive(horizon, "horizon");
  nonneg(eta_ctrl, "eta_ctrl");
  nonneg(eta_deriv, "eta_deriv");
  nonneg(gamma, "gamma");
  positive(alpha, "alpha");
  nonneg(lr_policy, "lr_policy");
  nonneg(lr_cbf, "lr_cbf");
  nonneg(total_steps, "total_steps");
  positive(n_scenarios, "n_scenarios");
  positive(rollout_length, "rollout_length");
  positive(collect_every, "collect_every");
  positive(batch_size, "batch_size");
  positive(n_agents, "n_agents");
  nonneg(n_obstacles, "n_obstacles");
  if (dynamics && dynamics->env != env) throw ConfigError("dynamics configuration is for another environment");
  positive(world.area, "area");
  if (!(world.sense_radius > 2 * world.agent_radius && world.agent_radius > 0)) {
    throw ConfigError("need sense_radius > 2 agent_radius > 0");
  }
}

std::size_t LabeledDataset::count(Label l) const {
  std::size_t n = 0;
  for (const auto& row : labels) n += static_cast<std::size_t>(std::count(row.begin(), row.end(), l));
  return n;
}

Buffer collect_onpolicy(const gnn::GnnParams& p, const dyn::Dynamics& d, const TrainConfig& cfg, num::Rng& rng,
                        bool with_targets) {
  Buffer b;
  b.n_rollouts = cfg.n_scenarios;
  b.length = cfg.rollout_length;
  b.policy_fingerprint = gnn::fingerprint(p);
  b.items.resize(static_cast<std::size_t>(b.n_rollouts) * static_cast<std::size_t>(b.length));
  const num::Rng base = rng.split(rng.next_u64());
  parallel_for(b.n_rollouts, [&](int s) {
    num::Rng r = base.split(static_cast<std::uint64_t>(s));
    world::World w = world::sample_scenario(cfg.env, cfg.n_agents, cfg.world, cfg.n_obstacles, r);
    for (int t = 0; t < b.length; ++t) {
      Transition& tr = b.items[static_cast<std::size_t>(s * b.length + t)];
      tr.graph = world::build_graph(w, d);
      tr.u_nom = nominal_actions(w, d);
      tr.actions = gnn::policy_actions(p, tr.graph, d, tr.u_nom);
      if (with_targets) {
        if (cfg.ctrl_target == CtrlTarget::Qp) {
          const auto res = qp::pi_qp_target(tr.graph, p, d, cfg.alpha, tr.u_nom);
          tr.target = res.u;
          tr.target_relaxed = res.relaxed;
        } else {
          for (const Vec& u : tr.u_nom) tr.target.push_back(d.clamp(u));
        }
      }
      tr.next = advance(w, d, tr.actions);
      tr.rollout = s;
      tr.t = t;
      tr.world = std::move(w);
      w = tr.next;
    }
  });
  return b;
}

LabeledDataset label_invariance(const Buffer& buffer, const gnn::GnnParams& p, const dyn::Dynamics& d, int horizon) {
  if (horizon < 1) throw ConfigError("labeling horizon must be at least 1");
  LabeledDataset ds;
  ds.labels.resize(buffer.items.size());
  const bool reuse = buffer.policy_fingerprint == gnn::fingerprint(p);
  const Controller policy = learned_controller(p, d);

  // Safety of agent i at every state of a trajectory, then the labels of
  // the first `samples` states from a sliding window of horizon + 1.
  auto label_from = [&](const std::vector<std::vector<bool>>& safe, int samples, std::size_t first) {
    for (int t = 0; t < samples; ++t) {
      const std::size_t n = safe[static_cast<std::size_t>(t)].size();
      auto& out = ds.labels[first + static_cast<std::size_t>(t)];
      out.assign(n, Label::Unlabeled);
      for (std::size_t i = 0; i < n; ++i) {
        if (!safe[static_cast<std::size_t>(t)][i]) {
          out[i] = Label::Unsafe;
          continue;
        }
        bool ok = true;
        for (int k = 1; k <= horizon && ok; ++k) ok = safe[static_cast<std::size_t>(t + k)][i];
        if (ok) out[i] = Label::Safe;
      }
    }
  };
  auto extend = [&](world::World w, int steps, std::vector<std::vector<bool>>& safe) {
    for (int k = 0; k < steps; ++k) {
      const auto g = world::build_graph(w, d);
      w = advance(w, d, policy(w, g));
      safe.push_back(world::safety_status(w));
    }
  };

  if (reuse) {
    parallel_for(buffer.n_rollouts, [&](int r) {
      const std::size_t first = static_cast<std::size_t>(r) * static_cast<std::size_t>(buffer.length);
      std::vector<std::vector<bool>> safe;
      for (int t = 0; t < buffer.length; ++t) {
        const Transition& tr = buffer.items[first + static_cast<std::size_t>(t)];
        safe.push_back(world::safety_status(tr.world, tr.graph.hits));
      }
      const world::World& last = buffer.items[first + static_cast<std::size_t>(buffer.length) - 1].next;
      safe.push_back(world::safety_status(last));
      extend(last, horizon - 1, safe);
      label_from(safe, buffer.length, first);
    });
  } else {
    parallel_for(static_cast<int>(buffer.items.size()), [&](int k) {
      const Transition& tr = buffer.items[static_cast<std::size_t>(k)];
      std::vector<std::vector<bool>> safe{world::safety_status(tr.world, tr.graph.hits)};
      extend(tr.world, horizon, safe);
      label_from(safe, 1, static_cast<std::size_t>(k));
    });
  }
  return ds;
}

double hdot_estimate(const gnn::GnnParams& p, const Transition& tr, const dyn::Dynamics& d, int i) {
  const auto actions = gnn::policy_actions(p, tr.graph, d, nominal_actions(tr.world, d));
  const world::World next = advance(tr.world, d, actions);
  const double h0 = gnn::certificate_values(p, tr.graph)[i];
  const double h1 = gnn::certificate_values(p, world::build_graph(next, d))[i];
  return (h1 - h0) / d.dt();
}

LossVars build_losses(num::Tape& tape, const gnn::NetVars& cert, const gnn::NetVars& policy, const Minibatch& mb,
                      const dyn::Dynamics& d, const TrainConfig& cfg) {
  const int m = d.m(), n = d.n();
  std::vector<const world::SceneGraph*> graphs;
  std::vector<const std::vector<Vec>*> noms, targets, states;
  for (const Transition* tr : mb.items) {
    graphs.push_back(&tr->graph);
    noms.push_back(&tr->u_nom);
    targets.push_back(&tr->target);
    states.push_back(&tr->world.states);
  }
  const gnn::GraphBatch batch = gnn::make_batch(graphs);
  const num::Index offsets = gnn::make_index(batch.offsets);
  const Var z = tape.constant(gnn::to_tensor(batch.z));
  const Var h = gnn::gnn_forward(tape, cert, z, offsets).out;
  const Var a_pre = tape.add(gnn::gnn_forward(tape, policy, z, offsets).out, tape.constant(stack_rows(noms, m)));
  const std::size_t agents = a_pre.rows();

  LossVars lv;
  lv.ctrl = tape.scale(tape.sum(tape.l2norm(tape.sub(a_pre, tape.constant(stack_rows(targets, m))), num::Along::Columns)),
                       cfg.eta_ctrl);

  // Clamp with its exact derivative: pass-through inside the box, constant at a limit.
  const Tensor& av = a_pre.value();
  Tensor mask = Tensor::like(av), held = Tensor::like(av);
  std::uint64_t sig = 1469598103934665603ull;
  Mat clamped(static_cast<Eigen::Index>(agents), m);
  for (std::size_t r = 0; r < agents; ++r) {
    Vec a(m);
    for (int c = 0; c < m; ++c) a[c] = av(r, static_cast<std::size_t>(c));
    const Vec ac = d.clamp(a);
    clamped.row(static_cast<Eigen::Index>(r)) = ac.transpose();
    for (int c = 0; c < m; ++c) {
      const bool free = ac[c] == a[c];
      mask(r, static_cast<std::size_t>(c)) = free ? 1.0 : 0.0;
      held(r, static_cast<std::size_t>(c)) = free ? 0.0 : ac[c];
      sig = fnv_mix(sig, free);
    }
  }
  const Var a_app = tape.add(tape.mul(a_pre, tape.constant(std::move(mask))), tape.constant(std::move(held)));

  // Exact Euler step forward, dt g(x) backward.
  const Tensor xs = stack_rows(states, n);
  Mat next(static_cast<Eigen::Index>(agents), n);
  std::vector<Mat> jac(agents);
  for (std::size_t r = 0; r < agents; ++r) {
    Vec x(n);
    for (int c = 0; c < n; ++c) x[c] = xs(r, static_cast<std::size_t>(c));
    bool saturated = false;
    next.row(static_cast<Eigen::Index>(r)) = d.step(x, clamped.row(static_cast<Eigen::Index>(r)).transpose(), &saturated).transpose();
    jac[r] = d.step_action_jacobian(x);
    sig = fnv_mix(sig, saturated);
  }
  const Var x_next = gnn::linearized(tape, num::from_eigen(next), a_app, jac);

  std::vector<world::SceneGraph> next_graphs(mb.items.size());
  std::size_t row = 0;
  for (std::size_t k = 0; k < mb.items.size(); ++k) {
    world::World w = mb.items[k]->world;
    for (auto& x : w.states) x = next.row(static_cast<Eigen::Index>(row++)).transpose();
    next_graphs[k] = world::build_graph(w, d);
    sig = fnv_mix(sig, topology_hash(next_graphs[k]));
  }
  tape.mix_signature(sig);
  std::vector<const world::SceneGraph*> next_ptrs;
  for (const auto& g : next_graphs) next_ptrs.push_back(&g);
  const Var z_next = gnn::edge_inputs_from_states(tape, next_ptrs, d, x_next);
  const Var h_next = gnn::gnn_forward(tape, cert, z_next, gnn::make_index(gnn::make_batch(next_ptrs).offsets)).out;

  const Var gamma = tape.constant(Tensor::scalar(cfg.gamma));
  const Var hdot = tape.scale(tape.sub(h_next, h), 1.0 / d.dt());
  lv.deriv = tape.scale(tape.sum(tape.hinge(tape.sub(gamma, tape.add(hdot, tape.scale(h, cfg.alpha))))), cfg.eta_deriv);

  std::vector<std::size_t> safe_rows, unsafe_rows;
  row = 0;
  for (const auto* labels : mb.labels) {
    for (Label l : *labels) {
      if (l == Label::Safe) safe_rows.push_back(row);
      if (l == Label::Unsafe) unsafe_rows.push_back(row);
      ++row;
    }
  }
  if (row != agents) throw ShapeError("labels do not match the minibatch agents");
  const Var zero = tape.constant(Tensor::scalar(0.0));
  lv.safe = safe_rows.empty() ? zero
                              : tape.sum(tape.hinge(tape.sub(gamma, tape.gather_rows(h, gnn::make_index(std::move(safe_rows))))));
  lv.unsafe = unsafe_rows.empty()
                  ? zero
                  : tape.sum(tape.hinge(tape.add(gamma, tape.gather_rows(h, gnn::make_index(std::move(unsafe_rows))))));
  lv.total = tape.add(tape.add(lv.deriv, lv.safe), tape.add(lv.unsafe, lv.ctrl));
  return lv;
}

namespace {

LossBreakdown breakdown(const LossVars& lv, const Minibatch& mb) {
  LossBreakdown b;
  b.total = lv.total.value().item();
  b.deriv = lv.deriv.value().item();
  b.safe = lv.safe.value().item();
  b.unsafe = lv.unsafe.value().item();
  b.ctrl = lv.ctrl.value().item();
  for (const auto* labels : mb.labels) {
    b.samples += labels->size();
    for (Label l : *labels) {
      b.n_safe += l == Label::Safe;
      b.n_unsafe += l == Label::Unsafe;
    }
  }
  return b;
}

}  // namespace

LossBreakdown evaluate_losses(const gnn::GnnParams& p, const Minibatch& mb, const dyn::Dynamics& d,
                              const TrainConfig& cfg) {
  num::Tape tape;
  const auto lv = build_losses(tape, gnn::bind(tape, p.cert, false), gnn::bind(tape, p.policy, false), mb, d, cfg);
  return breakdown(lv, mb);
}

Optimizers Optimizers::make(const gnn::GnnParams& p, const TrainConfig& cfg) {
  const auto ts = p.tensors();
  const std::size_t nc = p.cert_tensor_count();
  const auto cert = copy_tensors(ts, 0, nc);
  const auto pol = copy_tensors(ts, nc, ts.size());
  return {num::AdamState::for_params(cert, cfg.lr_cbf), num::AdamState::for_params(pol, cfg.lr_policy)};
}

LossBreakdown train_step(gnn::GnnParams& p, Optimizers& opt, const Minibatch& mb, const dyn::Dynamics& d,
                         const TrainConfig& cfg) {
  num::Tape tape;
  const gnn::NetVars cert = gnn::bind(tape, p.cert, true);
  const gnn::NetVars pol = gnn::bind(tape, p.policy, true);
  const LossVars lv = build_losses(tape, cert, pol, mb, d, cfg);
  const LossBreakdown b = breakdown(lv, mb);
  if (!std::isfinite(b.total)) throw NonFiniteError("non-finite training loss");
  tape.backward(lv.total);

  auto update = [&](const std::vector<Var>& vars, std::vector<Tensor*> targets, num::AdamState& state) {
    std::vector<Tensor> values, grads;
    for (std::size_t k = 0; k < vars.size(); ++k) {
      values.push_back(*targets[k]);
      grads.push_back(tape.grad(vars[k]));
    }
    num::adam_update(values, grads, state);
    for (std::size_t k = 0; k < vars.size(); ++k) *targets[k] = std::move(values[k]);
  };
  const auto ts = p.tensors();
  const std::size_t nc = p.cert_tensor_count();
  update(cert.all(), {ts.begin(), ts.begin() + static_cast<std::ptrdiff_t>(nc)}, opt.cert);
  update(pol.all(), {ts.begin() + static_cast<std::ptrdiff_t>(nc), ts.end()}, opt.policy);
  return b;
}

TrainResult train(const TrainConfig& cfg, num::Rng& rng, const StepCallback& on_step) {
  cfg.validate();
  const dyn::Dynamics d(cfg.dynamics_config());
  num::Rng init_rng = rng.split(1), data_rng = rng.split(2), batch_rng = rng.split(3);
  rng.next_u64();
  TrainResult res;
  res.params = gnn::init_params(init_rng, cfg.env);
  Optimizers opt = Optimizers::make(res.params, cfg);
  Buffer buffer;
  LabeledDataset labels;
  int relaxed = 0;
  const auto start = std::chrono::steady_clock::now();
  for (int step = 0; step < cfg.total_steps; ++step) {
    if (step % cfg.collect_every == 0) {
      buffer = collect_onpolicy(res.params, d, cfg, data_rng);
      labels = label_invariance(buffer, res.params, d, cfg.horizon);
      relaxed = 0;
      for (const auto& tr : buffer.items) relaxed += tr.target_relaxed;
    }
    Minibatch mb;
    for (int k = 0; k < cfg.batch_size; ++k) {
      const auto idx = static_cast<std::size_t>(batch_rng.below(buffer.items.size()));
      mb.items.push_back(&buffer.items[idx]);
      mb.labels.push_back(&labels.labels[idx]);
    }
    StepRecord rec;
    rec.step = step;
    rec.loss = train_step(res.params, opt, mb, d, cfg);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rec.d_c = labels.count(Label::Safe);
    rec.d_a = labels.count(Label::Unsafe);
    rec.unlabeled = labels.count(Label::Unlabeled);
    rec.relaxed_targets = relaxed;
    res.curve.push_back(rec);
    if (on_step) on_step(rec, res.params);
  }
  return res;
}

}  // namespace gcbf::train
