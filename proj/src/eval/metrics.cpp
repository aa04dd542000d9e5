#include "gcbf/eval/metrics.hpp"

#include <cmath>
#include <string>

#include "gcbf/error.hpp"
#include "gcbf/numerics/parallel.hpp"
#include "gcbf/qp/cbf.hpp"

namespace gcbf::eval {

namespace {

constexpr std::pair<ControllerKind, std::string_view> kNames[] = {
    {ControllerKind::GcbfPlus, "gcbf+"},     {ControllerKind::Cbf1, "cbf1.0"},
    {ControllerKind::Cbf01, "cbf0.1"},       {ControllerKind::DecCbf1, "deccbf1.0"},
    {ControllerKind::DecCbf01, "deccbf0.1"}, {ControllerKind::Nominal, "nominal"},
};

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  mean = sd = 0;
  if (xs.empty()) return;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  for (double x : xs) sd += (x - mean) * (x - mean);
  sd = std::sqrt(sd / static_cast<double>(xs.size()));
}

InstanceOutcome run_instance(const EvalSpec& spec, const dyn::Dynamics& d, const train::Controller& ctrl,
                             world::World w, std::vector<world::World>* record) {
  const int n = w.n_agents();
  InstanceOutcome out;
  out.safe.assign(static_cast<std::size_t>(n), true);
  out.first_unsafe_step.assign(static_cast<std::size_t>(n), -1);
  if (record) {
    record->clear();
    record->reserve(static_cast<std::size_t>(spec.episode_length) + 1);
  }
  for (int t = 0;; ++t) {
    const world::SceneGraph g = world::build_graph(w, d);
    const auto s = world::safety_status(w, g.hits);
    for (int i = 0; i < n; ++i) {
      if (!s[i] && out.safe[i]) {
        out.safe[i] = false;
        out.first_unsafe_step[i] = t;
      }
    }
    if (record) record->push_back(w);
    if (t == spec.episode_length) break;
    w = train::advance(w, d, ctrl(w, g));
  }
  out.reached.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.reached[i] = (w.position(i) - w.goals[i]).norm() <= 2 * w.params.agent_radius;
  return out;
}

}  // namespace

std::string_view controller_name(ControllerKind k) {
  for (const auto& [kind, name] : kNames) {
    if (kind == k) return name;
  }
  return "?";
}

ControllerKind controller_from_name(std::string_view name) {
  for (const auto& [kind, n] : kNames) {
    if (n == name) return kind;
  }
  throw ConfigError("unknown controller '" + std::string(name) +
                    "' (expected gcbf+, cbf1.0, cbf0.1, deccbf1.0, deccbf0.1 or nominal)");
}

double baseline_alpha(ControllerKind k) {
  switch (k) {
    case ControllerKind::Cbf1:
    case ControllerKind::DecCbf1: return 1.0;
    case ControllerKind::Cbf01:
    case ControllerKind::DecCbf01: return 0.1;
    default: return 0.0;
  }
}

void EvalSpec::validate() const {
  if (n_agents <= 0) throw ConfigError("n_agents must be positive");
  if (n_obstacles < 0) throw ConfigError("n_obstacles must be non-negative");
  if (episode_length <= 0) throw ConfigError("episode_length must be positive");
  if (instances <= 0) throw ConfigError("instances must be positive");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (!(world.area > 0)) throw ConfigError("area must be positive");
  if (dynamics && dynamics->env != env) throw ConfigError("dynamics configuration is for another environment");
}

ExperimentSpec ExperimentSpec::full_scale(dyn::EnvKind env, ControllerKind controller, double area) {
  ExperimentSpec s;
  s.env = env;
  s.controller = controller;
  s.area = area;
  for (int n = 8; n <= 1024; n *= 2) s.n_agents.push_back(n);
  return s;
}

ExperimentSpec ExperimentSpec::desk(dyn::EnvKind env, ControllerKind controller, double area) {
  ExperimentSpec s = full_scale(env, controller, area);
  s.n_agents.resize(6);  // 8..256
  s.instances = 8;
  s.seeds = 1;
  return s;
}

void ExperimentSpec::validate() const {
  if (n_agents.empty()) throw ConfigError("experiment needs at least one N");
  if (n_obstacles.empty()) throw ConfigError("experiment needs at least one obstacle count");
  if (seeds <= 0) throw ConfigError("seeds must be positive");
  for (const EvalSpec& c : cells()) c.validate();
}

std::vector<EvalSpec> ExperimentSpec::cells() const {
  std::vector<EvalSpec> out;
  for (int n_obs : n_obstacles) {
    for (int n : n_agents) {
      EvalSpec c;
      c.env = env;
      c.controller = controller;
      c.n_agents = n;
      c.n_obstacles = n_obs;
      c.world.area = area;
      c.episode_length = episode_length;
      c.instances = instances;
      c.seeds.clear();
      for (int s = 0; s < seeds; ++s) c.seeds.push_back(static_cast<std::uint64_t>(s));
      out.push_back(c);
    }
  }
  return out;
}

world::World scenario(const EvalSpec& spec, std::uint64_t seed, int instance) {
  num::Rng rng = num::Rng(seed).split(static_cast<std::uint64_t>(instance));
  return world::sample_scenario(spec.env, spec.n_agents, spec.world, spec.n_obstacles, rng);
}

train::Controller make_controller(ControllerKind k, const gnn::GnnParams* p, const dyn::Dynamics& d) {
  switch (k) {
    case ControllerKind::GcbfPlus:
      if (!p) throw ConfigError("controller gcbf+ needs a checkpoint");
      if (p->env != d.env()) {
        throw EnvMismatchError("checkpoint is for " + std::string(dyn::env_name(p->env)) + ", evaluation is " +
                               std::string(dyn::env_name(d.env())));
      }
      return train::learned_controller(*p, d);
    case ControllerKind::Nominal: return train::nominal_controller(d);
    case ControllerKind::Cbf1:
    case ControllerKind::Cbf01: {
      const auto hp = qp::HocbfParams::defaults(d.env(), baseline_alpha(k));
      return [&d, hp](const world::World& w, const world::SceneGraph&) {
        return qp::centralized_cbfqp_controller(w, d, hp).u;
      };
    }
    case ControllerKind::DecCbf1:
    case ControllerKind::DecCbf01: {
      const auto hp = qp::HocbfParams::defaults(d.env(), baseline_alpha(k));
      return [&d, hp](const world::World& w, const world::SceneGraph&) {
        std::vector<Vec> u;
        u.reserve(w.states.size());
        for (int i = 0; i < w.n_agents(); ++i) u.push_back(qp::decentralized_cbfqp_controller(w, d, hp, i).u[0]);
        return u;
      };
    }
  }
  throw ConfigError("unknown controller");
}

Metrics reduce(const EvalSpec& spec, const std::vector<InstanceOutcome>& outcomes) {
  Metrics m;
  m.env = spec.env;
  m.controller = spec.controller;
  m.n_agents = spec.n_agents;
  m.area = spec.world.area;
  m.n_obstacles = spec.n_obstacles;
  m.episode_length = spec.episode_length;
  m.instances = static_cast<int>(outcomes.size());
  m.seeds = static_cast<int>(spec.seeds.size());
  m.density = spec.n_agents / std::pow(spec.world.area, dyn::env_shape(spec.env).pos_dim);
  std::vector<double> safety, reach, success;
  for (const auto& o : outcomes) {
    double s = 0, r = 0, b = 0;
    for (std::size_t i = 0; i < o.safe.size(); ++i) {
      s += o.safe[i];
      r += o.reached[i];
      b += o.safe[i] && o.reached[i];
    }
    const double n = static_cast<double>(o.safe.size());
    safety.push_back(s / n);
    reach.push_back(r / n);
    success.push_back(b / n);
  }
  mean_std(safety, m.safety, m.safety_std);
  mean_std(reach, m.reach, m.reach_std);
  mean_std(success, m.success, m.success_std);
  return m;
}

EvalResult rollout_eval(const EvalSpec& spec, const std::vector<world::World>& starts, const gnn::GnnParams* p) {
  spec.validate();
  const dyn::Dynamics d(spec.dynamics_config());
  // Resolve once so configuration errors surface before any work.
  make_controller(spec.controller, p, d);
  const int total = static_cast<int>(starts.size());
  EvalResult res;
  res.outcomes.resize(starts.size());
  if (spec.record_trajectories) res.trajectories.resize(starts.size());
  num::parallel_for(total, [&](int k) {
    const train::Controller ctrl = make_controller(spec.controller, p, d);
    res.outcomes[k] = run_instance(spec, d, ctrl, starts[k], spec.record_trajectories ? &res.trajectories[k] : nullptr);
    res.outcomes[k].instance = k % spec.instances;
    res.outcomes[k].seed = spec.seeds[static_cast<std::size_t>(k / spec.instances) % spec.seeds.size()];
  });
  res.metrics = reduce(spec, res.outcomes);
  return res;
}

EvalResult rollout_eval(const EvalSpec& spec, const gnn::GnnParams* p) {
  spec.validate();
  std::vector<world::World> starts;
  for (std::uint64_t seed : spec.seeds) {
    for (int k = 0; k < spec.instances; ++k) starts.push_back(scenario(spec, seed, k));
  }
  return rollout_eval(spec, starts, p);
}

}  // namespace gcbf::eval
