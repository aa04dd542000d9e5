#include "gcbf/io/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "gcbf/error.hpp"

namespace gcbf::io {

using dyn::Vec;

namespace {

// Reads an object, remembering which keys were consumed so leftovers can be rejected.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + "." + key + " has the wrong type");
    }
  }

  void vec(const char* key, Vec& out) {
    std::vector<double> v;
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      v = j_.at(key).get<std::vector<double>>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + "." + key + " must be a list of numbers");
    }
    out = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown key " + where_ + "." + k);
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

std::vector<double> to_list(const Vec& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

RunConfig RunConfig::defaults(dyn::EnvKind env) {
  RunConfig c;
  c.env = env;
  c.dynamics = dyn::DynamicsConfig::defaults(env);
  c.train = train::TrainConfig::defaults(env);
  c.world = c.train.world;
  c.eval.env = env;
  c.eval.controller = eval::ControllerKind::GcbfPlus;
  c.eval.n_agents = c.train.n_agents;
  c.eval.n_obstacles = c.train.n_obstacles;
  c.eval.world = c.world;
  c.eval.episode_length = 4096;
  c.eval.instances = 8;
  c.eval.seeds = {0};
  for (int n = 8; n <= 256; n *= 2) c.scaling_n.push_back(n);
  return c;
}

void RunConfig::finalize() {
  dynamics.env = env;
  train.env = env;
  train.dynamics = dynamics;
  const double eval_area = eval.world.area;
  train.world = world;
  eval.env = env;
  eval.dynamics = dynamics;
  eval.world = world;
  eval.world.area = eval_area;
  if (dynamics.u_lo.size() != dyn::env_shape(env).m || dynamics.u_hi.size() != dyn::env_shape(env).m) {
    throw ConfigError("dynamics.u_lo and u_hi need one entry per action dimension");
  }
  for (Eigen::Index k = 0; k < dynamics.u_lo.size(); ++k) {
    if (!(dynamics.u_lo[k] < dynamics.u_hi[k])) throw ConfigError("dynamics.u_lo must be below u_hi");
  }
  if (!(dynamics.dt > 0)) throw ConfigError("dynamics.dt must be positive");
  if (!(world.sense_radius > 2 * world.agent_radius && world.agent_radius > 0)) {
    throw ConfigError("world needs sense_radius > 2 agent_radius > 0");
  }
  if (world.n_rays < 0) throw ConfigError("world.n_rays must be non-negative");
  for (int n : scaling_n) {
    if (n <= 0) throw ConfigError("eval.scaling_n entries must be positive");
  }
  train.validate();
  eval.validate();
}

RunConfig parse_config(const json& j) {
  Reader top(j, "config");
  std::string env_name = "DoubleIntegrator";
  top.get("env", env_name);
  RunConfig c = RunConfig::defaults(dyn::env_from_name(env_name));
  top.get("seed", c.seed);
  top.get("output_dir", c.output_dir);

  if (const json* d = top.child("dynamics")) {
    Reader r(*d, "dynamics");
    r.vec("u_lo", c.dynamics.u_lo);
    r.vec("u_hi", c.dynamics.u_hi);
    r.get("dt", c.dynamics.dt);
    r.get("si_gain", c.dynamics.si_gain);
    r.get("dubins_k_theta", c.dynamics.dubins_k_theta);
    r.get("dubins_k_v", c.dynamics.dubins_k_v);
    r.get("dubins_v_max", c.dynamics.dubins_v_max);
    r.finish();
  }
  if (const json* w = top.child("world")) {
    Reader r(*w, "world");
    r.get("sense_radius", c.world.sense_radius);
    r.get("agent_radius", c.world.agent_radius);
    r.get("n_rays", c.world.n_rays);
    r.get("area", c.world.area);
    r.finish();
  }
  if (const json* t = top.child("train")) {
    Reader r(*t, "train");
    auto& tc = c.train;
    r.get("n_agents", tc.n_agents);
    r.get("n_obstacles", tc.n_obstacles);
    r.get("horizon", tc.horizon);
    r.get("eta_ctrl", tc.eta_ctrl);
    r.get("eta_deriv", tc.eta_deriv);
    r.get("gamma", tc.gamma);
    r.get("alpha", tc.alpha);
    r.get("lr_policy", tc.lr_policy);
    r.get("lr_cbf", tc.lr_cbf);
    r.get("total_steps", tc.total_steps);
    r.get("n_scenarios", tc.n_scenarios);
    r.get("rollout_length", tc.rollout_length);
    r.get("collect_every", tc.collect_every);
    r.get("batch_size", tc.batch_size);
    std::string target = tc.ctrl_target == train::CtrlTarget::Qp ? "qp" : "nominal";
    r.get("ctrl_target", target);
    if (target == "qp") {
      tc.ctrl_target = train::CtrlTarget::Qp;
    } else if (target == "nominal") {
      tc.ctrl_target = train::CtrlTarget::Nominal;
    } else {
      throw ConfigError("train.ctrl_target must be \"qp\" or \"nominal\"");
    }
    r.finish();
  }
  // Evaluation follows the training scene unless it says otherwise.
  c.eval.n_agents = c.train.n_agents;
  c.eval.n_obstacles = c.train.n_obstacles;
  c.eval.world.area = c.world.area;
  if (const json* e = top.child("eval")) {
    Reader r(*e, "eval");
    std::string controller(eval::controller_name(c.eval.controller));
    r.get("controller", controller);
    c.eval.controller = eval::controller_from_name(controller);
    r.get("n_agents", c.eval.n_agents);
    r.get("n_obstacles", c.eval.n_obstacles);
    r.get("area", c.eval.world.area);
    r.get("episode_length", c.eval.episode_length);
    r.get("instances", c.eval.instances);
    r.get("seeds", c.eval.seeds);
    r.get("scaling_n", c.scaling_n);
    r.finish();
  }
  top.finish();
  c.finalize();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

json to_json(const RunConfig& c) {
  json j;
  j["env"] = std::string(dyn::env_name(c.env));
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["dynamics"] = {{"u_lo", to_list(c.dynamics.u_lo)},
                   {"u_hi", to_list(c.dynamics.u_hi)},
                   {"dt", c.dynamics.dt},
                   {"si_gain", c.dynamics.si_gain},
                   {"dubins_k_theta", c.dynamics.dubins_k_theta},
                   {"dubins_k_v", c.dynamics.dubins_k_v},
                   {"dubins_v_max", c.dynamics.dubins_v_max}};
  j["world"] = {{"sense_radius", c.world.sense_radius},
                {"agent_radius", c.world.agent_radius},
                {"n_rays", c.world.n_rays},
                {"area", c.world.area}};
  const auto& t = c.train;
  j["train"] = {{"n_agents", t.n_agents},
                {"n_obstacles", t.n_obstacles},
                {"horizon", t.horizon},
                {"eta_ctrl", t.eta_ctrl},
                {"eta_deriv", t.eta_deriv},
                {"gamma", t.gamma},
                {"alpha", t.alpha},
                {"lr_policy", t.lr_policy},
                {"lr_cbf", t.lr_cbf},
                {"total_steps", t.total_steps},
                {"n_scenarios", t.n_scenarios},
                {"rollout_length", t.rollout_length},
                {"collect_every", t.collect_every},
                {"batch_size", t.batch_size},
                {"ctrl_target", t.ctrl_target == train::CtrlTarget::Qp ? "qp" : "nominal"}};
  j["eval"] = {{"controller", std::string(eval::controller_name(c.eval.controller))},
               {"n_agents", c.eval.n_agents},
               {"n_obstacles", c.eval.n_obstacles},
               {"area", c.eval.world.area},
               {"episode_length", c.eval.episode_length},
               {"instances", c.eval.instances},
               {"seeds", c.eval.seeds},
               {"scaling_n", c.scaling_n}};
  return j;
}

std::uint64_t json_hash(const json& j) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t config_hash(const RunConfig& c) {
  json j = to_json(c);
  j.erase("output_dir");  // where a run is written does not change what it computes
  return json_hash(j);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex64(const std::string& s) {
  if (s.size() != 16 || s.find_first_not_of("0123456789abcdef") != std::string::npos) {
    throw CorruptPayloadError("malformed 64-bit hex value '" + s + "'");
  }
  return std::stoull(s, nullptr, 16);
}

}  // namespace gcbf::io
