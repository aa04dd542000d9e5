// gcbf: train, evaluate and audit distributed graph-CBF controllers.
//
// Exit status: 0 success, 2 configuration error (bad flags or config, missing
// or corrupt checkpoint, environment mismatch), 3 runtime error, 4 scenario
// sampling failed (the requested density cannot be placed).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "gcbf/error.hpp"
#include "gcbf/eval/audit.hpp"
#include "gcbf/eval/experiments.hpp"
#include "gcbf/io/checkpoint.hpp"
#include "gcbf/io/config.hpp"
#include "gcbf/io/formats.hpp"
#include "gcbf/numerics/kernels.hpp"

using namespace gcbf;
namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitInfeasible = 4;

struct Common {
  std::string config;
  std::string env;
  std::string out = "runs";
  std::optional<std::uint64_t> seed;
};

struct EvalOverrides {
  std::optional<int> agents, obstacles, instances, steps;
  std::optional<double> area;
  std::vector<std::uint64_t> eval_seeds;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON run configuration (docs/formats.md)");
  app->add_option("--env", c.env, "environment when no config is given")
      ->check(CLI::IsMember({"SingleIntegrator", "DoubleIntegrator", "DubinsCar", "LinearDrone", "CrazyflieDrone"}));
  app->add_option("--out", c.out, "output root directory");
  app->add_option("--seed", c.seed, "run seed");
}

void add_eval_overrides(CLI::App* app, EvalOverrides& o) {
  app->add_option("--agents", o.agents, "agents per instance");
  app->add_option("--obstacles", o.obstacles, "obstacles per instance");
  app->add_option("--area", o.area, "side length l of the square/cube");
  app->add_option("--instances", o.instances, "instances per seed");
  app->add_option("--steps", o.steps, "episode length");
  app->add_option("--eval-seeds", o.eval_seeds, "scenario seeds");
}

io::RunConfig base_config(const Common& c, const io::json* fallback = nullptr) {
  io::RunConfig cfg;
  if (!c.config.empty()) {
    cfg = io::load_config(c.config);
  } else if (fallback) {
    cfg = io::parse_config(*fallback);
  } else {
    cfg = io::RunConfig::defaults(dyn::env_from_name(c.env.empty() ? "DoubleIntegrator" : c.env));
  }
  if (!c.env.empty() && dyn::env_from_name(c.env) != cfg.env) {
    throw ConfigError("--env " + c.env + " disagrees with the configuration (" +
                      std::string(dyn::env_name(cfg.env)) + ")");
  }
  if (c.seed) cfg.seed = *c.seed;
  if (c.out != "runs" || cfg.output_dir.empty()) cfg.output_dir = c.out;
  return cfg;
}

void apply(const EvalOverrides& o, io::RunConfig& cfg) {
  if (o.agents) cfg.eval.n_agents = *o.agents;
  if (o.obstacles) cfg.eval.n_obstacles = *o.obstacles;
  if (o.area) cfg.eval.world.area = *o.area;
  if (o.instances) cfg.eval.instances = *o.instances;
  if (o.steps) cfg.eval.episode_length = *o.steps;
  if (!o.eval_seeds.empty()) cfg.eval.seeds = o.eval_seeds;
}

// Deterministic, so reruns overwrite the same files.
fs::path run_dir(const io::RunConfig& cfg, const std::string& what) {
  const std::string stamp = what + "-" + std::string(dyn::env_name(cfg.env)) + "-s" + std::to_string(cfg.seed) +
                            "-" + io::hex64(io::config_hash(cfg)).substr(0, 8);
  return fs::path(cfg.output_dir) / stamp;
}

void write_config(const fs::path& dir, const io::RunConfig& cfg) {
  io::atomic_write(dir / "config.json", io::to_json(cfg).dump(2) + "\n");
}

int cmd_train(const Common& c, std::optional<int> steps) {
  io::RunConfig cfg = base_config(c);
  if (steps) cfg.train.total_steps = *steps;
  cfg.finalize();
  const fs::path dir = run_dir(cfg, "train");
  std::printf("training %s for %d steps -> %s\n", std::string(dyn::env_name(cfg.env)).c_str(),
              cfg.train.total_steps, dir.string().c_str());
  num::Rng rng(cfg.seed);
  const auto result = train::train(cfg.train, rng, [&](const train::StepRecord& r, const gnn::GnnParams&) {
    if (r.step % 50 == 0 || r.step + 1 == cfg.train.total_steps) {
      std::printf("step %5d  loss %.5g  (deriv %.4g safe %.4g unsafe %.4g ctrl %.4g)  %.0fs\n", r.step, r.loss.total,
                  r.loss.deriv, r.loss.safe, r.loss.unsafe, r.loss.ctrl, r.wall_seconds);
      std::fflush(stdout);
    }
  });
  write_config(dir, cfg);
  io::atomic_write(dir / "loss.csv", io::loss_csv(result.curve));
  io::atomic_write(dir / "timing.csv", io::timing_csv(result.curve));
  io::save_checkpoint(dir / "checkpoint", result.params, cfg.train.total_steps, io::to_json(cfg));
  std::printf("checkpoint: %s\n", (dir / "checkpoint").string().c_str());
  return 0;
}

// Loads the checkpoint (if any) before anything is written.
std::optional<io::Checkpoint> maybe_checkpoint(const std::string& path, std::optional<dyn::EnvKind> env) {
  if (path.empty()) return std::nullopt;
  return io::load_checkpoint(path, env);
}

int run_eval(io::RunConfig cfg, const EvalOverrides& o, const std::optional<io::Checkpoint>& ck,
             const std::string& what) {
  apply(o, cfg);
  cfg.finalize();
  const fs::path dir = run_dir(cfg, what);
  const gnn::GnnParams* p = ck ? &ck->params : nullptr;
  const auto res = eval::rollout_eval(cfg.eval, p);
  write_config(dir, cfg);
  io::atomic_write(dir / "metrics.csv", io::metrics_csv({res.metrics}));
  io::atomic_write(dir / "outcomes.jsonl", io::outcomes_jsonl(res.outcomes));
  const auto& m = res.metrics;
  std::printf("%s N=%d obstacles=%d l=%g: safety %.4f  reach %.4f  success %.4f  -> %s\n",
              std::string(eval::controller_name(m.controller)).c_str(), m.n_agents, m.n_obstacles, m.area, m.safety,
              m.reach, m.success, (dir / "metrics.csv").string().c_str());
  return 0;
}

int cmd_eval(const Common& c, const EvalOverrides& o, const std::string& checkpoint) {
  if (checkpoint.empty()) throw ConfigError("eval needs --checkpoint");
  std::optional<dyn::EnvKind> env;
  if (!c.env.empty()) env = dyn::env_from_name(c.env);
  const auto ck = maybe_checkpoint(checkpoint, env);
  io::RunConfig cfg = base_config(c, &ck->manifest.config);
  if (cfg.env != ck->manifest.env) {
    throw EnvMismatchError("checkpoint is for " + std::string(dyn::env_name(ck->manifest.env)) +
                           ", configuration is " + std::string(dyn::env_name(cfg.env)));
  }
  cfg.eval.controller = eval::ControllerKind::GcbfPlus;
  return run_eval(cfg, o, ck, "eval");
}

int cmd_baseline(const Common& c, const EvalOverrides& o, const std::string& controller) {
  io::RunConfig cfg = base_config(c);
  cfg.eval.controller = eval::controller_from_name(controller);
  if (cfg.eval.controller == eval::ControllerKind::GcbfPlus) throw ConfigError("use `eval` for gcbf+");
  return run_eval(cfg, o, std::nullopt, "baseline-" + controller);
}

int cmd_check(const Common& c, const EvalOverrides& o, const std::string& what, const std::string& checkpoint,
              const std::string& controller, int probes, int stride) {
  std::optional<dyn::EnvKind> env;
  if (!c.env.empty()) env = dyn::env_from_name(c.env);
  const auto ck = maybe_checkpoint(checkpoint, env);
  io::RunConfig cfg = base_config(c, ck ? &ck->manifest.config : nullptr);
  if (ck && cfg.env != ck->manifest.env) throw EnvMismatchError("checkpoint and configuration environments differ");
  apply(o, cfg);
  cfg.eval.controller = ck ? eval::ControllerKind::GcbfPlus : eval::controller_from_name(controller);
  cfg.finalize();
  const gnn::GnnParams* p = ck ? &ck->params : nullptr;
  const dyn::Dynamics d(cfg.dynamics);
  const fs::path dir = run_dir(cfg, "check-" + what);

  if (what == "theorem1") {
    auto spec = cfg.eval;
    spec.record_trajectories = true;
    const auto res = eval::rollout_eval(spec, p);
    const eval::BarrierFn barrier = p ? eval::certificate_barrier(*p, d) : eval::pairwise_distance_barrier(spec.world);
    const double alpha = p ? cfg.train.alpha : std::max(eval::baseline_alpha(spec.controller), 1e-12);
    std::vector<eval::Theorem1Report> reports;
    std::size_t a = 0, b = 0, col = 0;
    bool consistent = true;
    for (const auto& traj : res.trajectories) {
      reports.push_back(eval::check_theorem1(traj, barrier, alpha, d.dt()));
      a += reports.back().derivative_violation_count;
      b += reports.back().negativity_count;
      col += reports.back().collision_count;
      consistent = consistent && reports.back().consistent();
    }
    write_config(dir, cfg);
    io::atomic_write(dir / "theorem1.jsonl", io::theorem1_jsonl(reports));
    std::printf("theorem1: %zu instances, derivative violations %zu, negativity %zu, collisions %zu, %s -> %s\n",
                reports.size(), a, b, col, consistent ? "consistent" : "INCONSISTENT",
                (dir / "theorem1.jsonl").string().c_str());
    return 0;
  }
  if (what == "assumption1") {
    if (!p) throw ConfigError("assumption1 needs --checkpoint");
    num::Rng rng(cfg.seed);
    const auto rep = eval::check_assumption1(*p, cfg.eval, probes, rng, stride);
    write_config(dir, cfg);
    io::atomic_write(dir / "assumption1.jsonl", io::assumption1_jsonl(rep, cfg.world.sense_radius));
    std::printf("assumption1: mean w on [0.4R,0.5R) %.4f (n=%zu), on [0.9R,R) %.4f (n=%zu): decay %s; "
                "locality %zu/%zu probes exact -> %s\n",
                rep.mean_mid, rep.n_mid, rep.mean_edge, rep.n_edge, rep.decay_holds() ? "holds" : "FAILS",
                rep.probes - rep.locality_failures, rep.probes, (dir / "assumption1.jsonl").string().c_str());
    return 0;
  }
  throw ConfigError("check expects theorem1 or assumption1");
}

int cmd_sweep(const Common& c, const EvalOverrides& o, const std::string& grid, std::optional<int> steps) {
  io::RunConfig cfg = base_config(c);
  if (steps) cfg.train.total_steps = *steps;
  apply(o, cfg);
  cfg.eval.controller = eval::ControllerKind::GcbfPlus;
  cfg.finalize();
  std::vector<eval::SweepPoint> points;
  if (grid == "full") {
    points = eval::sensitivity_grid(cfg.train);
  } else if (grid == "reduced") {
    points = {{1.0, 4}, {1.0, 32}, {100.0, 32}};
  } else {
    throw ConfigError("--grid must be full or reduced");
  }
  const fs::path dir = run_dir(cfg, "sweep-" + grid);
  const auto cells = eval::sweep_sensitivity(cfg.train, cfg.eval, points, cfg.seed, [](const eval::SweepCell& cell) {
    std::printf("alpha=%g T=%d: safety %.4f reach %.4f success %.4f\n", cell.point.alpha, cell.point.horizon,
                cell.metrics.safety, cell.metrics.reach, cell.metrics.success);
    std::fflush(stdout);
  });
  write_config(dir, cfg);
  io::atomic_write(dir / "sweep.csv", io::sweep_csv(cells));
  std::printf("-> %s\n", (dir / "sweep.csv").string().c_str());
  return 0;
}

int cmd_scale(const Common& c, const EvalOverrides& o, const std::string& checkpoint, const std::string& controller) {
  std::optional<dyn::EnvKind> env;
  if (!c.env.empty()) env = dyn::env_from_name(c.env);
  const auto ck = maybe_checkpoint(checkpoint, env);
  io::RunConfig cfg = base_config(c, ck ? &ck->manifest.config : nullptr);
  apply(o, cfg);
  cfg.eval.controller = ck ? eval::ControllerKind::GcbfPlus : eval::controller_from_name(controller);
  cfg.finalize();
  const fs::path dir = run_dir(cfg, "scale");
  const auto res = eval::scaling_experiment(cfg.eval, cfg.scaling_n, ck ? &ck->params : nullptr);
  std::vector<eval::Metrics> rows;
  for (const auto& pt : res.points) {
    rows.push_back(pt.metrics);
    std::printf("N=%d density %.3g: safety %.4f reach %.4f success %.4f (%.1fs)\n", pt.metrics.n_agents,
                pt.metrics.density, pt.metrics.safety, pt.metrics.reach, pt.metrics.success, pt.wall_seconds);
  }
  if (res.stopped_after) std::printf("out of memory after N=%d\n", *res.stopped_after);
  write_config(dir, cfg);
  io::atomic_write(dir / "scaling.csv", io::metrics_csv(rows));
  io::atomic_write(dir / "scaling_timing.csv", io::scaling_timing_csv(res.points));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  num::kernels::configure_threads_from_env();
  CLI::App app{"Distributed graph control barrier functions: training, evaluation and audits"};
  app.require_subcommand(1);

  Common common;
  EvalOverrides overrides;
  std::optional<int> steps;
  std::string checkpoint, controller = "cbf1.0", grid = "reduced", what;
  int probes = 1000, stride = 16;

  auto* train_cmd = app.add_subcommand("train", "train certificate and policy, write a checkpoint");
  add_common(train_cmd, common);
  train_cmd->add_option("--steps", steps, "gradient steps (overrides train.total_steps)");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a trained checkpoint");
  add_common(eval_cmd, common);
  add_eval_overrides(eval_cmd, overrides);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();

  auto* base_cmd = app.add_subcommand("baseline", "evaluate a hand-designed controller");
  add_common(base_cmd, common);
  add_eval_overrides(base_cmd, overrides);
  base_cmd->add_option("--controller", controller, "cbf1.0, cbf0.1, deccbf1.0, deccbf0.1 or nominal")->required();

  auto* check_cmd = app.add_subcommand("check", "audit: theorem1 or assumption1");
  add_common(check_cmd, common);
  add_eval_overrides(check_cmd, overrides);
  check_cmd->add_option("what", what, "theorem1 | assumption1")->required();
  check_cmd->add_option("--checkpoint", checkpoint, "learned controller and certificate");
  check_cmd->add_option("--controller", controller, "baseline for theorem1 without a checkpoint");
  check_cmd->add_option("--probes", probes, "locality probes (assumption1)");
  check_cmd->add_option("--stride", stride, "attention sampling stride in steps (assumption1)");

  auto* sweep_cmd = app.add_subcommand("sweep", "alpha / horizon sensitivity (trains one policy per cell)");
  add_common(sweep_cmd, common);
  add_eval_overrides(sweep_cmd, overrides);
  sweep_cmd->add_option("--grid", grid, "full (9 cells) or reduced (T=4, T=32, alpha=100)");
  sweep_cmd->add_option("--train-steps", steps, "gradient steps per cell");

  auto* scale_cmd = app.add_subcommand("scale", "evaluate one controller over eval.scaling_n");
  add_common(scale_cmd, common);
  add_eval_overrides(scale_cmd, overrides);
  scale_cmd->add_option("--checkpoint", checkpoint, "learned controller");
  scale_cmd->add_option("--controller", controller, "baseline when no checkpoint is given");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train_cmd) return cmd_train(common, steps);
    if (*eval_cmd) return cmd_eval(common, overrides, checkpoint);
    if (*base_cmd) return cmd_baseline(common, overrides, controller);
    if (*check_cmd) return cmd_check(common, overrides, what, checkpoint, controller, probes, stride);
    if (*sweep_cmd) return cmd_sweep(common, overrides, grid, steps);
    if (*scale_cmd) return cmd_scale(common, overrides, checkpoint, controller);
  } catch (const InfeasibleScenarioError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const EnvMismatchError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const CorruptPayloadError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}
