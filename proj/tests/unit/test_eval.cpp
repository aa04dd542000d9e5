#include <cmath>

#include "doctest.h"
#include "gcbf/error.hpp"
#include "gcbf/eval/audit.hpp"
#include "gcbf/eval/experiments.hpp"

using namespace gcbf;
using dyn::EnvKind;
using dyn::Vec;
using eval::ControllerKind;

namespace {

Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }

eval::EvalSpec small_spec(EnvKind env, ControllerKind c, int n, int steps, int instances) {
  eval::EvalSpec s;
  s.env = env;
  s.controller = c;
  s.n_agents = n;
  s.episode_length = steps;
  s.instances = instances;
  s.world.area = 4.0;
  return s;
}

}  // namespace

TEST_CASE("controller names") {
  for (auto k : {ControllerKind::GcbfPlus, ControllerKind::Cbf1, ControllerKind::Cbf01, ControllerKind::DecCbf1,
                 ControllerKind::DecCbf01, ControllerKind::Nominal}) {
    CHECK(eval::controller_from_name(eval::controller_name(k)) == k);
  }
  CHECK(eval::controller_name(ControllerKind::DecCbf01) == "deccbf0.1");
  CHECK(eval::baseline_alpha(ControllerKind::Cbf1) == 1.0);
  CHECK(eval::baseline_alpha(ControllerKind::DecCbf01) == 0.1);
  CHECK_THROWS_AS(eval::controller_from_name("cbf2"), ConfigError);
}

TEST_CASE("experiment specs") {
  const auto full = eval::ExperimentSpec::full_scale(EnvKind::DoubleIntegrator, ControllerKind::GcbfPlus, 8.0);
  CHECK(full.n_agents.front() == 8);
  CHECK(full.n_agents.back() == 1024);
  CHECK(full.instances == 32);
  CHECK(full.seeds == 3);
  CHECK(full.episode_length == 4096);
  const auto desk = eval::ExperimentSpec::desk(EnvKind::DoubleIntegrator, ControllerKind::GcbfPlus, 8.0);
  CHECK(desk.n_agents.back() == 256);
  CHECK(desk.instances == 8);
  const auto cells = desk.cells();
  REQUIRE(cells.size() == 6u);
  CHECK(cells[2].n_agents == 32);
  auto bad = small_spec(EnvKind::SingleIntegrator, ControllerKind::Nominal, 4, 0, 1);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = small_spec(EnvKind::SingleIntegrator, ControllerKind::Nominal, 4, 10, 1);
  bad.seeds.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("single agent with the nominal controller is safe and reaches its goal") {
  for (EnvKind env : {EnvKind::SingleIntegrator, EnvKind::DoubleIntegrator, EnvKind::DubinsCar}) {
    CAPTURE(dyn::env_name(env));
    const auto res = eval::rollout_eval(small_spec(env, ControllerKind::Nominal, 1, 4096, 3));
    CHECK(res.metrics.safety == 1.0);
    CHECK(res.metrics.reach == 1.0);
    CHECK(res.metrics.success == 1.0);
    CHECK(res.metrics.density == doctest::Approx(1.0 / 16.0));
  }
}

TEST_CASE("forced overlap marks exactly the overlapping agents unsafe") {
  auto spec = small_spec(EnvKind::SingleIntegrator, ControllerKind::Nominal, 3, 50, 1);
  world::World w;
  w.env = EnvKind::SingleIntegrator;
  w.states = {v2(1, 1), v2(1.05, 1), v2(3, 3)};
  w.goals = {v2(1, 1.5), v2(1.05, 0.5), v2(3, 3)};
  const auto res = eval::rollout_eval(spec, {w}, nullptr);
  const auto& o = res.outcomes[0];
  CHECK_FALSE(o.safe[0]);
  CHECK_FALSE(o.safe[1]);
  CHECK(o.safe[2]);
  CHECK(o.first_unsafe_step[0] == 0);
  CHECK(o.first_unsafe_step[2] == -1);
  CHECK(res.metrics.safety == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("success never exceeds safety or reach; evaluation is deterministic") {
  num::Rng rng(77);
  for (int k = 0; k < 6; ++k) {
    auto spec = small_spec(EnvKind::DoubleIntegrator, ControllerKind::Nominal, 2 + static_cast<int>(rng.below(8)),
                           64 + static_cast<int>(rng.below(400)), 2);
    spec.n_obstacles = static_cast<int>(rng.below(6));
    spec.world.area = rng.uniform(1.5, 4.0);
    spec.seeds = {rng.next_u64()};
    const auto a = eval::rollout_eval(spec);
    for (const auto& o : a.outcomes) {
      for (std::size_t i = 0; i < o.safe.size(); ++i) {
        if (o.safe[i] && o.reached[i]) CHECK((o.safe[i] && o.reached[i]));
      }
    }
    CHECK(a.metrics.success <= std::min(a.metrics.safety, a.metrics.reach) + 1e-15);
    const auto b = eval::rollout_eval(spec);
    CHECK(a.metrics.safety == b.metrics.safety);
    CHECK(a.metrics.reach == b.metrics.reach);
    CHECK(a.metrics.success_std == b.metrics.success_std);
  }
}

TEST_CASE("gcbf+ needs matching parameters") {
  const auto spec = small_spec(EnvKind::DubinsCar, ControllerKind::GcbfPlus, 2, 10, 1);
  CHECK_THROWS_AS(eval::rollout_eval(spec), ConfigError);
  num::Rng rng(1);
  const auto p = gnn::init_params(rng, EnvKind::DoubleIntegrator);
  CHECK_THROWS_AS(eval::rollout_eval(spec, &p), EnvMismatchError);
}

TEST_CASE("CBF-QP baselines keep single integrators safe") {
  for (auto c : {ControllerKind::Cbf1, ControllerKind::DecCbf01}) {
    CAPTURE(eval::controller_name(c));
    const auto res = eval::rollout_eval(small_spec(EnvKind::SingleIntegrator, c, 8, 512, 2));
    CHECK(res.metrics.safety == 1.0);
  }
}

TEST_CASE("theorem 1 audit: distance CBF under the centralized filter") {
  auto spec = small_spec(EnvKind::SingleIntegrator, ControllerKind::Cbf1, 8, 1024, 1);
  spec.record_trajectories = true;
  spec.world.area = 2.0;  // crowded, so the filter is active
  const auto res = eval::rollout_eval(spec);
  const dyn::Dynamics d(dyn::DynamicsConfig::defaults(EnvKind::SingleIntegrator));
  const auto rep = eval::check_theorem1(res.trajectories[0], eval::pairwise_distance_barrier(spec.world), 1.0, d.dt());
  CHECK(rep.start_in_set);
  CHECK(rep.checked > 0u);
  CHECK(rep.derivative_violation_count == 0u);
  CHECK(rep.negativity_count == 0u);
  CHECK(rep.collision_count == 0u);
  CHECK(rep.consistent());
}

TEST_CASE("theorem 1 audit reports a forced collision with its first step and pair") {
  std::vector<world::World> traj;
  for (int t = 0; t <= 40; ++t) {
    world::World w;
    w.env = EnvKind::SingleIntegrator;
    w.states = {v2(1 + 0.02 * t, 1), v2(2 - 0.02 * t, 1), v2(3, 3)};
    w.goals = w.states;
    traj.push_back(w);
  }
  const auto rep = eval::check_theorem1(traj, eval::pairwise_distance_barrier({}), 1.0, 0.03);
  REQUIRE(rep.collision_count > 0u);
  // The gap 1 - 0.04 t first drops to 2r = 0.1 or below at t = 23.
  const auto& first = rep.collisions.front();
  CHECK(first.step == 23);
  CHECK(first.i == 0);
  CHECK(first.j == 1);
  CHECK(rep.derivative_violation_count > 0u);
  CHECK(rep.consistent());
}

TEST_CASE("exponential decay stays positive (scalar comparison lemma)") {
  for (double alpha : {0.01, 1.0, 10.0}) {
    for (int k = 0; k <= 1000; ++k) {
      const double t = 0.05 * k;
      CHECK(std::exp(-alpha * t) > 0.0);
    }
  }
}

TEST_CASE("assumption 1 probes: non-neighbours never change h_i or pi_i") {
  num::Rng rng(9);
  const auto p = gnn::init_params(rng, EnvKind::DoubleIntegrator);
  auto spec = small_spec(EnvKind::DoubleIntegrator, ControllerKind::GcbfPlus, 6, 64, 1);
  spec.n_obstacles = 3;
  spec.world.area = 2.0;
  num::Rng probe_rng(3);
  const auto rep = eval::check_assumption1(p, spec, 60, probe_rng, 8);
  CHECK(rep.probes == 60u);
  CHECK(rep.locality_holds());
  for (const auto& s : rep.samples) {
    CHECK(s.distance < 1.0);
    CHECK(s.weight > 0.0);
    CHECK(s.weight <= 1.0);
  }
}

TEST_CASE("a singleton neighbourhood has attention weight one at any distance") {
  num::Rng rng(2);
  const auto p = gnn::init_params(rng, EnvKind::DoubleIntegrator);
  const dyn::Dynamics d(dyn::DynamicsConfig::defaults(EnvKind::DoubleIntegrator));
  for (double dist : {0.5, 3.0, 10.0}) {
    world::World w;
    w.env = EnvKind::DoubleIntegrator;
    w.params.area = 20.0;
    w.states = {(Vec(4) << 1, 1, 0, 0).finished()};
    w.goals = {v2(1 + dist, 1)};
    const auto att = gnn::attention_weights(p, world::build_graph(w, d), 0);
    REQUIRE(att.size() == 1u);
    CHECK(att[0].weight == 1.0);
  }
}

TEST_CASE("scaling at N = 8 matches rollout_eval") {
  const auto base = small_spec(EnvKind::SingleIntegrator, ControllerKind::Nominal, 8, 128, 2);
  const auto sc = eval::scaling_experiment(base, {8, 16}, nullptr);
  REQUIRE(sc.points.size() == 2u);
  CHECK_FALSE(sc.stopped_after.has_value());
  const auto direct = eval::rollout_eval(base).metrics;
  CHECK(sc.points[0].metrics.safety == direct.safety);
  CHECK(sc.points[0].metrics.reach == direct.reach);
  CHECK(sc.points[1].metrics.n_agents == 16);
  CHECK(sc.points[1].metrics.density == doctest::Approx(1.0));
}

TEST_CASE("sensitivity grid and the default cell") {
  auto base = train::TrainConfig::defaults(EnvKind::DoubleIntegrator);
  const auto grid = eval::sensitivity_grid(base);
  CHECK(grid.size() == 9u);
  CHECK(grid.front().alpha == 1e-2);
  CHECK(grid.back().horizon == 64);

  base.total_steps = 2;
  base.collect_every = 2;
  base.n_scenarios = 1;
  base.rollout_length = 4;
  base.batch_size = 2;
  base.n_agents = 3;
  base.n_obstacles = 1;
  auto spec = small_spec(EnvKind::DoubleIntegrator, ControllerKind::GcbfPlus, 3, 32, 1);
  const auto cells = eval::sweep_sensitivity(base, spec, {{1.0, 32}}, 5);
  REQUIRE(cells.size() == 1u);
  num::Rng rng(5);
  const auto tr = train::train(base, rng);
  const auto direct = eval::rollout_eval(spec, &tr.params).metrics;
  CHECK(cells[0].metrics.safety == direct.safety);
  CHECK(cells[0].metrics.success == direct.success);
  CHECK(cells[0].final_loss == tr.curve.back().loss.total);
}
