#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>

#include "doctest.h"
#include "gcbf/dynamics/dynamics.hpp"
#include "gcbf/dynamics/lqr.hpp"
#include "gcbf/error.hpp"
#include "gcbf/numerics/rng.hpp"

using namespace gcbf;
using namespace gcbf::dyn;

namespace {

Vec random_vec(num::Rng& rng, int n, double scale = 1.0) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = scale * rng.uniform(-1, 1);
  return v;
}

Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  int i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

Dynamics make(EnvKind env) { return Dynamics(DynamicsConfig::defaults(env)); }

}  // namespace

TEST_CASE("hand-evaluated derivatives") {
  CHECK(make(EnvKind::SingleIntegrator).plant_derivative(vec({0.3, -2}), vec({0, 0})).isZero(0));
  CHECK(make(EnvKind::DoubleIntegrator).plant_derivative(vec({0, 0, 1, 0}), vec({0, 1})) == vec({1, 0, 0, 1}));
  CHECK(make(EnvKind::DubinsCar).plant_derivative(vec({0, 0, 0, 2}), vec({0, 0})) == vec({2, 0, 0, 0}));
}

TEST_CASE("Euler steps and clamp contract") {
  const auto si = make(EnvKind::SingleIntegrator);
  const Vec x = si.step(vec({1, 1}), vec({1, 0}));
  CHECK(x[0] == doctest::Approx(1.03).epsilon(1e-15));
  CHECK(x[1] == 1.0);
  const auto di = make(EnvKind::DoubleIntegrator);
  const Vec rest = vec({0.4, 0.7, 0, 0});
  CHECK(di.step(rest, vec({0, 0})) == rest);
  num::Rng rng(1);
  for (EnvKind env : kAllEnvs) {
    const auto d = make(env);
    for (int t = 0; t < 20; ++t) {
      Vec xs = random_vec(rng, d.n(), 0.3);
      const Vec u = random_vec(rng, d.m(), 3.0);
      CHECK(d.step(xs, u) == d.step(xs, d.clamp(u)));
      CHECK(d.clamp(d.clamp(u)) == d.clamp(u));
      CHECK((d.clamp(u).array() <= 1.0).all());
      CHECK((d.clamp(u).array() >= -1.0).all());
    }
  }
}

TEST_CASE("nominal controllers") {
  CHECK(make(EnvKind::DoubleIntegrator).nominal(vec({1, 2, 0, 0}), vec({1, 2})).isZero(0));
  CHECK(make(EnvKind::SingleIntegrator).nominal(vec({0, 0}), vec({1, 0})) == vec({1, 0}));
  CHECK(make(EnvKind::LinearDrone).nominal(vec({1, 2, 3, 0, 0, 0}), vec({1, 2, 3})).isZero(0));
  CHECK(make(EnvKind::DubinsCar).nominal(vec({1, 2, 0, 0}), vec({1, 2})).isZero(0));
  const Vec cf = make(EnvKind::Crazyflie).nominal(Vec::Zero(12), Vec::Zero(3));
  CHECK(cf.isZero(0));
}

TEST_CASE("1-D double integrator LQR gain is [1, sqrt 3]") {
  Mat a(2, 2), b(2, 1);
  a << 0, 1, 0, 0;
  b << 0, 1;
  const Mat k = lqr_gain(a, b, Mat::Identity(2, 2), Mat::Identity(1, 1));
  CHECK(k(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(k(0, 1) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));
}

TEST_CASE("scalar DARE matches the closed form") {
  // p = p - p^2/(1+p) + 1  =>  p^2 - p - 1 = 0
  const Mat p = solve_dare(Mat::Ones(1, 1), Mat::Ones(1, 1), Mat::Ones(1, 1), Mat::Ones(1, 1));
  CHECK(p(0, 0) == doctest::Approx((1 + std::sqrt(5.0)) / 2).epsilon(1e-12));
}

TEST_CASE("LQR closed loop converges within 30 s on the double integrator") {
  auto cfg = DynamicsConfig::defaults(EnvKind::DoubleIntegrator);
  cfg.u_lo = Vec::Constant(2, -1e9);
  cfg.u_hi = Vec::Constant(2, 1e9);
  const Dynamics d(cfg);
  num::Rng rng(2);
  for (int t = 0; t < 10; ++t) {
    Vec x = Vec::Zero(4);
    x.head(2) = random_vec(rng, 2, 4.0);
    x.tail(2) = random_vec(rng, 2, 1.0);
    const Vec goal = random_vec(rng, 2, 4.0);
    for (int k = 0; k < static_cast<int>(30.0 / d.dt()); ++k) x = d.step(x, d.nominal(x, goal));
    Vec err = x;
    err.head(2) -= goal;
    CHECK(err.norm() < 1e-3);
  }
}

TEST_CASE("Crazyflie hover, mixing and singularity") {
  const auto d = make(EnvKind::Crazyflie);
  const CrazyflieParams p;
  const Eigen::Vector4d u = d.inner_loop(Vec::Zero(12), Vec::Zero(4));
  CHECK(u[0] == doctest::Approx(0.0299 * 9.8).epsilon(1e-12));
  CHECK(u[0] == doctest::Approx(0.293).epsilon(1e-3));
  CHECK(u.tail(3).isZero(0));
  CHECK(d.plant_derivative(Vec::Zero(12), u).norm() < 1e-12);

  num::Rng rng(3);
  const Eigen::Matrix4d m = mixing_matrix(p);
  for (int t = 0; t < 100; ++t) {
    Eigen::Vector4d w;
    for (int k = 0; k < 4; ++k) w[k] = rng.uniform(1e7, 5e8);
    const Eigen::Vector4d uu = thrust_from_speeds(p, w);
    const MotorCommand back = motor_speeds(p, uu);
    CHECK(!back.saturated);
    CHECK((back.omega_sq - w).norm() <= 1e-9 * w.norm());
    CHECK((m * m.inverse() - Eigen::Matrix4d::Identity()).norm() < 1e-9);
  }
  const Eigen::Vector4d eq = thrust_from_speeds(p, Eigen::Vector4d::Constant(2e8));
  CHECK(eq.tail(3).norm() <= 1e-15 * eq[0]);
  CHECK(motor_speeds(p, Eigen::Vector4d(-1.0, 0, 0, 0)).saturated);

  Vec x = Vec::Zero(12);
  x[7] = std::numbers::pi / 2;
  CHECK_THROWS_AS(d.plant_derivative(x, u), SingularityError);
  x[7] = -(std::numbers::pi / 2 - 1e-7);
  CHECK_THROWS_AS(d.plant_derivative(x, u), SingularityError);
}

TEST_CASE("control affinity of every model") {
  num::Rng rng(4);
  for (EnvKind env : kAllEnvs) {
    const auto d = make(env);
    const int plant_m = env == EnvKind::Crazyflie ? 4 : d.m();
    for (int t = 0; t < 50; ++t) {
      const Vec x = random_vec(rng, d.n(), 0.5);
      const Vec u1 = random_vec(rng, plant_m), u2 = random_vec(rng, plant_m);
      const double a = rng.uniform(-2, 2);
      const Vec f0 = d.plant_derivative(x, Vec::Zero(plant_m));
      const Vec lhs = d.plant_derivative(x, a * u1 + u2) - f0;
      const Vec rhs = a * (d.plant_derivative(x, u1) - f0) + (d.plant_derivative(x, u2) - f0);
      CHECK((lhs - rhs).norm() <= 1e-9 * std::max(1.0, lhs.norm()));

      // action-space affine form reproduces the unsaturated step
      Vec f;
      Mat g;
      d.affine(x, f, g);
      const Vec act = random_vec(rng, d.m(), 0.9);
      bool sat = false;
      const Vec stepped = d.step(x, act, &sat);
      if (!sat) CHECK((stepped - (x + d.dt() * (f + g * act))).norm() <= 1e-9 * std::max(1.0, stepped.norm()));
    }
  }
}

TEST_CASE("velocity and edge-map Jacobians match central differences") {
  num::Rng rng(5);
  for (EnvKind env : kAllEnvs) {
    const auto d = make(env);
    for (int t = 0; t < 10; ++t) {
      const Vec x = random_vec(rng, d.n(), 0.5);
      const Mat je = d.edge_state_jacobian(x);
      const Mat jv = d.velocity_jacobian(x);
      for (int k = 0; k < d.n(); ++k) {
        Vec xp = x, xm = x;
        xp[k] += 1e-6;
        xm[k] -= 1e-6;
        CHECK((je.col(k) - (d.edge_state(xp) - d.edge_state(xm)) / 2e-6).norm() < 1e-6);
        CHECK((jv.col(k) - (d.velocity(xp) - d.velocity(xm)) / 2e-6).norm() < 1e-6);
      }
    }
  }
}

TEST_CASE("Euler error orders against the matrix exponential") {
  // Local one-step error is O(dt^2) (ratio 4 when halving dt); global error at a
  // fixed horizon is O(dt) (ratio 2).
  for (EnvKind env : {EnvKind::DoubleIntegrator, EnvKind::LinearDrone}) {
    Mat a, b;
    linear_model(env, a, b);
    const int n = static_cast<int>(a.rows()), m = static_cast<int>(b.cols());
    // constant input folded into an augmented autonomous system
    Mat aug = Mat::Zero(n + m, n + m);
    aug.topLeftCorner(n, n) = a;
    aug.topRightCorner(n, m) = b;
    Vec z0 = Vec::Zero(n + m);
    z0.head(n) = Vec::LinSpaced(n, 0.3, -0.2);
    z0.tail(m) = Vec::LinSpaced(m, 0.5, -0.4);
    auto euler = [&](double dt, int steps) {
      auto cfg = DynamicsConfig::defaults(env);
      cfg.dt = dt;
      const Dynamics d(cfg);
      Vec x = z0.head(n);
      for (int k = 0; k < steps; ++k) x = d.step(x, z0.tail(m));
      return x;
    };
    auto exact = [&](double t) -> Vec { return Vec((aug * t).exp() * z0).head(n); };
    const double dt = 0.03;
    const double local1 = (euler(dt, 1) - exact(dt)).norm();
    const double local2 = (euler(dt / 2, 1) - exact(dt / 2)).norm();
    CHECK(std::log2(local1 / local2) >= 1.9);
    const double horizon = 1.2;
    const double global1 = (euler(dt, 40) - exact(horizon)).norm();
    const double global2 = (euler(dt / 2, 80) - exact(horizon)).norm();
    const double order = std::log2(global1 / global2);
    CHECK(order > 0.9);
    CHECK(order < 1.1);
  }
}

TEST_CASE("step Jacobian with respect to the action") {
  num::Rng rng(6);
  for (EnvKind env : kAllEnvs) {
    const auto d = make(env);
    for (int t = 0; t < 5; ++t) {
      const Vec x = random_vec(rng, d.n(), 0.2);
      const Vec act = random_vec(rng, d.m(), 0.5);
      const Mat j = d.step_action_jacobian(x);
      INFO(env_name(env), " x=", x.transpose(), " a=", act.transpose());
      bool saturated = false;
      d.step(x, act, &saturated);
      if (saturated) continue;  // motor clipping makes the step nonlinear in the action
      for (int k = 0; k < d.m(); ++k) {
        Vec ap = act, am = act;
        ap[k] += 1e-6;
        am[k] -= 1e-6;
        CHECK((j.col(k) - (d.step(x, ap) - d.step(x, am)) / 2e-6).norm() < 1e-6 * std::max(1.0, j.col(k).norm()));
      }
    }
  }
}

TEST_CASE("environment names round-trip") {
  for (EnvKind env : kAllEnvs) CHECK(env_from_name(env_name(env)) == env);
  CHECK_THROWS_AS(env_from_name("Bicycle"), ConfigError);
}
