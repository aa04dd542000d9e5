#include "gcbf/dynamics/dynamics.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "gcbf/dynamics/lqr.hpp"
#include "gcbf/error.hpp"

namespace gcbf::dyn {

namespace {

// Crazyflie state layout.
enum Cf : int { PX, PY, PZ, U, V, W, PHI, THETA, PSI, R, Q, P };
constexpr std::array<int, 8> kInnerStates = {U, V, W, PHI, THETA, R, Q, P};

}  // namespace

std::string_view env_name(EnvKind env) {
  switch (env) {
    case EnvKind::SingleIntegrator: return "SingleIntegrator";
    case EnvKind::DoubleIntegrator: return "DoubleIntegrator";
    case EnvKind::DubinsCar: return "DubinsCar";
    case EnvKind::LinearDrone: return "LinearDrone";
    case EnvKind::Crazyflie: return "CrazyflieDrone";
  }
  return "?";
}

EnvKind env_from_name(std::string_view name) {
  for (EnvKind e : kAllEnvs) {
    if (env_name(e) == name) return e;
  }
  if (name == "Crazyflie") return EnvKind::Crazyflie;
  throw ConfigError("unknown environment '" + std::string(name) + "'");
}

EnvShape env_shape(EnvKind env) {
  switch (env) {
    case EnvKind::SingleIntegrator: return {2, 2, 2, 2};
    case EnvKind::DoubleIntegrator: return {4, 2, 2, 4};
    case EnvKind::DubinsCar: return {4, 2, 2, 4};
    case EnvKind::LinearDrone: return {6, 3, 3, 6};
    case EnvKind::Crazyflie: return {12, 4, 3, 6};
  }
  return {0, 0, 0, 0};
}

double wrap_angle(double a) {
  a = std::fmod(a + std::numbers::pi, 2 * std::numbers::pi);
  if (a < 0) a += 2 * std::numbers::pi;
  return a - std::numbers::pi;
}

Eigen::Matrix4d mixing_matrix(const CrazyflieParams& p) {
  const double t = p.ct;
  const double l = p.arm * p.ct * std::sqrt(2.0);
  const double c = p.cd;
  Eigen::Matrix4d m;
  m << t, t, t, t,
      -l, -l, l, l,
      -l, l, l, -l,
      -c, c, -c, c;
  return m;
}

MotorCommand motor_speeds(const CrazyflieParams& p, const Eigen::Vector4d& thrust_moments) {
  MotorCommand cmd;
  cmd.omega_sq = mixing_matrix(p).partialPivLu().solve(thrust_moments);
  for (int k = 0; k < 4; ++k) {
    if (cmd.omega_sq[k] < 0) {
      cmd.omega_sq[k] = 0;
      cmd.saturated = true;
    }
  }
  return cmd;
}

Eigen::Vector4d thrust_from_speeds(const CrazyflieParams& p, const Eigen::Vector4d& omega_sq) {
  return mixing_matrix(p) * omega_sq;
}

DynamicsConfig DynamicsConfig::defaults(EnvKind env) {
  DynamicsConfig c;
  c.env = env;
  const int m = env_shape(env).m;
  c.u_lo = Vec::Constant(m, -1.0);
  c.u_hi = Vec::Constant(m, 1.0);
  c.cf_inner_q = Vec::Ones(8);
  c.cf_inner_r = Vec::Ones(4);
  c.cf_inner_r[0] = 10.0;  // softer thrust loop: large descent commands would otherwise clip the motors
  return c;
}

void linear_model(EnvKind env, Mat& a, Mat& b) {
  switch (env) {
    case EnvKind::SingleIntegrator:
      a = Mat::Zero(2, 2);
      b = Mat::Identity(2, 2);
      return;
    case EnvKind::DoubleIntegrator:
      a = Mat::Zero(4, 4);
      a.topRightCorner(2, 2).setIdentity();
      b = Mat::Zero(4, 2);
      b.bottomRows(2).setIdentity();
      return;
    case EnvKind::LinearDrone:
      a = Mat::Zero(6, 6);
      a.topRightCorner(3, 3).setIdentity();
      a(3, 3) = -1.1;
      a(4, 4) = -1.1;
      a(5, 5) = -6.0;
      b = Mat::Zero(6, 3);
      b(3, 0) = 1.1;
      b(4, 1) = 1.1;
      b(5, 2) = 6.0;
      return;
    default:
      throw Error("linear_model: " + std::string(env_name(env)) + " is not linear");
  }
}

Dynamics::Dynamics(DynamicsConfig cfg) : cfg_(std::move(cfg)), shape_(env_shape(cfg_.env)) {
  if (cfg_.u_lo.size() != shape_.m || cfg_.u_hi.size() != shape_.m) {
    throw ConfigError("control limits must have " + std::to_string(shape_.m) + " entries for " +
                      std::string(env_name(cfg_.env)));
  }
  if ((cfg_.u_lo.array() > cfg_.u_hi.array()).any()) throw ConfigError("control lower limit above upper limit");
  if (!(cfg_.dt > 0)) throw ConfigError("dt must be positive");
  if (cfg_.env == EnvKind::DoubleIntegrator || cfg_.env == EnvKind::LinearDrone) {
    Mat a, b;
    linear_model(cfg_.env, a, b);
    lqr_k_ = dyn::lqr_gain(a, b, Mat::Identity(shape_.n, shape_.n), Mat::Identity(shape_.m, shape_.m));
  }
  if (cfg_.env == EnvKind::Crazyflie) {
    const auto& p = cfg_.cf;
    if (cfg_.cf_inner_q.size() != 8 || cfg_.cf_inner_r.size() != 4) {
      throw ConfigError("Crazyflie inner LQR weights need 8 state and 4 input entries");
    }
    Mat a = Mat::Zero(8, 8), b = Mat::Zero(8, 4);
    a(0, 4) = p.g;   // u_dot = g theta
    a(1, 3) = -p.g;  // v_dot = -g phi
    a(3, 5) = 1.0;   // phi_dot = r
    a(4, 6) = 1.0;   // theta_dot = q
    b(2, 0) = 1.0 / p.mass;
    b(5, 1) = 1.0 / p.izz;
    b(6, 2) = 1.0 / p.iyy;
    b(7, 3) = 1.0 / p.ixx;
    const Mat ad = Mat::Identity(8, 8) + cfg_.dt * a;
    const Mat bd = cfg_.dt * b;
    cf_k_ = dlqr_gain(ad, bd, cfg_.cf_inner_q.asDiagonal(), cfg_.cf_inner_r.asDiagonal());
    mix_ = mixing_matrix(p);
    mix_inv_ = mix_.inverse();
  }
}

Vec Dynamics::clamp(const Vec& u) const { return u.cwiseMax(cfg_.u_lo).cwiseMin(cfg_.u_hi); }

Vec Dynamics::plant_derivative(const Vec& x, const Vec& u) const {
  Vec d = Vec::Zero(shape_.n);
  switch (cfg_.env) {
    case EnvKind::SingleIntegrator:
      d = u;
      break;
    case EnvKind::DoubleIntegrator:
      d << x[2], x[3], u[0], u[1];
      break;
    case EnvKind::DubinsCar:
      d << x[3] * std::cos(x[2]), x[3] * std::sin(x[2]), u[0], u[1];
      break;
    case EnvKind::LinearDrone:
      d << x[3], x[4], x[5], -1.1 * x[3] + 1.1 * u[0], -1.1 * x[4] + 1.1 * u[1], -6.0 * x[5] + 6.0 * u[2];
      break;
    case EnvKind::Crazyflie: {
      const auto& c = cfg_.cf;
      const double th = x[THETA];
      if (std::abs(th) >= std::numbers::pi / 2 - 1e-6) {
        throw SingularityError("Crazyflie pitch " + std::to_string(th) + " at the Euler-angle singularity");
      }
      const double cph = std::cos(x[PHI]), sph = std::sin(x[PHI]);
      const double cth = std::cos(th), sth = std::sin(th), tth = std::tan(th);
      const double cps = std::cos(x[PSI]), sps = std::sin(x[PSI]);
      const double bu = x[U], bv = x[V], bw = x[W];
      const double r = x[R], q = x[Q], p = x[P];
      d[PX] = (cph * cps * sth + sph * sps) * bw - (sps * cph - cps * sph * sth) * bv + bu * cps * cth;
      d[PY] = (sph * sps * sth + cph * cps) * bv - (cps * sph - sps * cph * sth) * bw + bu * sps * cth;
      d[PZ] = bw * cph * cth - bu * sth + bv * sph * cth;
      d[U] = r * bv - q * bw + c.g * sth;
      d[V] = p * bw - r * bu - c.g * sph * cth;
      d[W] = q * bu - p * bv + u[0] / c.mass - c.g * cth * cph;
      d[PHI] = r * cph / cth + q * sph / cth;
      d[THETA] = q * cph - r * sph;
      d[PSI] = p + r * cph * tth + q * sph * tth;
      d[R] = (u[1] - p * q * (c.iyy - c.ixx)) / c.izz;
      d[Q] = (u[2] - p * r * (c.ixx - c.izz)) / c.iyy;
      d[P] = (u[3] - q * r * (c.izz - c.iyy)) / c.ixx;
      break;
    }
  }
  return d;
}

namespace {

// z_ref = S(psi) a for the inner loop: body-frame velocity reference and yaw rate.
Mat inner_reference_map(double psi) {
  Mat s = Mat::Zero(8, 4);
  const double c = std::cos(psi), sn = std::sin(psi);
  s(0, 0) = c;
  s(0, 1) = sn;
  s(1, 0) = -sn;
  s(1, 1) = c;
  s(2, 2) = 1.0;
  s(7, 3) = 1.0;  // body rate p drives yaw at hover
  return s;
}

Vec inner_state(const Vec& x) {
  Vec z(8);
  for (int k = 0; k < 8; ++k) z[k] = x[kInnerStates[k]];
  return z;
}

Mat plant_input_matrix(const CrazyflieParams& c) {
  Mat b = Mat::Zero(12, 4);
  b(W, 0) = 1.0 / c.mass;
  b(R, 1) = 1.0 / c.izz;
  b(Q, 2) = 1.0 / c.iyy;
  b(P, 3) = 1.0 / c.ixx;
  return b;
}

}  // namespace

Eigen::Vector4d Dynamics::inner_loop(const Vec& x, const Vec& action) const {
  const Vec z_ref = inner_reference_map(x[PSI]) * action;
  Eigen::Vector4d u_hover(cfg_.cf.mass * cfg_.cf.g, 0, 0, 0);
  return u_hover - cf_k_ * (inner_state(x) - z_ref);
}

void Dynamics::affine(const Vec& x, Vec& f, Mat& g) const {
  switch (cfg_.env) {
    case EnvKind::SingleIntegrator:
    case EnvKind::DoubleIntegrator:
    case EnvKind::DubinsCar:
    case EnvKind::LinearDrone: {
      f = plant_derivative(x, Vec::Zero(shape_.m));
      g = Mat::Zero(shape_.n, shape_.m);
      for (int k = 0; k < shape_.m; ++k) g.col(k) = plant_derivative(x, Vec::Unit(shape_.m, k)) - f;
      return;
    }
    case EnvKind::Crazyflie: {
      const Mat bu = plant_input_matrix(cfg_.cf);
      const Eigen::Vector4d u0 = inner_loop(x, Vec::Zero(4));
      f = plant_derivative(x, u0);
      g = bu * cf_k_ * inner_reference_map(x[PSI]);
      return;
    }
  }
}

Vec Dynamics::step(const Vec& x, const Vec& action, bool* motor_saturated) const {
  const Vec a = clamp(action);
  if (motor_saturated) *motor_saturated = false;
  if (cfg_.env != EnvKind::Crazyflie) return x + cfg_.dt * plant_derivative(x, a);
  const Eigen::Vector4d wanted = inner_loop(x, a);
  const MotorCommand cmd = motor_speeds(cfg_.cf, wanted);
  if (motor_saturated) *motor_saturated = cmd.saturated;
  const Vec applied = cmd.saturated ? Vec(mix_ * cmd.omega_sq) : Vec(wanted);
  return x + cfg_.dt * plant_derivative(x, applied);
}

Mat Dynamics::step_action_jacobian(const Vec& x) const {
  Vec f;
  Mat g;
  affine(x, f, g);
  return cfg_.dt * g;
}

Vec Dynamics::nominal(const Vec& x, const Vec& goal) const {
  const int pd = shape_.pos_dim;
  const Vec dp = goal.head(pd) - x.head(pd);
  Vec u(shape_.m);
  switch (cfg_.env) {
    case EnvKind::SingleIntegrator:
      u = cfg_.si_gain * dp;
      break;
    case EnvKind::DoubleIntegrator:
    case EnvKind::LinearDrone: {
      Vec err = x;
      err.head(pd) -= goal.head(pd);
      u = -lqr_k_ * err;
      break;
    }
    case EnvKind::DubinsCar: {
      const double dist = dp.norm();
      const double heading = dist > 1e-9 ? wrap_angle(std::atan2(dp[1], dp[0]) - x[2]) : 0.0;
      // Slowing down while misaligned removes the circular orbit of radius
      // v / omega_max that the plain distance law settles into.
      const double v_des = std::min(dist, cfg_.dubins_v_max) * std::max(0.0, std::cos(heading));
      u << cfg_.dubins_k_theta * heading, cfg_.dubins_k_v * (v_des - x[3]);
      break;
    }
    case EnvKind::Crazyflie:
      // Outer LQR on the velocity-commanded model p_dot = v_ref with Q = R = I,
      // whose gain is the identity.
      u << dp[0], dp[1], dp[2], -x[PSI];
      break;
  }
  return clamp(u);
}

Vec Dynamics::velocity(const Vec& x) const {
  switch (cfg_.env) {
    case EnvKind::SingleIntegrator: return Vec::Zero(2);
    case EnvKind::DoubleIntegrator: return x.segment(2, 2);
    case EnvKind::DubinsCar: return Eigen::Vector2d(x[3] * std::cos(x[2]), x[3] * std::sin(x[2]));
    case EnvKind::LinearDrone: return x.segment(3, 3);
    case EnvKind::Crazyflie: return plant_derivative(x, Vec::Zero(4)).head(3);
  }
  return {};
}

Mat Dynamics::velocity_jacobian(const Vec& x) const {
  Mat j = Mat::Zero(shape_.pos_dim, shape_.n);
  switch (cfg_.env) {
    case EnvKind::SingleIntegrator:
      break;
    case EnvKind::DoubleIntegrator:
      j.rightCols(2).setIdentity();
      break;
    case EnvKind::DubinsCar:
      j(0, 2) = -x[3] * std::sin(x[2]);
      j(1, 2) = x[3] * std::cos(x[2]);
      j(0, 3) = std::cos(x[2]);
      j(1, 3) = std::sin(x[2]);
      break;
    case EnvKind::LinearDrone:
      j.rightCols(3).setIdentity();
      break;
    case EnvKind::Crazyflie: {
      // Central differences; the closed form is long and this is not a hot path.
      const double h = 1e-6;
      Vec xp = x;
      for (int k = 0; k < shape_.n; ++k) {
        xp[k] = x[k] + h;
        const Vec vp = velocity(xp);
        xp[k] = x[k] - h;
        const Vec vm = velocity(xp);
        xp[k] = x[k];
        j.col(k) = (vp - vm) / (2 * h);
      }
      break;
    }
  }
  return j;
}

Vec Dynamics::edge_state(const Vec& x) const {
  switch (cfg_.env) {
    case EnvKind::DubinsCar: return Eigen::Vector4d(x[0], x[1], x[3] * std::cos(x[2]), x[3] * std::sin(x[2]));
    case EnvKind::Crazyflie: {
      Vec e(6);
      e << x.head(3), velocity(x);
      return e;
    }
    default: return x;
  }
}

Mat Dynamics::edge_state_jacobian(const Vec& x) const {
  switch (cfg_.env) {
    case EnvKind::DubinsCar:
    case EnvKind::Crazyflie: {
      const int pd = shape_.pos_dim;
      Mat j = Mat::Zero(shape_.edge_dim, shape_.n);
      j.topLeftCorner(pd, pd).setIdentity();
      j.bottomRows(pd) = velocity_jacobian(x);
      return j;
    }
    default: return Mat::Identity(shape_.n, shape_.n);
  }
}

}  // namespace gcbf::dyn
