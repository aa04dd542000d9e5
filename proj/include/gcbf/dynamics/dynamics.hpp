#pragma once

#include <Eigen/Dense>
#include <array>
#include <string_view>

namespace gcbf::dyn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class EnvKind { SingleIntegrator, DoubleIntegrator, DubinsCar, LinearDrone, Crazyflie };

inline constexpr std::array<EnvKind, 5> kAllEnvs = {EnvKind::SingleIntegrator, EnvKind::DoubleIntegrator,
                                                    EnvKind::DubinsCar, EnvKind::LinearDrone, EnvKind::Crazyflie};

std::string_view env_name(EnvKind env);
// Throws ConfigError for unknown names.
EnvKind env_from_name(std::string_view name);

struct EnvShape {
  int n;         // state
  int m;         // action
  int pos_dim;   // leading position entries of the state
  int edge_dim;  // length of e(x), the per-node vector differenced into edge features
};
EnvShape env_shape(EnvKind env);

struct CrazyflieParams {
  double mass = 0.0299;
  double ixx = 1.395e-5;
  double iyy = 1.395e-5;
  double izz = 2.173e-5;
  double ct = 3.1582e-10;
  double cd = 7.9379e-12;
  double arm = 0.03973;
  double g = 9.8;
};

// (U1..U4) = M * (w1^2..w4^2).
Eigen::Matrix4d mixing_matrix(const CrazyflieParams& p);

struct MotorCommand {
  Eigen::Vector4d omega_sq;
  bool saturated = false;  // some requested squared speed was negative and clipped to 0
};
MotorCommand motor_speeds(const CrazyflieParams& p, const Eigen::Vector4d& thrust_moments);
Eigen::Vector4d thrust_from_speeds(const CrazyflieParams& p, const Eigen::Vector4d& omega_sq);

struct DynamicsConfig {
  EnvKind env = EnvKind::DoubleIntegrator;
  Vec u_lo;
  Vec u_hi;
  double dt = 0.03;
  double si_gain = 1.0;
  double dubins_k_theta = 1.0;
  double dubins_k_v = 1.0;
  double dubins_v_max = 1.0;
  CrazyflieParams cf;
  // Diagonal weights of the inner discrete LQR on (u,v,w, phi,theta, r,q,p) and (U1..U4).
  Vec cf_inner_q;
  Vec cf_inner_r;

  static DynamicsConfig defaults(EnvKind env);
};

// One agent's dynamics. The action space is what a controller outputs: for
// Crazyflie that is (reference world velocity, yaw rate) and the inner LQR and
// motor mixing run inside step().
class Dynamics {
 public:
  explicit Dynamics(DynamicsConfig cfg);

  const DynamicsConfig& config() const { return cfg_; }
  EnvKind env() const { return cfg_.env; }
  int n() const { return shape_.n; }
  int m() const { return shape_.m; }
  int pos_dim() const { return shape_.pos_dim; }
  int edge_dim() const { return shape_.edge_dim; }
  double dt() const { return cfg_.dt; }

  Vec clamp(const Vec& u) const;

  // f(x) + g(x)u of the plant. For Crazyflie u is (U1, U2, U3, U4).
  // Throws SingularityError when Crazyflie |theta| >= pi/2 - 1e-6.
  Vec plant_derivative(const Vec& x, const Vec& u) const;

  // xdot = f(x) + g(x) a in action space (Crazyflie: closed inner loop,
  // before any motor clipping).
  void affine(const Vec& x, Vec& f, Mat& g) const;

  // Explicit Euler with the action clamped first.
  Vec step(const Vec& x, const Vec& action, bool* motor_saturated = nullptr) const;
  // d step / d action for an unclamped action: dt * g(x).
  Mat step_action_jacobian(const Vec& x) const;

  Vec nominal(const Vec& x, const Vec& goal) const;

  // Crazyflie inner loop: (U1..U4) tracking the action.
  Eigen::Vector4d inner_loop(const Vec& x, const Vec& action) const;
  const Mat& inner_gain() const { return cf_k_; }

  // Position velocity p_dot(x) and its Jacobian (pos_dim x n). Single integrator
  // has no velocity state and returns zeros.
  Vec velocity(const Vec& x) const;
  Mat velocity_jacobian(const Vec& x) const;

  // e(x), whose differences are the edge features, and its Jacobian.
  Vec edge_state(const Vec& x) const;
  Mat edge_state_jacobian(const Vec& x) const;

  // Nominal LQR gain for the linear envs (empty otherwise).
  const Mat& lqr_gain() const { return lqr_k_; }

 private:
  DynamicsConfig cfg_;
  EnvShape shape_;
  Mat lqr_k_;
  Mat cf_k_;            // 4 x 8
  Eigen::Matrix4d mix_;
  Eigen::Matrix4d mix_inv_;
};

// Linear model matrices (A, B) for the envs whose dynamics are linear.
void linear_model(EnvKind env, Mat& a, Mat& b);

double wrap_angle(double a);

}  // namespace gcbf::dyn
