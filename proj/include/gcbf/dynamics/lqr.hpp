#pragma once

#include <Eigen/Dense>

namespace gcbf::dyn {

// Stabilizing solution of A'P + PA - PBR^-1B'P + Q = 0 from the stable
// invariant subspace of the Hamiltonian matrix.
Eigen::MatrixXd solve_care(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& q,
                           const Eigen::MatrixXd& r);
// K = R^-1 B' P, so u = -K x.
Eigen::MatrixXd lqr_gain(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& q,
                         const Eigen::MatrixXd& r);

// Stabilizing solution of P = A'PA - A'PB(R+B'PB)^-1B'PA + Q by the
// structure-preserving doubling iteration.
Eigen::MatrixXd solve_dare(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& q,
                           const Eigen::MatrixXd& r);
// K = (R + B'PB)^-1 B'PA, so u_k = -K x_k.
Eigen::MatrixXd dlqr_gain(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& q,
                          const Eigen::MatrixXd& r);

}  // namespace gcbf::dyn
