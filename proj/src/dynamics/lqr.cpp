#include "gcbf/dynamics/lqr.hpp"

#include <Eigen/Eigenvalues>
#include <complex>
#include <vector>

#include "gcbf/error.hpp"

namespace gcbf::dyn {

Eigen::MatrixXd solve_care(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& q,
                           const Eigen::MatrixXd& r) {
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd h(2 * n, 2 * n);
  h << a, -b * r.ldlt().solve(b.transpose()), -q, -a.transpose();
  Eigen::EigenSolver<Eigen::MatrixXd> es(h);
  if (es.info() != Eigen::Success) throw Error("CARE: eigen decomposition failed");
  Eigen::MatrixXcd stable(2 * n, n);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < 2 * n; ++i) {
    if (es.eigenvalues()[i].real() < 0) {
      if (k == n) throw Error("CARE: Hamiltonian has too many stable eigenvalues");
      stable.col(k++) = es.eigenvectors().col(i);
    }
  }
  if (k != n) throw Error("CARE: no stabilizing solution (eigenvalues on the imaginary axis)");
  const Eigen::MatrixXcd u1 = stable.topRows(n);
  const Eigen::MatrixXcd u2 = stable.bottomRows(n);
  Eigen::MatrixXd p = (u2 * u1.inverse()).real();
  return 0.5 * (p + p.transpose());
}

Eigen::MatrixXd lqr_gain(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& q,
                         const Eigen::MatrixXd& r) {
  return r.ldlt().solve(b.transpose() * solve_care(a, b, q, r));
}

Eigen::MatrixXd solve_dare(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& q,
                           const Eigen::MatrixXd& r) {
  const Eigen::Index n = a.rows();
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd ak = a;
  Eigen::MatrixXd gk = b * r.ldlt().solve(b.transpose());
  Eigen::MatrixXd hk = q;
  for (int it = 0; it < 200; ++it) {
    const Eigen::PartialPivLU<Eigen::MatrixXd> w(eye + gk * hk);
    const Eigen::MatrixXd w_ak = w.solve(ak);
    const Eigen::MatrixXd w_gk = w.solve(gk);
    const Eigen::MatrixXd h_next = hk + ak.transpose() * hk * w_ak;
    gk = gk + ak * w_gk * ak.transpose();
    ak = ak * w_ak;
    const double change = (h_next - hk).norm();
    hk = 0.5 * (h_next + h_next.transpose());
    if (change <= 1e-13 * std::max(1.0, hk.norm())) return hk;
  }
  throw Error("DARE: doubling iteration did not converge");
}

Eigen::MatrixXd dlqr_gain(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& q,
                          const Eigen::MatrixXd& r) {
  const Eigen::MatrixXd p = solve_dare(a, b, q, r);
  return (r + b.transpose() * p * b).ldlt().solve(b.transpose() * p * a);
}

}  // namespace gcbf::dyn
