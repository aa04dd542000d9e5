#include "gcbf/qp/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gcbf/error.hpp"

namespace gcbf::qp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// All constraints as rows n_k^T u >= c_k, in the QpSolution layout.
struct Rows {
  Mat N;  // dim x count, one normal per column
  Vec c;
  std::vector<bool> present;  // infinite bounds are absent
};

Rows stack_rows(const QpProblem& p) {
  const int n = p.dim(), m = p.rows();
  const bool box = p.lo.size() > 0;
  const int total = m + (box ? 2 * n : 0);
  Rows r{Mat::Zero(n, total), Vec::Zero(total), std::vector<bool>(static_cast<std::size_t>(total), true)};
  if (m > 0) {
    r.N.leftCols(m) = p.A.transpose();
    r.c.head(m) = p.b;
  }
  if (box) {
    for (int k = 0; k < n; ++k) {
      r.N(k, m + k) = 1.0;
      r.c[m + k] = p.lo[k];
      r.present[static_cast<std::size_t>(m + k)] = std::isfinite(p.lo[k]);
      r.N(k, m + n + k) = -1.0;
      r.c[m + n + k] = -p.hi[k];
      r.present[static_cast<std::size_t>(m + n + k)] = std::isfinite(p.hi[k]);
    }
  }
  return r;
}

}  // namespace

void QpProblem::validate() const {
  const auto n = f.size();
  if (H.rows() != n || H.cols() != n) throw ShapeError("QP Hessian does not match the variable count");
  if (A.rows() != b.size() || (b.size() > 0 && A.cols() != n)) throw ShapeError("QP constraint matrix shape mismatch");
  if ((lo.size() != 0 || hi.size() != 0) && (lo.size() != n || hi.size() != n)) {
    throw ShapeError("QP box bounds must both match the variable count");
  }
  if ((H - H.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + H.cwiseAbs().maxCoeff())) {
    throw ConfigError("QP Hessian is not symmetric");
  }
  if (!H.allFinite() || !f.allFinite() || !A.allFinite() || !b.allFinite()) {
    throw NonFiniteError("non-finite QP data");
  }
}

std::string_view status_name(QpStatus s) {
  switch (s) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::Infeasible: return "infeasible";
    case QpStatus::IterationLimit: return "iteration-limit";
  }
  return "unknown";
}

double KktResiduals::max() const { return std::max({stationarity, primal, dual, complementarity}); }

double qp_objective(const QpProblem& p, const Vec& u) { return 0.5 * u.dot(p.H * u) + p.f.dot(u); }

KktResiduals kkt_residuals(const QpProblem& p, const Vec& u, const Vec& lambda) {
  const Rows r = stack_rows(p);
  KktResiduals k;
  Vec grad = p.H * u + p.f;
  for (int j = 0; j < r.c.size(); ++j) {
    if (!r.present[static_cast<std::size_t>(j)]) continue;
    const double s = r.N.col(j).dot(u) - r.c[j];
    grad -= lambda[j] * r.N.col(j);
    k.primal = std::max(k.primal, -s);
    k.dual = std::max(k.dual, -lambda[j]);
    k.complementarity = std::max(k.complementarity, std::abs(lambda[j] * s));
  }
  k.stationarity = grad.cwiseAbs().maxCoeff();
  return k;
}

QpSolution solve_qp(const QpProblem& p, const QpOptions& opts) {
  p.validate();
  const int n = p.dim();
  const Rows rows = stack_rows(p);
  const int total = static_cast<int>(rows.c.size());
  QpSolution sol;
  sol.multipliers = Vec::Zero(total);
  sol.slack = Vec::Zero(p.rows());

  const Eigen::LLT<Mat> llt(p.H);
  if (llt.info() != Eigen::Success) throw ConfigError("QP Hessian is not positive definite");
  const Mat Linv = llt.matrixL().solve(Mat::Identity(n, n));

  // Unconstrained minimum.
  Vec x = -llt.solve(p.f);
  std::vector<int> active;
  Vec lam;  // multipliers of `active`
  Mat J = Linv.transpose();  // J = L^-T Q, Q from the QR of L^-1 N_active
  Mat R(0, 0);

  auto refactor = [&]() {
    const int q = static_cast<int>(active.size());
    if (q == 0) {
      J = Linv.transpose();
      R.resize(0, 0);
      return;
    }
    Mat Na(n, q);
    for (int k = 0; k < q; ++k) Na.col(k) = rows.N.col(active[static_cast<std::size_t>(k)]);
    const Eigen::HouseholderQR<Mat> qr(Linv * Na);
    const Mat Q = qr.householderQ() * Mat::Identity(n, n);
    J = Linv.transpose() * Q;
    R = qr.matrixQR().topLeftCorner(q, q).triangularView<Eigen::Upper>();
  };

  const int cap = opts.max_iterations > 0 ? opts.max_iterations : 100 * (n + 1);
  const double scale_tol = opts.feasibility_tol;
  int iter = 0;
  while (true) {
    // Most violated constraint, relative to its normal's length.
    int pick = -1;
    double worst = 0.0;
    for (int j = 0; j < total; ++j) {
      if (!rows.present[static_cast<std::size_t>(j)]) continue;
      if (std::find(active.begin(), active.end(), j) != active.end()) continue;
      const double nn = rows.N.col(j).norm();
      if (nn == 0.0) {
        if (rows.c[j] > scale_tol) {
          sol.status = QpStatus::Infeasible;
          sol.u = x;
          return sol;
        }
        continue;
      }
      const double s = (rows.N.col(j).dot(x) - rows.c[j]) / nn;
      if (s < -scale_tol * (1.0 + std::abs(rows.c[j]) / nn) && s < worst) {
        worst = s;
        pick = j;
      }
    }
    if (pick < 0) break;

    const Vec np = rows.N.col(pick);
    double lam_p = 0.0;
    while (true) {
      if (++iter > cap) {
        sol.status = QpStatus::IterationLimit;
        sol.u = x;
        sol.iterations = iter;
        return sol;
      }
      const int q = static_cast<int>(active.size());
      const Vec d = J.transpose() * np;
      const Vec z = J.rightCols(n - q) * d.tail(n - q);
      const Vec r = q > 0 ? Vec(R.triangularView<Eigen::Upper>().solve(d.head(q))) : Vec();

      double t1 = kInf;
      int drop = -1;
      for (int k = 0; k < q; ++k) {
        if (r[k] > 1e-14 && lam[k] / r[k] < t1) {
          t1 = lam[k] / r[k];
          drop = k;
        }
      }
      const double zn = z.dot(np);
      const double sp = np.dot(x) - rows.c[pick];
      const double t2 = (z.norm() > 1e-14 * np.norm() && zn > 0) ? -sp / zn : kInf;
      const double t = std::min(t1, t2);
      if (!std::isfinite(t)) {
        sol.status = QpStatus::Infeasible;
        sol.u = x;
        sol.iterations = iter;
        return sol;
      }
      if (std::isfinite(t2)) x += t * z;
      if (q > 0) lam -= t * r;
      lam_p += t;
      if (t == t2) {
        active.push_back(pick);
        lam.conservativeResize(q + 1);
        lam[q] = lam_p;
        refactor();
        break;
      }
      active.erase(active.begin() + drop);
      Vec keep(q - 1);
      for (int k = 0, o = 0; k < q; ++k) {
        if (k != drop) keep[o++] = lam[k];
      }
      lam = keep;
      refactor();
    }
  }

  sol.u = x;
  sol.status = QpStatus::Optimal;
  sol.iterations = iter;
  sol.active = active;
  for (std::size_t k = 0; k < active.size(); ++k) sol.multipliers[active[k]] = lam[static_cast<Eigen::Index>(k)];
  sol.kkt = kkt_residuals(p, x, sol.multipliers);
  sol.objective = qp_objective(p, x);
  return sol;
}

QpSolution solve_qp_relaxed(const QpProblem& p, double penalty, const QpOptions& opts) {
  QpSolution first = solve_qp(p, opts);
  if (first.status != QpStatus::Infeasible || p.rows() == 0) return first;

  const int n = p.dim(), m = p.rows();
  QpProblem ext;
  ext.H = Mat::Zero(n + m, n + m);
  ext.H.topLeftCorner(n, n) = p.H;
  ext.H.bottomRightCorner(m, m) = 2.0 * penalty * Mat::Identity(m, m);
  ext.f = Vec::Zero(n + m);
  ext.f.head(n) = p.f;
  ext.A = Mat::Zero(m, n + m);
  ext.A.leftCols(n) = p.A;
  ext.A.rightCols(m) = Mat::Identity(m, m);
  ext.b = p.b;
  ext.lo = Vec::Constant(n + m, -kInf);
  ext.hi = Vec::Constant(n + m, kInf);
  if (p.lo.size() > 0) {
    ext.lo.head(n) = p.lo;
    ext.hi.head(n) = p.hi;
  }
  ext.lo.tail(m).setZero();
  QpSolution s = solve_qp(ext, opts);
  QpSolution out;
  out.status = s.status;
  out.iterations = first.iterations + s.iterations;
  out.relaxed = true;
  out.u = s.u.head(n);
  out.slack = s.u.tail(m);
  out.kkt = s.kkt;
  out.objective = qp_objective(p, out.u);
  out.multipliers = Vec::Zero(m + (p.lo.size() > 0 ? 2 * n : 0));
  out.multipliers.head(m) = s.multipliers.head(m);
  if (p.lo.size() > 0) {
    out.multipliers.segment(m, n) = s.multipliers.segment(m, n);
    out.multipliers.segment(m + n, n) = s.multipliers.segment(m + 2 * n + m, n);
  }
  return out;
}

}  // namespace gcbf::qp
