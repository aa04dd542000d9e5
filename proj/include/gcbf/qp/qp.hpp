#pragma once

#include <Eigen/Dense>
#include <string_view>
#include <vector>

namespace gcbf::qp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// minimize 1/2 u^T H u + f^T u  subject to  A u >= b  and  lo <= u <= hi.
// Empty lo / hi mean no box; infinite entries mean an open side.
struct QpProblem {
  Mat H;
  Vec f;
  Mat A;
  Vec b;
  Vec lo;
  Vec hi;

  int dim() const { return static_cast<int>(f.size()); }
  int rows() const { return static_cast<int>(b.size()); }
  // Throws ShapeError / ConfigError on inconsistent sizes or an asymmetric H.
  void validate() const;
};

enum class QpStatus { Optimal, Infeasible, IterationLimit };
std::string_view status_name(QpStatus s);

struct KktResiduals {
  double stationarity = 0.0;  // |H u + f - sum lambda_i a_i|_inf
  double primal = 0.0;        // max violation of any row or bound
  double dual = 0.0;          // max(-lambda)
  double complementarity = 0.0;  // max |lambda_i * slack_i|
  double max() const;
};

// Constraint k < rows() is general row k; then lower bounds of every
// coordinate, then upper bounds.
struct QpSolution {
  Vec u;
  QpStatus status = QpStatus::Optimal;
  std::vector<int> active;
  Vec multipliers;  // one per constraint in the layout above
  KktResiduals kkt;
  int iterations = 0;
  bool relaxed = false;  // slack relaxation was needed
  Vec slack;             // per general row, zero unless relaxed
  double objective = 0.0;
};

struct QpOptions {
  double feasibility_tol = 1e-11;
  int max_iterations = 0;  // 0 means 100 * (dim + 1)
};

// Goldfarb-Idnani dual active-set method. H must be positive definite.
QpSolution solve_qp(const QpProblem& p, const QpOptions& opts = {});

// Solves p; when it is infeasible, solves again with a slack s_k >= 0 on
// every general row, penalised by penalty * s_k^2, and flags the result.
QpSolution solve_qp_relaxed(const QpProblem& p, double penalty = 1e3, const QpOptions& opts = {});

KktResiduals kkt_residuals(const QpProblem& p, const Vec& u, const Vec& multipliers);
double qp_objective(const QpProblem& p, const Vec& u);

}  // namespace gcbf::qp
