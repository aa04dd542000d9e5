#include <cmath>
#include <limits>

#include "doctest.h"
#include "gcbf/error.hpp"
#include "gcbf/numerics/rng.hpp"
#include "gcbf/qp/qp.hpp"
#include "qp_oracle.hpp"

using namespace gcbf;
using namespace gcbf::qp;

namespace {

QpProblem identity_problem(const Vec& target) {
  QpProblem p;
  p.H = Mat::Identity(target.size(), target.size());
  p.f = -target;
  p.A.resize(0, target.size());
  return p;
}

}  // namespace

TEST_CASE("qp: unconstrained, box projection, half-space") {
  const Vec target = Eigen::Vector3d(0.3, -2.0, 5.0);
  auto s = solve_qp(identity_problem(target));
  CHECK(s.status == QpStatus::Optimal);
  CHECK((s.u - target).norm() < 1e-14);

  QpProblem box = identity_problem(target);
  box.lo = Vec::Constant(3, -1.0);
  box.hi = Vec::Constant(3, 1.0);
  s = solve_qp(box);
  CHECK((s.u - Eigen::Vector3d(0.3, -1.0, 1.0)).norm() < 1e-14);
  CHECK(s.kkt.max() < 1e-8);

  QpProblem half = identity_problem(Vec::Zero(2));
  half.A = Eigen::RowVector2d(1.0, 1.0);
  half.b = Vec::Constant(1, 1.0);
  s = solve_qp(half);
  CHECK(s.u[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(s.u[1] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(s.multipliers[0] == doctest::Approx(0.5));
  CHECK((s.u - oracle::pgd_solve(half)).norm() < 1e-8);
}

TEST_CASE("qp: infeasibility, relaxation, bad input") {
  QpProblem p = identity_problem(Vec::Zero(1));
  p.A = Mat(2, 1);
  p.A << 1.0, -1.0;
  p.b = Eigen::Vector2d(1.0, 0.0);  // u >= 1 and u <= 0
  CHECK(solve_qp(p).status == QpStatus::Infeasible);
  const auto r = solve_qp_relaxed(p, 1e3);
  CHECK(r.status == QpStatus::Optimal);
  CHECK(r.relaxed);
  // min 1/2 u^2 + 1e3 (s1^2 + s2^2) with s1 = 1 - u, s2 = u  =>  u = 2000 / 4001
  CHECK(r.u[0] == doctest::Approx(2000.0 / 4001.0).epsilon(1e-10));
  CHECK(r.slack[0] == doctest::Approx(1.0 - 2000.0 / 4001.0).epsilon(1e-10));

  QpProblem feasible = identity_problem(Vec::Constant(1, 3.0));
  feasible.A = Mat::Constant(1, 1, 1.0);
  feasible.b = Vec::Constant(1, 0.0);
  CHECK_FALSE(solve_qp_relaxed(feasible).relaxed);

  QpProblem bad = identity_problem(Vec::Zero(2));
  bad.H(0, 1) = 0.5;
  CHECK_THROWS_AS(solve_qp(bad), ConfigError);
  bad.H = -Mat::Identity(2, 2);
  CHECK_THROWS_AS(solve_qp(bad), ConfigError);
  bad.H = Mat::Identity(3, 3);
  CHECK_THROWS_AS(solve_qp(bad), ShapeError);
}

TEST_CASE("qp: random problems match the projected-gradient oracle") {
  num::Rng rng(21);
  int solved = 0;
  for (int t = 0; t < 100; ++t) {
    const QpProblem p = oracle::random_problem(rng);
    const auto s = solve_qp(p);
    REQUIRE(s.status == QpStatus::Optimal);
    ++solved;
    CHECK(s.kkt.max() < 1e-8);
    const Vec u = oracle::pgd_solve(p, 100000);
    CHECK(std::abs(qp_objective(p, u) - s.objective) < 1e-5);
  }
  CHECK(solved == 100);
}

TEST_CASE("qp: degenerate duplicate constraints") {
  QpProblem p = identity_problem(Vec::Zero(2));
  p.A = Mat(3, 2);
  p.A << 1, 1, 2, 2, 1, 1;
  p.b = Eigen::Vector3d(1, 2, 1);
  const auto s = solve_qp(p);
  CHECK(s.status == QpStatus::Optimal);
  CHECK((s.u - Eigen::Vector2d(0.5, 0.5)).norm() < 1e-12);
  CHECK(s.kkt.max() < 1e-8);
}
