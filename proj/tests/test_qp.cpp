#include "snmpc/qp.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

using namespace snmpc;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Brute force by active-set enumeration; workable for ~10 rows.
// Two-sided rows are expanded into >= constraints first.
struct EnumOracle {
  Eigen::VectorXd x;
  double objective = kInf;
  bool found = false;
};

EnumOracle enumerate_qp(const qp::QpProblem& p) {
  struct Side {
    Eigen::VectorXd c;
    double d;
  };
  std::vector<Side> sides;
  for (int i = 0; i < p.C.rows(); ++i) {
    if (p.lo(i) > -kInf) sides.push_back({p.C.row(i).transpose(), p.lo(i)});
    if (p.hi(i) < kInf) sides.push_back({-p.C.row(i).transpose(), -p.hi(i)});
  }
  const int m = static_cast<int>(sides.size());
  const int n = static_cast<int>(p.H.rows());
  const int m_eq = static_cast<int>(p.A_eq.rows());
  EnumOracle best;

  for (unsigned mask = 0; mask < (1u << m); ++mask) {
    std::vector<int> active;
    for (int i = 0; i < m; ++i) {
      if (mask & (1u << i)) active.push_back(i);
    }
    const int k = m_eq + static_cast<int>(active.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + k, n + k);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + k);
    kkt.topLeftCorner(n, n) = p.H;
    rhs.head(n) = -p.g;
    for (int e = 0; e < m_eq; ++e) {
      kkt.block(n + e, 0, 1, n) = p.A_eq.row(e);
      kkt.block(0, n + e, n, 1) = p.A_eq.row(e).transpose();
      rhs(n + e) = p.b_eq(e);
    }
    for (std::size_t j = 0; j < active.size(); ++j) {
      const auto& s = sides[static_cast<std::size_t>(active[j])];
      kkt.block(n + m_eq + static_cast<int>(j), 0, 1, n) = s.c.transpose();
      kkt.block(0, n + m_eq + static_cast<int>(j), n, 1) = s.c;
      rhs(n + m_eq + static_cast<int>(j)) = s.d;
    }
    const Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
    if (!(kkt * sol - rhs).isZero(1e-8)) continue;
    const Eigen::VectorXd x = sol.head(n);
    // primal feasibility of inactive sides, dual feasibility of active ones
    bool ok = true;
    for (int i = 0; i < m && ok; ++i) {
      if (sides[static_cast<std::size_t>(i)].c.dot(x) <
          sides[static_cast<std::size_t>(i)].d - 1e-8) {
        ok = false;
      }
    }
    for (std::size_t j = 0; j < active.size() && ok; ++j) {
      // multiplier of c'x >= d enters as -mu in the KKT block above
      if (-sol(n + m_eq + static_cast<int>(j)) < -1e-8) ok = false;
    }
    if (!ok) continue;
    const double obj = 0.5 * x.dot(p.H * x) + p.g.dot(x);
    if (obj < best.objective - 1e-12) {
      best.objective = obj;
      best.x = x;
      best.found = true;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("projection onto an equality") {
  qp::QpProblem p;
  const int n = 4;
  p.H = Eigen::MatrixXd::Identity(n, n);
  p.g = Eigen::VectorXd::Zero(n);
  p.A_eq = Eigen::MatrixXd::Zero(1, n);
  p.A_eq(0, 0) = 1.0;
  p.b_eq = Eigen::VectorXd::Constant(1, 1.0);
  p.C.resize(0, n);
  p.lo.resize(0);
  p.hi.resize(0);

  const qp::QpResult r = qp::solve_qp(p);
  REQUIRE(r.status == qp::QpStatus::solved);
  CHECK(r.x(0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(r.x.tail(3).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(qp::kkt_residual(p, r) < 1e-8);
}

TEST_CASE("active bound with unit dual") {
  qp::QpProblem p;
  p.H = Eigen::MatrixXd::Identity(1, 1);
  p.g = Eigen::VectorXd::Constant(1, -2.0);
  p.A_eq.resize(0, 1);
  p.b_eq.resize(0);
  p.C = Eigen::MatrixXd::Identity(1, 1);
  p.lo = Eigen::VectorXd::Constant(1, -kInf);
  p.hi = Eigen::VectorXd::Constant(1, 1.0);

  const qp::QpResult r = qp::solve_qp(p);
  REQUIRE(r.status == qp::QpStatus::solved);
  CHECK(r.x(0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(r.row_duals(0) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(qp::kkt_residual(p, r) < 1e-8);
}

TEST_CASE("scalar Gauss-Newton step is exact") {
  // min 0.5 (x - 3)^2 linearized at x = 0: one QP lands on the optimum.
  qp::QpProblem p;
  p.H = Eigen::MatrixXd::Identity(1, 1);
  p.g = Eigen::VectorXd::Constant(1, -3.0);
  p.A_eq.resize(0, 1);
  p.b_eq.resize(0);
  p.C.resize(0, 1);
  p.lo.resize(0);
  p.hi.resize(0);
  const qp::QpResult r = qp::solve_qp(p);
  REQUIRE(r.status == qp::QpStatus::solved);
  CHECK(r.x(0) == doctest::Approx(3.0).epsilon(1e-10));
}

TEST_CASE("contradictory box bounds are infeasible") {
  qp::QpProblem p;
  p.H = Eigen::MatrixXd::Identity(2, 2);
  p.g = Eigen::VectorXd::Zero(2);
  p.A_eq.resize(0, 2);
  p.b_eq.resize(0);
  p.C = Eigen::MatrixXd::Identity(2, 2);
  p.lo = Eigen::Vector2d(0.5, -1.0);
  p.hi = Eigen::Vector2d(-0.5, 1.0);  // lb > ub in the first row

  const qp::QpResult r = qp::solve_qp(p);
  CHECK(r.status == qp::QpStatus::infeasible);
}

TEST_CASE("conflicting separate rows are infeasible") {
  qp::QpProblem p;
  p.H = Eigen::MatrixXd::Identity(2, 2);
  p.g = Eigen::VectorXd::Zero(2);
  p.A_eq.resize(0, 2);
  p.b_eq.resize(0);
  p.C.resize(2, 2);
  p.C << 1.0, 1.0, -1.0, -1.0;
  p.lo = Eigen::Vector2d(2.0, 1.0);  // x0+x1 >= 2 and x0+x1 <= -1
  p.hi = Eigen::Vector2d(kInf, kInf);

  const qp::QpResult r = qp::solve_qp(p);
  CHECK(r.status == qp::QpStatus::infeasible);
}

TEST_CASE("iteration cap reports distinctly") {
  qp::QpProblem p;
  const int n = 6;
  p.H = Eigen::MatrixXd::Identity(n, n);
  p.g = Eigen::VectorXd::Constant(n, -5.0);
  p.A_eq.resize(0, n);
  p.b_eq.resize(0);
  p.C = Eigen::MatrixXd::Identity(n, n);
  p.lo = Eigen::VectorXd::Constant(n, -1.0);
  p.hi = Eigen::VectorXd::Constant(n, 1.0);

  const qp::QpResult r = qp::solve_qp(p, 2);
  CHECK(r.status == qp::QpStatus::max_iterations);
}

TEST_CASE("random convex QPs solve to tight KKT residuals") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> width(0.1, 2.0);

  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 14);
    const int m = 1 + static_cast<int>(rng() % 12);
    Eigen::MatrixXd M(n, n);
    for (int i = 0; i < n * n; ++i) M(i / n, i % n) = normal(rng);
    qp::QpProblem p;
    p.H = M.transpose() * M + 0.5 * Eigen::MatrixXd::Identity(n, n);
    p.g.resize(n);
    for (int i = 0; i < n; ++i) p.g(i) = normal(rng);
    p.A_eq.resize(0, n);
    p.b_eq.resize(0);
    p.C.resize(m, n);
    for (int i = 0; i < m * n; ++i) p.C(i / n, i % n) = normal(rng);
    // Keep a known point feasible so the instance is solvable.
    Eigen::VectorXd x_feas(n);
    for (int i = 0; i < n; ++i) x_feas(i) = 0.3 * normal(rng);
    p.lo.resize(m);
    p.hi.resize(m);
    for (int i = 0; i < m; ++i) {
      const double v = p.C.row(i).dot(x_feas);
      p.lo(i) = v - width(rng);
      p.hi(i) = v + width(rng);
    }

    const qp::QpResult r = qp::solve_qp(p, 500);
    REQUIRE(r.status == qp::QpStatus::solved);
    CHECK(qp::kkt_residual(p, r) < 1e-8);
  }
}

TEST_CASE("matches the enumeration oracle") {
  std::mt19937_64 rng(1234);
  std::normal_distribution<double> normal(0.0, 1.0);

  for (int trial = 0; trial < 10; ++trial) {
    const int n = 20;
    const int m = 10;
    Eigen::MatrixXd M(n, n);
    for (int i = 0; i < n * n; ++i) M(i / n, i % n) = normal(rng);
    qp::QpProblem p;
    p.H = M.transpose() * M + Eigen::MatrixXd::Identity(n, n);
    p.g.resize(n);
    for (int i = 0; i < n; ++i) p.g(i) = normal(rng);
    p.A_eq.resize(0, n);
    p.b_eq.resize(0);
    p.C.resize(m, n);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) p.C(i, j) = normal(rng);
    }
    Eigen::VectorXd x_feas(n);
    for (int i = 0; i < n; ++i) x_feas(i) = 0.2 * normal(rng);
    p.lo.resize(m);
    p.hi.resize(m);
    for (int i = 0; i < m; ++i) {
      const double v = p.C.row(i).dot(x_feas);
      p.lo(i) = v - 0.4;
      p.hi(i) = kInf;  // keep the enumeration at 2^10 subsets
    }

    const qp::QpResult r = qp::solve_qp(p, 500);
    REQUIRE(r.status == qp::QpStatus::solved);
    const EnumOracle oracle = enumerate_qp(p);
    REQUIRE(oracle.found);
    CHECK((r.x - oracle.x).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("deterministic across repeated solves") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = 8, m = 6;
  Eigen::MatrixXd M(n, n);
  for (int i = 0; i < n * n; ++i) M(i / n, i % n) = normal(rng);
  qp::QpProblem p;
  p.H = M.transpose() * M + Eigen::MatrixXd::Identity(n, n);
  p.g = Eigen::VectorXd::LinSpaced(n, -1.0, 1.0);
  p.A_eq.resize(0, n);
  p.b_eq.resize(0);
  p.C = Eigen::MatrixXd::Random(m, n);
  p.lo = Eigen::VectorXd::Constant(m, -0.5);
  p.hi = Eigen::VectorXd::Constant(m, 0.5);

  const qp::QpResult a = qp::solve_qp(p);
  const qp::QpResult b = qp::solve_qp(p);
  REQUIRE(a.status == qp::QpStatus::solved);
  REQUIRE(b.status == qp::QpStatus::solved);
  CHECK((a.x - b.x).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.row_duals - b.row_duals).cwiseAbs().maxCoeff() == 0.0);
}
