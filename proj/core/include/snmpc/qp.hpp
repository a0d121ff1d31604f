#pragma once

#include <Eigen/Dense>

namespace snmpc::qp {

enum class QpStatus { solved, infeasible, max_iterations, failed };

/// Dense convex QP
///   min 0.5 x'Hx + g'x
///   s.t. A_eq x = b_eq,  lo <= C x <= hi  (row-wise, either side may be
///   infinite).
/// H must be symmetric positive semidefinite; a 1e-8 ridge is always
/// added, escalated tenfold (up to 1e-2) if the factorization fails.
struct QpProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  Eigen::MatrixXd A_eq;  // may have zero rows
  Eigen::VectorXd b_eq;
  Eigen::MatrixXd C;     // may have zero rows
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
};

struct QpResult {
  QpStatus status = QpStatus::failed;
  Eigen::VectorXd x;
  Eigen::VectorXd eq_duals;   // lambda, sign convention Hx+g+A'lambda+C'mu = 0
  Eigen::VectorXd row_duals;  // signed mu = mu_hi - mu_lo per row of C
  int iterations = 0;
};

/// Goldfarb-Idnani dual active-set method. Starts from the unconstrained
/// minimizer and adds violated constraints one at a time; primal
/// infeasibility is certified when neither a primal nor a dual step
/// exists for a violated constraint. Each active-set change counts as
/// one iteration toward `max_iter`.
QpResult solve_qp(const QpProblem& problem, int max_iter = 200);

/// Max-norm KKT residual (stationarity, primal feasibility,
/// complementarity) of a candidate result; diagnostic helper.
double kkt_residual(const QpProblem& problem, const QpResult& result);

}  // namespace snmpc::qp
