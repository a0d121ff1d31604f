#pragma once

#include "snmpc/ocp.hpp"
#include "snmpc/qp.hpp"

#include <Eigen/Dense>

#include <vector>

namespace snmpc {

/// Primal/dual memory of the RTI scheme.
struct SolverIterate {
  StateTrajectory states;      // (N_p+1) x 8
  ControlTrajectory controls;  // N_p x 2
  Eigen::MatrixXd eq_duals;    // N_p x 8, row t-1 pairs with the defect of x_t
  Eigen::VectorXd ineq_duals;  // signed, one per transcribed row
};

/// Cold-start iterate: zero controls, dynamics-consistent rollout, zero duals.
SolverIterate initial_iterate(const TranscribedNlp& nlp);

/// Shifts states/controls/duals one stage left, duplicating the last stage.
SolverIterate warm_start_shift(const SolverIterate& iterate);

enum class SolveOutcome { solved, max_iterations, qp_infeasible, nan_encountered };

const char* to_string(SolveOutcome outcome);

struct SolveStatus {
  SolveOutcome outcome = SolveOutcome::nan_encountered;
  int qp_iterations = 0;
  double solve_time = 0.0;     // wall s for the preparation+feedback cycle
  double kkt_residual = 0.0;   // max-norm KKT of the input iterate
};

struct RtiResult {
  SolverIterate iterate;
  SolveStatus status;
  VehicleControl u0;
};

/// Multiple-shooting QP condensed onto the control increments plus one
/// exact-penalty slack per acceleration-potential row (a positive slack
/// at the optimum certifies infeasibility of the hard linearized QP).
/// E[t]/c[t] give dx_t = c[t] + E[t] du for t = 1..N_p (index 0 unused).
struct CondensedQp {
  qp::QpProblem qp;
  std::vector<Eigen::Matrix<double, 8, Eigen::Dynamic>> E;
  std::vector<Eigen::Matrix<double, 8, 1>> c;
  int n_controls = 0;  // leading decision variables, 2 N_p
  int n_slacks = 0;    // trailing decision variables
};

CondensedQp condense(const TranscribedNlp& nlp, const NlpEvaluation& eval,
                     const StateTrajectory& states);

/// One preparation+feedback cycle: linearize at the iterate (with the
/// initial state pinned to the problem's x0), form the Gauss-Newton QP,
/// solve it with the given iteration cap and take the full step. The
/// reported KKT residual belongs to the input iterate paired with its
/// stored multipliers.
RtiResult rti_step(const TranscribedNlp& nlp, const SolverIterate& iterate,
                   int max_qp_iter = 50);

/// Test/diagnostic mode: repeats rti_step until the reported KKT residual
/// drops below `kkt_tol`. Returns the iterate the residual was measured at.
struct ConvergedResult {
  SolverIterate iterate;
  SolveStatus status;
  int rti_iterations = 0;
};
ConvergedResult solve_to_convergence(const TranscribedNlp& nlp, SolverIterate iterate,
                                     int max_rti = 25, double kkt_tol = 1e-8,
                                     int max_qp_iter = 200);

}  // namespace snmpc
