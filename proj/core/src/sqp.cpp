#include "snmpc/sqp.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace snmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Per-stage trust region on the control increments. Violated constraint
// rows with nearly vanishing gradients would otherwise be "satisfied" by
// arbitrarily long steps far outside the linearization's validity.
constexpr double kTrustJerk = 50.0;       // m/s^3
constexpr double kTrustSteerRate = 1.0;   // rad/s

// L1/L2 exact penalty on the acceleration-potential rows. The penalty
// slope dominates any multiplier these rows attain, so a positive slack
// at the optimum certifies that the hard linearized QP is infeasible;
// the step is then reported infeasible while the least-violating plan is
// still returned. Hard rows would leave no usable control at all once a
// measured state exits the constraint tube.
constexpr double kSlackLinear = 1e4;
constexpr double kSlackQuadratic = 1e4;
constexpr double kSlackTol = 1e-6;

// Costates consistent with the QP stationarity at the step endpoint, from
// the stage-wise chain rule over the linearization.
Eigen::MatrixXd recover_costates(const TranscribedNlp& nlp, const NlpEvaluation& eval,
                                 const CondensedQp& cq, const Eigen::VectorXd& du,
                                 const Eigen::VectorXd& row_duals) {
  const int n = nlp.horizon();
  const OcpConfig& cfg = nlp.config();
  Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(n, 8);

  auto cost_grad_x = [&](int t) {
    Eigen::Matrix<double, 8, 1> g = Eigen::Matrix<double, 8, 1>::Zero();
    if (t < n) {
      Eigen::Matrix<double, 4, 1> r =
          eval.stage_residual[t].head<4>() + cq.c[t].head<4>() +
          cq.E[t].topRows<4>() * du;
      g.head<4>() = cfg.q.cwiseProduct(r);
    } else {
      Eigen::Matrix<double, 4, 1> r =
          eval.terminal_residual + cq.c[n].head<4>() + cq.E[n].topRows<4>() * du;
      g.head<4>() = cfg.q_e.cwiseProduct(r);
    }
    return g;
  };
  auto ineq_grad_x = [&](int t) {
    Eigen::Matrix<double, 8, 1> g = Eigen::Matrix<double, 8, 1>::Zero();
    const IneqRow& h_row = eval.rows[static_cast<std::size_t>(t - 1)];
    if (h_row.kind == RowKind::gg_nominal) {
      g += h_row.grad_x * row_duals(t - 1);
    }
    g(6) += row_duals(n + t - 1);  // steering bound row of stage t
    return g;
  };

  for (int t = n; t >= 1; --t) {
    Eigen::Matrix<double, 8, 1> l = -cost_grad_x(t) - ineq_grad_x(t);
    if (t < n) {
      l += eval.A[t].transpose() * lambda.row(t).transpose();
    }
    lambda.row(t - 1) = l.transpose();
  }
  return lambda;
}

double kkt_residual_at(const TranscribedNlp& nlp, const NlpEvaluation& eval,
                       const SolverIterate& it) {
  const int n = nlp.horizon();
  const int nu = nlp.prefix();
  const OcpConfig& cfg = nlp.config();
  double res = 0.0;

  // Primal feasibility: shooting defects and inequality rows.
  for (int t = 0; t < n; ++t) {
    res = std::max(res, (eval.next_state[t] - it.states.row(t + 1).transpose())
                            .lpNorm<Eigen::Infinity>());
  }
  for (std::size_t i = 0; i < eval.rows.size(); ++i) {
    const IneqRow& row = eval.rows[i];
    res = std::max(res, std::max(row.lo - row.value, row.value - row.hi));
    const double mu = it.ineq_duals(static_cast<Eigen::Index>(i));
    if (mu > 0.0) {
      res = std::max(res, mu * std::abs(row.hi - row.value));
    } else if (mu < 0.0) {
      res = std::max(res, -mu * std::abs(row.value - row.lo));
    }
  }

  // Stationarity w.r.t. states x_1..x_N.
  for (int t = 1; t <= n; ++t) {
    Eigen::Matrix<double, 8, 1> g = Eigen::Matrix<double, 8, 1>::Zero();
    if (t < n) {
      g.head<4>() = cfg.q.cwiseProduct(eval.stage_residual[t].head<4>());
    } else {
      g.head<4>() = cfg.q_e.cwiseProduct(eval.terminal_residual);
    }
    const IneqRow& h_row = eval.rows[static_cast<std::size_t>(t - 1)];
    if (h_row.kind == RowKind::gg_nominal) {
      g += h_row.grad_x * it.ineq_duals(t - 1);
    }
    g(6) += it.ineq_duals(n + t - 1);
    g += it.eq_duals.row(t - 1).transpose();
    if (t < n) {
      g -= eval.A[t].transpose() * it.eq_duals.row(t).transpose();
    }
    res = std::max(res, g.lpNorm<Eigen::Infinity>());
  }

  // Stationarity w.r.t. controls u_0..u_{N-1}.
  for (int s = 0; s < n; ++s) {
    Eigen::Vector2d g = cfg.r.cwiseProduct(eval.stage_residual[s].tail<2>());
    g(1) += it.ineq_duals(2 * n + s);  // steering-rate bound row
    if (s < nu) {
      for (int t = s; t < nu; ++t) {
        g -= eval.B_prefix[t][static_cast<std::size_t>(s)].transpose() *
             it.eq_duals.row(t).transpose();
      }
    } else {
      g -= eval.B[s].transpose() * it.eq_duals.row(s).transpose();
    }
    for (int tau = 1; tau <= n; ++tau) {
      const IneqRow& row = eval.rows[static_cast<std::size_t>(tau - 1)];
      if (row.kind == RowKind::chance_pce &&
          s < static_cast<int>(row.grad_u.size())) {
        g += row.grad_u[static_cast<std::size_t>(s)] * it.ineq_duals(tau - 1);
      }
    }
    res = std::max(res, g.lpNorm<Eigen::Infinity>());
  }
  return res;
}

}  // namespace

const char* to_string(SolveOutcome outcome) {
  switch (outcome) {
    case SolveOutcome::solved: return "solved";
    case SolveOutcome::max_iterations: return "max_iterations";
    case SolveOutcome::qp_infeasible: return "qp_infeasible";
    case SolveOutcome::nan_encountered: return "nan_encountered";
  }
  return "unknown";
}

SolverIterate initial_iterate(const TranscribedNlp& nlp) {
  SolverIterate it;
  it.controls = ControlTrajectory::Zero(nlp.horizon(), 2);
  it.states = nlp.rollout(it.controls);
  it.eq_duals = Eigen::MatrixXd::Zero(nlp.horizon(), 8);
  it.ineq_duals = Eigen::VectorXd::Zero(nlp.row_count());
  return it;
}

SolverIterate warm_start_shift(const SolverIterate& iterate) {
  const int n = static_cast<int>(iterate.controls.rows());
  SolverIterate out = iterate;
  for (int t = 0; t < n; ++t) {
    out.states.row(t) = iterate.states.row(t + 1);
    if (t + 1 < n) out.controls.row(t) = iterate.controls.row(t + 1);
    if (t + 1 < n) out.eq_duals.row(t) = iterate.eq_duals.row(t + 1);
  }
  // Row families (chance/gg, steering, steering-rate) shift stage-wise.
  if (iterate.ineq_duals.size() == 3 * n) {
    for (int f = 0; f < 3; ++f) {
      for (int t = 0; t < n - 1; ++t) {
        out.ineq_duals(f * n + t) = iterate.ineq_duals(f * n + t + 1);
      }
    }
  }
  return out;
}

CondensedQp condense(const TranscribedNlp& nlp, const NlpEvaluation& eval,
                     const StateTrajectory& states) {
  const int n = nlp.horizon();
  const int nu = nlp.prefix();
  const int n_u_vars = 2 * n;
  const OcpConfig& cfg = nlp.config();

  CondensedQp cq;
  cq.E.assign(static_cast<std::size_t>(n) + 1,
              Eigen::Matrix<double, 8, Eigen::Dynamic>::Zero(8, n_u_vars));
  cq.c.assign(static_cast<std::size_t>(n) + 1, Eigen::Matrix<double, 8, 1>::Zero());

  for (int t = 0; t < n; ++t) {
    const Eigen::Matrix<double, 8, 1> defect =
        eval.next_state[t] - states.row(t + 1).transpose();
    if (t < nu) {
      cq.c[t + 1] = defect;
      for (int s = 0; s <= t; ++s) {
        cq.E[t + 1].middleCols(2 * s, 2) = eval.B_prefix[t][static_cast<std::size_t>(s)];
      }
    } else {
      cq.c[t + 1] = defect + eval.A[t] * cq.c[t];
      cq.E[t + 1] = eval.A[t] * cq.E[t];
      cq.E[t + 1].middleCols(2 * t, 2) += eval.B[t];
    }
  }

  const int n_slacks = n;  // one per acceleration-potential row
  const int n_vars = n_u_vars + n_slacks;
  cq.n_controls = n_u_vars;
  cq.n_slacks = n_slacks;

  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n_vars, n_vars);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n_vars);
  const Eigen::Vector4d wq = cfg.q;
  const Eigen::Vector2d wr = cfg.r;
  for (int t = 0; t < n; ++t) {
    // y residual rows 0..3 follow dx_t, rows 4..5 are the controls.
    const auto ex = cq.E[t].topRows<4>();
    Eigen::Vector4d rx = eval.stage_residual[t].head<4>() + cq.c[t].head<4>();
    h.topLeftCorner(n_u_vars, n_u_vars).noalias() +=
        ex.transpose() * wq.asDiagonal() * ex;
    g.head(n_u_vars).noalias() += ex.transpose() * wq.cwiseProduct(rx);
    const Eigen::Vector2d ru = eval.stage_residual[t].tail<2>();
    h.block<2, 2>(2 * t, 2 * t) += wr.asDiagonal();
    g.segment<2>(2 * t) += wr.cwiseProduct(ru);
  }
  {
    const auto ex = cq.E[n].topRows<4>();
    const Eigen::Vector4d rx = eval.terminal_residual + cq.c[n].head<4>();
    h.topLeftCorner(n_u_vars, n_u_vars).noalias() +=
        ex.transpose() * cfg.q_e.asDiagonal() * ex;
    g.head(n_u_vars).noalias() += ex.transpose() * cfg.q_e.cwiseProduct(rx);
  }
  for (int i = 0; i < n_slacks; ++i) {
    h(n_u_vars + i, n_u_vars + i) = kSlackQuadratic;
    g(n_u_vars + i) = kSlackLinear;
  }

  const int m = static_cast<int>(eval.rows.size());
  const int m_total = m + n_u_vars + n_slacks;  // rows + trust boxes + slack >= 0
  Eigen::MatrixXd rows_c = Eigen::MatrixXd::Zero(m_total, n_vars);
  Eigen::VectorXd lo(m_total), hi(m_total);
  for (int i = 0; i < m; ++i) {
    const IneqRow& row = eval.rows[static_cast<std::size_t>(i)];
    double value = row.value;
    bool relaxed = false;  // structurally nonnegative rows carry the slack
    switch (row.kind) {
      case RowKind::chance_pce:
        for (std::size_t s = 0; s < row.grad_u.size(); ++s) {
          rows_c.row(i).segment<2>(2 * static_cast<int>(s)) = row.grad_u[s].transpose();
        }
        relaxed = true;
        break;
      case RowKind::gg_nominal:
        rows_c.row(i).head(n_u_vars) = row.grad_x.transpose() * cq.E[row.stage];
        value += row.grad_x.dot(cq.c[row.stage]);
        relaxed = true;
        break;
      case RowKind::steer_bound:
        rows_c.row(i).head(n_u_vars) = cq.E[row.stage].row(6);
        value += cq.c[row.stage](6);
        break;
      case RowKind::control_bound:
        rows_c(i, 2 * row.stage + row.control_index) = 1.0;
        break;
    }
    if (relaxed) {
      // h is a sum of squares: the lower bound can never be violated by
      // the true function, and linearized at the vertex it would block
      // braking directions outright, so only the slackened upper side
      // reaches the QP.
      rows_c(i, n_u_vars + (row.stage - 1)) = -1.0;
      lo(i) = -std::numeric_limits<double>::infinity();
      hi(i) = row.hi - value;
    } else {
      lo(i) = row.lo - value;
      hi(i) = row.hi - value;
    }
  }
  for (int j = 0; j < n_u_vars; ++j) {
    rows_c(m + j, j) = 1.0;
    const double bound = (j % 2 == 0) ? kTrustJerk : kTrustSteerRate;
    lo(m + j) = -bound;
    hi(m + j) = bound;
  }
  for (int i = 0; i < n_slacks; ++i) {
    rows_c(m + n_u_vars + i, n_u_vars + i) = 1.0;
    lo(m + n_u_vars + i) = 0.0;
    hi(m + n_u_vars + i) = std::numeric_limits<double>::infinity();
  }

  cq.qp.H = std::move(h);
  cq.qp.g = std::move(g);
  cq.qp.A_eq.resize(0, n_vars);
  cq.qp.b_eq.resize(0);
  cq.qp.C = std::move(rows_c);
  cq.qp.lo = std::move(lo);
  cq.qp.hi = std::move(hi);
  return cq;
}

RtiResult rti_step(const TranscribedNlp& nlp, const SolverIterate& iterate,
                   int max_qp_iter) {
  const auto tic = std::chrono::steady_clock::now();
  const int n = nlp.horizon();

  RtiResult out;
  out.iterate = iterate;
  out.iterate.states.row(0) = nlp.x0().vec().transpose();  // initial embedding
  SolverIterate& it = out.iterate;
  out.u0 = VehicleControl{it.controls(0, 0), it.controls(0, 1)};

  auto finish = [&](SolveOutcome outcome, int qp_iters, double kkt) {
    out.status.outcome = outcome;
    out.status.qp_iterations = qp_iters;
    out.status.kkt_residual = kkt;
    out.status.solve_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - tic).count();
    return out;
  };

  NlpEvaluation eval;
  try {
    eval = nlp.evaluate(it.states, it.controls, true);
  } catch (const std::runtime_error&) {
    return finish(SolveOutcome::nan_encountered, 0, kInf);
  }
  if (!eval.finite) {
    return finish(SolveOutcome::nan_encountered, 0, kInf);
  }

  const double kkt = kkt_residual_at(nlp, eval, it);
  CondensedQp cq = condense(nlp, eval, it.states);
  if (!cq.qp.H.allFinite() || !cq.qp.g.allFinite() || !cq.qp.C.allFinite()) {
    return finish(SolveOutcome::nan_encountered, 0, kkt);
  }

  const qp::QpResult qr = qp::solve_qp(cq.qp, max_qp_iter);
  switch (qr.status) {
    case qp::QpStatus::infeasible:
      return finish(SolveOutcome::qp_infeasible, qr.iterations, kkt);
    case qp::QpStatus::max_iterations:
      return finish(SolveOutcome::max_iterations, qr.iterations, kkt);
    case qp::QpStatus::failed:
      return finish(SolveOutcome::nan_encountered, qr.iterations, kkt);
    case qp::QpStatus::solved:
      break;
  }
  if (!qr.x.allFinite()) {
    return finish(SolveOutcome::nan_encountered, qr.iterations, kkt);
  }

  // Full Newton step with linear expansion of the eliminated states.
  for (int t = 0; t < n; ++t) {
    it.controls.row(t) += qr.x.segment<2>(2 * t).transpose();
  }
  for (int t = 1; t <= n; ++t) {
    it.states.row(t) += (cq.c[t] + cq.E[t] * qr.x).transpose();
  }
  it.ineq_duals = qr.row_duals.head(nlp.row_count());  // trust-region rows stay internal
  it.eq_duals = recover_costates(nlp, eval, cq, qr.x, qr.row_duals);
  out.u0 = VehicleControl{it.controls(0, 0), it.controls(0, 1)};
  return finish(SolveOutcome::solved, qr.iterations, kkt);
}

ConvergedResult solve_to_convergence(const TranscribedNlp& nlp, SolverIterate iterate,
                                     int max_rti, double kkt_tol, int max_qp_iter) {
  ConvergedResult res;
  for (int k = 0; k < max_rti; ++k) {
    SolverIterate before = iterate;
    RtiResult step = rti_step(nlp, iterate, max_qp_iter);
    res.status = step.status;
    res.rti_iterations = k + 1;
    if (step.status.kkt_residual < kkt_tol) {
      res.iterate = std::move(before);  // the iterate the residual refers to
      return res;
    }
    if (step.status.outcome != SolveOutcome::solved) {
      res.iterate = std::move(before);
      return res;
    }
    iterate = std::move(step.iterate);
  }
  res.iterate = std::move(iterate);
  return res;
}

}  // namespace snmpc
