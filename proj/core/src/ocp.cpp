#include "snmpc/ocp.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace snmpc {

namespace {

constexpr int kOcpSubsteps = 1;

double fd_step(double v) { return 1e-6 * (1.0 + std::abs(v)); }

Eigen::MatrixXd propagate_rows(const Eigen::MatrixXd& samples, const VehicleControl& u,
                               double dt, const VehicleParams& params) {
  Eigen::MatrixXd out(samples.rows(), 8);
  for (int i = 0; i < samples.rows(); ++i) {
    try {
      out.row(i) =
          rk4_step(VehicleState::from_vec(samples.row(i).transpose()), u, dt,
                   kOcpSubsteps, params)
              .vec()
              .transpose();
    } catch (const std::runtime_error&) {
      std::ostringstream msg;
      msg << "sample propagation diverged at row " << i;
      throw std::runtime_error(msg.str());
    }
  }
  return out;
}

// E[h] + kappa sqrt(Var[h]) over a sample block via PCE regression.
double surrogate_from_samples(const Eigen::MatrixXd& samples,
                              const pce::CollocationSet& colloc, double kappa,
                              const VehicleParams& params) {
  Eigen::VectorXd h(samples.rows());
  for (int i = 0; i < samples.rows(); ++i) {
    h(i) = gg_constraint_smooth(VehicleState::from_vec(samples.row(i).transpose()),
                                params);
    if (!std::isfinite(h(i))) {
      std::ostringstream msg;
      msg << "chance constraint: non-finite h at sample row " << i;
      throw std::runtime_error(msg.str());
    }
  }
  const Eigen::VectorXd c = colloc.regression_A * h;
  const double var = c.tail(c.size() - 1).squaredNorm();
  return c(0) + kappa * std::sqrt(var);
}

}  // namespace

int OcpConfig::prediction_steps() const {
  return static_cast<int>(std::lround(t_p / t_s));
}

int OcpConfig::uncertainty_steps() const {
  return static_cast<int>(std::lround(t_u / t_s));
}

double OcpConfig::kappa() const { return std::sqrt((1.0 - p_violation) / p_violation); }

void OcpConfig::validate() const {
  if (!(t_s > 0.0)) throw std::invalid_argument("OcpConfig: t_s must be positive");
  if (!(p_violation > 0.0 && p_violation <= 1.0)) {
    throw std::invalid_argument("OcpConfig: p must lie in (0, 1]");
  }
  const int n_p = prediction_steps();
  const int n_u = uncertainty_steps();
  if (n_p < 1) throw std::invalid_argument("OcpConfig: t_p must cover at least one step");
  if (n_u < 1 || n_u > n_p) {
    throw std::invalid_argument("OcpConfig: need 1 <= N_u <= N_p");
  }
  if (n_s < 1) throw std::invalid_argument("OcpConfig: n_s must be >= 1");
  if (d_max < 0) throw std::invalid_argument("OcpConfig: d_max must be >= 0");
  for (int i = 0; i < 3; ++i) {
    if (!(sigma_w_snmpc(i) > 0.0)) {
      throw std::invalid_argument("OcpConfig: sigma_w_snmpc must be positive");
    }
  }
  if ((q.array() < 0.0).any() || (q_e.array() < 0.0).any() || (r.array() <= 0.0).any()) {
    throw std::invalid_argument("OcpConfig: weights must be non-negative, r positive");
  }
  if (!(delta_f_max > 0.0) || !(omega_f_max > 0.0)) {
    throw std::invalid_argument("OcpConfig: bounds must be positive");
  }
  if (!(h_upper > h_lower)) {
    throw std::invalid_argument("OcpConfig: h bounds must satisfy h_lower < h_upper");
  }
  if (max_qp_iter < 1) throw std::invalid_argument("OcpConfig: max_qp_iter must be >= 1");
}

Eigen::MatrixXd propagate_samples_stage(const Eigen::MatrixXd& samples_X,
                                        const VehicleControl& u, int t,
                                        const OcpConfig& config,
                                        const VehicleParams& params) {
  if (t >= config.prediction_steps()) {
    throw std::invalid_argument("propagate_samples_stage: stage index out of range");
  }
  if (t >= config.uncertainty_steps()) {
    return Eigen::MatrixXd::Zero(samples_X.rows(), 8);
  }
  return propagate_rows(samples_X, u, config.t_s, params);
}

VehicleState expectation_stage(const AugmentedStageState& prev, const VehicleControl& u,
                               int t, const pce::CollocationSet& colloc,
                               const OcpConfig& config, const VehicleParams& params) {
  if (t < config.uncertainty_steps()) {
    const Eigen::MatrixXd propagated = propagate_rows(prev.samples_X, u, config.t_s, params);
    const Eigen::Matrix<double, 1, 8> mean = colloc.regression_A.row(0) * propagated;
    return VehicleState::from_vec(mean.transpose());
  }
  return rk4_step(prev.expectation_x, u, config.t_s, kOcpSubsteps, params);
}

double chance_constraint_surrogate(const Eigen::MatrixXd& samples_X,
                                   const VehicleControl& u,
                                   const VehicleState& expectation_x, int t,
                                   const pce::CollocationSet& colloc,
                                   const OcpConfig& config,
                                   const VehicleParams& params) {
  (void)u;  // h does not read the control, kept for the constraint signature
  if (t < config.uncertainty_steps()) {
    return surrogate_from_samples(samples_X, colloc, config.kappa(), params);
  }
  return gg_constraint_smooth(expectation_x, params);
}

TranscribedNlp build_nominal_problem(const OcpConfig& config, const VehicleState& x0,
                                     const ReferenceWindow& window,
                                     const VehicleParams& params) {
  config.validate();
  params.validate();
  if (!x0.all_finite()) {
    throw std::invalid_argument("build_nominal_problem: non-finite initial state");
  }
  const int n_p = config.prediction_steps();
  if (window.size() < n_p + 1) {
    throw std::invalid_argument("build_nominal_problem: reference window too short");
  }
  TranscribedNlp nlp;
  nlp.kind_ = ControllerKind::nominal;
  nlp.config_ = config;
  nlp.params_ = params;
  nlp.x0_ = x0;
  nlp.window_ = window;
  nlp.n_p_ = n_p;
  nlp.n_u_eff_ = 0;
  return nlp;
}

TranscribedNlp build_snmpc_problem(const OcpConfig& config,
                                   std::shared_ptr<const pce::CollocationSet> colloc,
                                   const VehicleState& x0,
                                   const ReferenceWindow& window,
                                   const VehicleParams& params) {
  config.validate();
  params.validate();
  if (!x0.all_finite()) {
    throw std::invalid_argument("build_snmpc_problem: non-finite initial state");
  }
  const int n_p = config.prediction_steps();
  if (window.size() < n_p + 1) {
    throw std::invalid_argument("build_snmpc_problem: reference window too short");
  }
  if (colloc == nullptr) {
    throw std::invalid_argument("build_snmpc_problem: collocation set required");
  }
  if (colloc->samples_W.cols() != 3 || colloc->n_samples() != config.n_s) {
    throw std::invalid_argument(
        "build_snmpc_problem: collocation set does not match the configuration");
  }
  TranscribedNlp nlp;
  nlp.kind_ = ControllerKind::snmpc;
  nlp.config_ = config;
  nlp.params_ = params;
  nlp.x0_ = x0;
  nlp.window_ = window;
  nlp.colloc_ = std::move(colloc);
  nlp.n_p_ = n_p;
  nlp.n_u_eff_ = std::min(config.uncertainty_steps(), n_p);
  return nlp;
}

Eigen::MatrixXd TranscribedNlp::initial_samples() const {
  const int n_s = colloc_->n_samples();
  Eigen::MatrixXd samples = x0_.vec().transpose().replicate(n_s, 1);
  for (int j = 0; j < 3; ++j) {
    samples.col(kUncertainStates[j]) += colloc_->samples_W.col(j);
  }
  return samples;
}

StateTrajectory TranscribedNlp::rollout(const ControlTrajectory& controls) const {
  if (controls.rows() != n_p_) {
    throw std::invalid_argument("rollout: control trajectory length mismatch");
  }
  StateTrajectory states(n_p_ + 1, 8);
  states.row(0) = x0_.vec().transpose();
  Eigen::MatrixXd samples;
  Eigen::RowVectorXd a0;
  if (n_u_eff_ > 0) {
    samples = initial_samples();
    a0 = colloc_->regression_A.row(0);
  }
  for (int t = 0; t < n_p_; ++t) {
    const VehicleControl u{controls(t, 0), controls(t, 1)};
    if (t < n_u_eff_) {
      samples = propagate_rows(samples, u, config_.t_s, params_);
      states.row(t + 1) = a0 * samples;
    } else {
      states.row(t + 1) =
          rk4_step(VehicleState::from_vec(states.row(t).transpose()), u, config_.t_s,
                   kOcpSubsteps, params_)
              .vec()
              .transpose();
    }
  }
  return states;
}

NlpEvaluation TranscribedNlp::evaluate(const StateTrajectory& states,
                                       const ControlTrajectory& controls,
                                       bool with_jacobians) const {
  const int n = n_p_;
  const int nu = n_u_eff_;
  if (states.rows() != n + 1 || controls.rows() != n) {
    throw std::invalid_argument("evaluate: trajectory dimensions mismatch");
  }

  NlpEvaluation ev;
  ev.next_state.assign(n, Eigen::Matrix<double, 8, 1>::Zero());
  ev.A.assign(n, Eigen::Matrix<double, 8, 8>::Zero());
  ev.B.assign(n, Eigen::Matrix<double, 8, 2>::Zero());
  ev.stage_residual.assign(n, Eigen::Matrix<double, 6, 1>::Zero());
  if (nu > 0) ev.B_prefix.resize(nu);

  const double kap = config_.kappa();
  const double dt = config_.t_s;

  std::vector<double> hval(n + 1, 0.0);
  std::vector<Eigen::MatrixXd> x_samples;  // stages 0..nu
  Eigen::RowVectorXd a0;
  if (nu > 0) {
    a0 = colloc_->regression_A.row(0);
    x_samples.resize(nu + 1);
    x_samples[0] = initial_samples();
    for (int t = 0; t < nu; ++t) {
      const VehicleControl u{controls(t, 0), controls(t, 1)};
      x_samples[t + 1] = propagate_rows(x_samples[t], u, dt, params_);
      ev.next_state[t] = (a0 * x_samples[t + 1]).transpose();
    }
    for (int tau = 1; tau < nu; ++tau) {
      hval[tau] = surrogate_from_samples(x_samples[tau], *colloc_, kap, params_);
    }
    if (nu == n) {
      hval[n] = surrogate_from_samples(x_samples[n], *colloc_, kap, params_);
    }
  }
  for (int t = nu; t < n; ++t) {
    const VehicleControl u{controls(t, 0), controls(t, 1)};
    ev.next_state[t] =
        rk4_step(VehicleState::from_vec(states.row(t).transpose()), u, dt,
                 kOcpSubsteps, params_)
            .vec();
  }
  for (int tau = std::max(nu, 1); tau < n; ++tau) {
    hval[tau] =
        gg_constraint_smooth(VehicleState::from_vec(states.row(tau).transpose()), params_);
  }
  if (nu < n) {
    hval[n] =
        gg_constraint_smooth(VehicleState::from_vec(states.row(n).transpose()), params_);
  }

  for (int t = 0; t < n; ++t) {
    ev.stage_residual[t] << states(t, 0) - window_.nodes(t, 0),
        states(t, 1) - window_.nodes(t, 1), states(t, 2) - window_.nodes(t, 2),
        states(t, 3) - window_.nodes(t, 3), controls(t, 0), controls(t, 1);
  }
  ev.terminal_residual << states(n, 0) - window_.nodes(n, 0),
      states(n, 1) - window_.nodes(n, 1), states(n, 2) - window_.nodes(n, 2),
      states(n, 3) - window_.nodes(n, 3);

  // Row layout: chance/gg at stages 1..N_p, steering bounds at stages
  // 1..N_p, steering-rate bounds at stages 0..N_p-1.
  ev.rows.reserve(3 * static_cast<std::size_t>(n));
  for (int tau = 1; tau <= n; ++tau) {
    IneqRow row;
    row.stage = tau;
    const bool is_pce = nu > 0 && (tau < nu || (nu == n && tau == n));
    row.kind = is_pce ? RowKind::chance_pce : RowKind::gg_nominal;
    row.value = hval[tau];
    row.lo = config_.h_lower;
    row.hi = config_.h_upper;
    ev.rows.push_back(std::move(row));
  }
  for (int tau = 1; tau <= n; ++tau) {
    IneqRow row;
    row.stage = tau;
    row.kind = RowKind::steer_bound;
    row.value = states(tau, 6);
    row.lo = -config_.delta_f_max;
    row.hi = config_.delta_f_max;
    row.grad_x(6) = 1.0;
    ev.rows.push_back(std::move(row));
  }
  for (int t = 0; t < n; ++t) {
    IneqRow row;
    row.stage = t;
    row.kind = RowKind::control_bound;
    row.value = controls(t, 1);
    row.lo = -config_.omega_f_max;
    row.hi = config_.omega_f_max;
    row.control_index = 1;
    ev.rows.push_back(std::move(row));
  }

  if (with_jacobians) {
    // Prefix: central differences of the composed sample maps w.r.t. each
    // control entering the uncertainty horizon.
    for (int t = 0; t < nu; ++t) {
      ev.B_prefix[t].assign(static_cast<std::size_t>(t) + 1,
                            Eigen::Matrix<double, 8, 2>::Zero());
    }
    for (int tau = 1; tau <= n; ++tau) {
      IneqRow& row = ev.rows[static_cast<std::size_t>(tau - 1)];
      if (row.kind == RowKind::chance_pce) {
        row.grad_u.assign(static_cast<std::size_t>(tau == n ? n : tau),
                          Eigen::Vector2d::Zero());
      }
    }
    std::vector<Eigen::Matrix<double, 8, 1>> e_plus(nu), e_minus(nu);
    std::vector<double> h_plus(n + 1, 0.0), h_minus(n + 1, 0.0);
    for (int s = 0; s < nu; ++s) {
      for (int comp = 0; comp < 2; ++comp) {
        const double delta = fd_step(controls(s, comp));
        for (int sign = 0; sign < 2; ++sign) {
          ControlTrajectory cc = controls;
          cc(s, comp) += sign == 0 ? delta : -delta;
          auto& e_out = sign == 0 ? e_plus : e_minus;
          auto& h_out = sign == 0 ? h_plus : h_minus;
          Eigen::MatrixXd xp = x_samples[s];
          for (int t = s; t < nu; ++t) {
            const VehicleControl u{cc(t, 0), cc(t, 1)};
            xp = propagate_rows(xp, u, dt, params_);
            e_out[t] = (a0 * xp).transpose();
            const int stage = t + 1;
            if (stage < nu || (nu == n && stage == n)) {
              h_out[stage] = surrogate_from_samples(xp, *colloc_, kap, params_);
            }
          }
        }
        const double inv = 1.0 / (2.0 * delta);
        for (int t = s; t < nu; ++t) {
          ev.B_prefix[t][static_cast<std::size_t>(s)].col(comp) =
              (e_plus[t] - e_minus[t]) * inv;
        }
        for (int stage = s + 1; stage <= n; ++stage) {
          const bool pce_stage = stage < nu || (nu == n && stage == n);
          if (!pce_stage) continue;
          IneqRow& row = ev.rows[static_cast<std::size_t>(stage - 1)];
          row.grad_u[static_cast<std::size_t>(s)](comp) =
              (h_plus[stage] - h_minus[stage]) * inv;
        }
      }
    }

    // Suffix: stage-wise dynamics Jacobians.
    for (int t = nu; t < n; ++t) {
      const VehicleControl u{controls(t, 0), controls(t, 1)};
      for (int j = 0; j < 8; ++j) {
        const double delta = fd_step(states(t, j));
        Eigen::Matrix<double, 8, 1> xp = states.row(t).transpose();
        Eigen::Matrix<double, 8, 1> xm = xp;
        xp(j) += delta;
        xm(j) -= delta;
        const Eigen::Matrix<double, 8, 1> fp =
            rk4_step(VehicleState::from_vec(xp), u, dt, kOcpSubsteps, params_).vec();
        const Eigen::Matrix<double, 8, 1> fm =
            rk4_step(VehicleState::from_vec(xm), u, dt, kOcpSubsteps, params_).vec();
        ev.A[t].col(j) = (fp - fm) / (2.0 * delta);
      }
      const VehicleState xs = VehicleState::from_vec(states.row(t).transpose());
      for (int c = 0; c < 2; ++c) {
        const double delta = fd_step(controls(t, c));
        VehicleControl up = u, um = u;
        (c == 0 ? up.jerk : up.steer_rate) += delta;
        (c == 0 ? um.jerk : um.steer_rate) -= delta;
        const Eigen::Matrix<double, 8, 1> fp =
            rk4_step(xs, up, dt, kOcpSubsteps, params_).vec();
        const Eigen::Matrix<double, 8, 1> fm =
            rk4_step(xs, um, dt, kOcpSubsteps, params_).vec();
        ev.B[t].col(c) = (fp - fm) / (2.0 * delta);
      }
    }

    // State gradients of the nominal acceleration-potential rows.
    for (int tau = 1; tau <= n; ++tau) {
      IneqRow& row = ev.rows[static_cast<std::size_t>(tau - 1)];
      if (row.kind != RowKind::gg_nominal) continue;
      for (int j = 0; j < 8; ++j) {
        const double delta = fd_step(states(tau, j));
        Eigen::Matrix<double, 8, 1> xp = states.row(tau).transpose();
        Eigen::Matrix<double, 8, 1> xm = xp;
        xp(j) += delta;
        xm(j) -= delta;
        row.grad_x(j) = (gg_constraint_smooth(VehicleState::from_vec(xp), params_) -
                         gg_constraint_smooth(VehicleState::from_vec(xm), params_)) /
                        (2.0 * delta);
      }
    }
  }

  // Final finiteness sweep.
  auto finite_vec = [](const auto& v) { return v.allFinite(); };
  for (int t = 0; t < n; ++t) {
    if (!finite_vec(ev.next_state[t]) || !finite_vec(ev.stage_residual[t]) ||
        !finite_vec(ev.A[t]) || !finite_vec(ev.B[t])) {
      ev.finite = false;
    }
  }
  if (!finite_vec(ev.terminal_residual)) ev.finite = false;
  for (const IneqRow& row : ev.rows) {
    if (!std::isfinite(row.value) || !finite_vec(row.grad_x)) ev.finite = false;
    for (const Eigen::Vector2d& g : row.grad_u) {
      if (!finite_vec(g)) ev.finite = false;
    }
  }
  return ev;
}

}  // namespace snmpc
