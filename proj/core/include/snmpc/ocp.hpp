#pragma once

#include "snmpc/pce.hpp"
#include "snmpc/track.hpp"
#include "snmpc/vehicle.hpp"

#include <Eigen/Dense>

#include <memory>
#include <vector>

namespace snmpc {

/// Horizons, weights, bounds and PCE settings of the optimal control
/// problem. kappa and the stage counts are always derived, never stored.
struct OcpConfig {
  double t_s = 0.08;  // s
  double t_p = 3.04;  // s
  double t_u = 0.4;   // s
  double p_violation = 0.8;
  int n_s = 10;
  int d_max = 2;
  Eigen::Vector3d sigma_w_snmpc{0.8, 0.35, 0.035};
  Eigen::Vector4d q{2.8, 2.8, 0.4, 0.2};
  Eigen::Vector4d q_e{2.8, 2.8, 0.4, 0.2};
  Eigen::Vector2d r{38.1, 101.4};
  double delta_f_max = 0.61;   // rad
  double omega_f_max = 0.322;  // rad/s
  double h_lower = 0.0;
  double h_upper = 1.0;
  int max_qp_iter = 50;

  int prediction_steps() const;   // N_p = round(t_p / t_s)
  int uncertainty_steps() const;  // N_u = round(t_u / t_s)
  double kappa() const;           // sqrt((1 - p) / p)
  void validate() const;
};

/// State components carrying the sampled disturbances (v_lon, v_lat,
/// psi_dot per the controller configuration).
inline constexpr int kUncertainStates[3] = {3, 4, 5};

/// Expectation state plus the sample block of one shooting stage. The
/// samples are a zero block for stages at or beyond the uncertainty
/// propagation horizon and are never read there.
struct AugmentedStageState {
  VehicleState expectation_x;
  Eigen::MatrixXd samples_X;  // n_s x 8
};

/// Row-wise propagation of the sample block under a shared control; the
/// zero block is returned once the stage index reaches N_u. Divergence
/// of an individual sample is reported with its row index.
Eigen::MatrixXd propagate_samples_stage(const Eigen::MatrixXd& samples_X,
                                        const VehicleControl& u, int t,
                                        const OcpConfig& config,
                                        const VehicleParams& params);

/// Expectation of the next stage: PCE coefficient row 0 of the propagated
/// samples before N_u, nominal propagation of the stored expectation after.
VehicleState expectation_stage(const AugmentedStageState& prev,
                               const VehicleControl& u, int t,
                               const pce::CollocationSet& colloc,
                               const OcpConfig& config,
                               const VehicleParams& params);

/// Deterministic surrogate E[h] + kappa sqrt(Var[h]) of the acceleration
/// potential constraint. Before N_u the moments come from PCE regression
/// over the sample block; afterwards the variance is identically zero and
/// the expectation state is evaluated directly.
double chance_constraint_surrogate(const Eigen::MatrixXd& samples_X,
                                   const VehicleControl& u,
                                   const VehicleState& expectation_x, int t,
                                   const pce::CollocationSet& colloc,
                                   const OcpConfig& config,
                                   const VehicleParams& params);

enum class ControllerKind { nominal, snmpc };

using StateTrajectory = Eigen::Matrix<double, Eigen::Dynamic, 8>;    // N_p+1 rows
using ControlTrajectory = Eigen::Matrix<double, Eigen::Dynamic, 2>;  // N_p rows

enum class RowKind { chance_pce, gg_nominal, steer_bound, control_bound };

/// One transcribed inequality row. chance_pce rows depend on the controls
/// directly (samples are eliminated); gg_nominal and steer_bound rows
/// depend on the stage state; control_bound rows select one control.
struct IneqRow {
  RowKind kind;
  int stage = 0;
  double value = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  Eigen::Matrix<double, 8, 1> grad_x = Eigen::Matrix<double, 8, 1>::Zero();
  std::vector<Eigen::Vector2d> grad_u;  // d value / d u_s for s = 0..size-1
  int control_index = -1;
};

/// Linearization of the NLP at an iterate. Stage dynamics are reported as
/// x_{t+1} ~ next_state[t] + A[t] dx_t + (control terms); within the
/// uncertainty horizon the map is anchored at x0 and depends on all
/// earlier controls (B_prefix), with A[t] = 0.
struct NlpEvaluation {
  std::vector<Eigen::Matrix<double, 8, 1>> next_state;            // N_p
  std::vector<Eigen::Matrix<double, 8, 8>> A;                     // N_p
  std::vector<Eigen::Matrix<double, 8, 2>> B;                     // N_p (suffix)
  std::vector<std::vector<Eigen::Matrix<double, 8, 2>>> B_prefix; // t < N_u, s <= t
  std::vector<Eigen::Matrix<double, 6, 1>> stage_residual;        // N_p
  Eigen::Vector4d terminal_residual = Eigen::Vector4d::Zero();
  std::vector<IneqRow> rows;  // layout: chance/gg stages 1..N_p, steer 1..N_p,
                              //         control bounds 0..N_p-1
  bool finite = true;
};

/// Direct multiple-shooting transcription of the trajectory-following
/// problem. The nominal variant carries hard acceleration-potential rows;
/// the stochastic variant replaces them with the PCE chance surrogate up
/// to the uncertainty propagation horizon. Sample blocks are eliminated:
/// they are deterministic functions of (x0, u) evaluated inside
/// `evaluate`, so the decision variables stay (states, controls).
class TranscribedNlp {
 public:
  ControllerKind kind() const { return kind_; }
  const OcpConfig& config() const { return config_; }
  const VehicleParams& params() const { return params_; }
  const VehicleState& x0() const { return x0_; }
  const ReferenceWindow& window() const { return window_; }
  const pce::CollocationSet* collocation() const { return colloc_.get(); }

  int horizon() const { return n_p_; }
  /// Stages whose dynamics/constraints run through the sample machinery.
  int prefix() const { return n_u_eff_; }
  int row_count() const { return 3 * n_p_; }

  /// Dynamics-consistent rollout from x0 under the given controls, using
  /// the mode's expectation dynamics.
  StateTrajectory rollout(const ControlTrajectory& controls) const;

  NlpEvaluation evaluate(const StateTrajectory& states,
                         const ControlTrajectory& controls,
                         bool with_jacobians) const;

  friend TranscribedNlp build_nominal_problem(const OcpConfig&, const VehicleState&,
                                              const ReferenceWindow&,
                                              const VehicleParams&);
  friend TranscribedNlp build_snmpc_problem(
      const OcpConfig&, std::shared_ptr<const pce::CollocationSet>,
      const VehicleState&, const ReferenceWindow&, const VehicleParams&);

 private:
  TranscribedNlp() = default;

  Eigen::MatrixXd initial_samples() const;

  ControllerKind kind_ = ControllerKind::nominal;
  OcpConfig config_;
  VehicleParams params_;
  VehicleState x0_;
  ReferenceWindow window_;
  std::shared_ptr<const pce::CollocationSet> colloc_;
  int n_p_ = 0;
  int n_u_eff_ = 0;  // 0 for nominal, min(N_u, N_p) for snmpc
};

TranscribedNlp build_nominal_problem(const OcpConfig& config, const VehicleState& x0,
                                     const ReferenceWindow& window,
                                     const VehicleParams& params);

TranscribedNlp build_snmpc_problem(const OcpConfig& config,
                                   std::shared_ptr<const pce::CollocationSet> colloc,
                                   const VehicleState& x0,
                                   const ReferenceWindow& window,
                                   const VehicleParams& params);

}  // namespace snmpc
