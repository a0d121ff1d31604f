#pragma once

#include "snmpc/ocp.hpp"
#include "snmpc/sqp.hpp"
#include "snmpc/track.hpp"
#include "snmpc/vehicle.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace snmpc {

/// Counter-based Gaussian noise stream for the measured states. The
/// realization at (seed, step, index) is a pure function of its key, so
/// every controller consuming the same seed sees the same disturbances.
/// State index 7 (the acceleration) receives no noise.
struct DisturbanceModel {
  Eigen::Matrix<double, 7, 1> sigma_sim = Eigen::Matrix<double, 7, 1>::Zero();
  std::uint64_t seed = 0;

  double noise(std::int64_t step, int state_index) const;
  VehicleState perturb(const VehicleState& true_state, std::int64_t step) const;
};

/// Per-state moving average over the last `window` samples (window 1 is a
/// pass-through). Until a window fills, the mean runs over what was seen.
class MovingAverageFilter {
 public:
  explicit MovingAverageFilter(const std::array<int, 8>& windows);
  VehicleState apply(const VehicleState& measured);
  void reset();
  const std::array<int, 8>& windows() const { return windows_; }

 private:
  std::array<int, 8> windows_;
  std::array<std::vector<double>, 8> history_;
};

struct SimStepRecord {
  int step = 0;
  double t = 0.0;
  VehicleState true_state;
  VehicleState measured;
  VehicleState filtered;
  VehicleControl commanded;  // solver output of this step
  VehicleControl applied;    // after the hold-on-failure fallback
  SolveOutcome outcome = SolveOutcome::nan_encountered;
  int qp_iterations = 0;
  double solve_time = 0.0;
  double kkt_residual = 0.0;
  double lateral_dev = 0.0;  // signed, true state
  double gg_value = 0.0;     // exact piecewise form, true state
  double ref_x = 0.0, ref_y = 0.0, ref_psi = 0.0, ref_v = 0.0;
};

struct SimLog {
  std::vector<SimStepRecord> steps;
  bool aborted = false;
  std::string abort_reason;
};

struct SimOptions {
  double duration = 10.0;  // s, must be a multiple of the sampling time
  int plant_substeps = 4;
  std::array<int, 8> filter_windows{1, 1, 4, 2, 2, 3, 4, 2};
};

/// Closed loop in receding-horizon fashion: measure (true + noise),
/// filter, update the reference window, transcribe, run one RTI cycle and
/// apply the first control to the plant. On solver failure the previous
/// control is held. Plant divergence aborts with a diagnostic reason.
SimLog run_closed_loop(ControllerKind controller, const OcpConfig& config,
                       const VehicleParams& params, const ReferenceTrajectory& track,
                       const DisturbanceModel& disturbance, const SimOptions& options);

/// Signed perpendicular distance to the interpolated reference polyline
/// (left of the local tangent is positive).
double lateral_deviation(const VehicleState& state, const ReferenceTrajectory& track,
                         const double* s_hint = nullptr);

struct SummaryMetrics {
  int steps = 0;
  double max_abs_dev = 0.0;
  double median_abs_dev = 0.0;
  double p25_abs_dev = 0.0;
  double p75_abs_dev = 0.0;
  double gg_violation_fraction = 0.0;  // true-state h > 1
  int solver_failures = 0;
  int qp_infeasible_steps = 0;
  double mean_solve_time = 0.0;
  double max_solve_time = 0.0;
};

/// Percentiles use linear interpolation between closest ranks, so the
/// median of {0,1,2,3} is 1.5.
SummaryMetrics summarize(const SimLog& log);

/// Deterministic per-step CSV (wall-clock timing is kept out of this file
/// so identical runs are byte-identical; see write_timing_csv).
void write_simlog_csv(const SimLog& log, const std::string& path);
void write_timing_csv(const SimLog& log, const std::string& path);

}  // namespace snmpc
