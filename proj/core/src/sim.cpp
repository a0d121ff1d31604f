#include "snmpc/sim.hpp"

#include "snmpc/log.hpp"
#include "snmpc/pce.hpp"

#include "format.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace snmpc {

namespace {

constexpr double kSpeedAbort = 100.0;  // m/s

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double percentile(const std::vector<double>& sorted, double fraction) {
  if (sorted.empty()) return 0.0;
  const double pos = fraction * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double t = pos - static_cast<double>(lo);
  return sorted[lo] + t * (sorted[hi] - sorted[lo]);
}

}  // namespace

double DisturbanceModel::noise(std::int64_t step, int state_index) const {
  if (state_index < 0 || state_index > 6) {
    throw std::out_of_range("DisturbanceModel::noise: state index");
  }
  const double sigma = sigma_sim(state_index);
  if (sigma == 0.0) return 0.0;
  std::uint64_t key = splitmix64(seed);
  key = splitmix64(key ^ static_cast<std::uint64_t>(step + 1));
  key = splitmix64(key ^ static_cast<std::uint64_t>(state_index + 1));
  double u = static_cast<double>(key >> 11) * 0x1.0p-53;
  u = std::clamp(u, 1e-12, 1.0 - 1e-12);
  return sigma * pce::inverse_normal_cdf(u);
}

VehicleState DisturbanceModel::perturb(const VehicleState& true_state,
                                       std::int64_t step) const {
  VehicleState measured = true_state;
  for (int i = 0; i < 7; ++i) {
    measured.set_component(i, measured.component(i) + noise(step, i));
  }
  return measured;
}

MovingAverageFilter::MovingAverageFilter(const std::array<int, 8>& windows)
    : windows_(windows) {
  for (int w : windows_) {
    if (w < 1) throw std::invalid_argument("MovingAverageFilter: window must be >= 1");
  }
}

void MovingAverageFilter::reset() {
  for (auto& h : history_) h.clear();
}

VehicleState MovingAverageFilter::apply(const VehicleState& measured) {
  VehicleState out;
  for (int i = 0; i < 8; ++i) {
    auto& h = history_[static_cast<std::size_t>(i)];
    h.push_back(measured.component(i));
    if (static_cast<int>(h.size()) > windows_[static_cast<std::size_t>(i)]) {
      h.erase(h.begin());
    }
    double sum = 0.0;
    for (double v : h) sum += v;
    out.set_component(i, sum / static_cast<double>(h.size()));
  }
  return out;
}

double lateral_deviation(const VehicleState& state, const ReferenceTrajectory& track,
                         const double* s_hint) {
  return project_to_path(track, state.x_pos, state.y_pos, s_hint).signed_lateral;
}

SimLog run_closed_loop(ControllerKind controller, const OcpConfig& config,
                       const VehicleParams& params, const ReferenceTrajectory& track,
                       const DisturbanceModel& disturbance, const SimOptions& options) {
  config.validate();
  params.validate();
  const double steps_exact = options.duration / config.t_s;
  const int n_steps = static_cast<int>(std::lround(steps_exact));
  if (n_steps < 1 || std::abs(steps_exact - n_steps) > 1e-6) {
    throw std::invalid_argument("run_closed_loop: duration must be a multiple of t_s");
  }
  if (options.plant_substeps < 1) {
    throw std::invalid_argument("run_closed_loop: plant_substeps must be >= 1");
  }

  // The collocation set depends only on (sigma, n_s, basis); it is reused
  // across steps and the sample block is re-centered on the measurement.
  std::shared_ptr<const pce::CollocationSet> colloc;
  if (controller == ControllerKind::snmpc) {
    colloc = std::make_shared<pce::CollocationSet>(pce::build_collocation(
        config.sigma_w_snmpc, config.n_s,
        pce::generate_multi_indices(3, config.d_max)));
  }

  // Start on the reference with matching speed.
  const TrackPoint start = track_point(track, 0.0);
  VehicleState x_true;
  x_true.x_pos = start.x;
  x_true.y_pos = start.y;
  x_true.psi = start.psi;
  x_true.v_lon = start.v;

  MovingAverageFilter filter(options.filter_windows);
  SimLog log;
  log.steps.reserve(static_cast<std::size_t>(n_steps));

  SolverIterate iterate;
  bool have_iterate = false;
  VehicleControl applied{};
  double ref_hint = 0.0;
  double dev_hint = 0.0;

  // Failure fallback: hold the wheel, bleed the acceleration toward zero.
  // Freezing the last command keeps driving the state further outside the
  // constraint tube and locks the QP in permanent infeasibility, while
  // relaxing the steering mid-corner throws the vehicle off the line.
  constexpr double kRelaxTau = 0.32;  // s
  auto relax_control = [&](const VehicleState& measured) {
    VehicleControl u;
    u.jerk = std::clamp(-measured.a / kRelaxTau, -10.0, 10.0);
    u.steer_rate = 0.0;
    return u;
  };

  for (int step = 0; step < n_steps; ++step) {
    SimStepRecord rec;
    rec.step = step;
    rec.t = step * config.t_s;
    rec.true_state = x_true;
    rec.measured = disturbance.perturb(x_true, step);
    rec.filtered = filter.apply(rec.measured);

    ReferenceWindow window;
    try {
      window = reference_window(track, rec.filtered, config.prediction_steps() + 1,
                                config.t_s, &ref_hint);
    } catch (const std::exception& e) {
      log.aborted = true;
      log.abort_reason = e.what();
      log.steps.push_back(rec);
      break;
    }
    rec.ref_x = window.nodes(0, 0);
    rec.ref_y = window.nodes(0, 1);
    rec.ref_psi = window.nodes(0, 2);
    rec.ref_v = window.nodes(0, 3);

    const TranscribedNlp nlp =
        controller == ControllerKind::snmpc
            ? build_snmpc_problem(config, colloc, rec.filtered, window, params)
            : build_nominal_problem(config, rec.filtered, window, params);

    if (!have_iterate) {
      iterate = initial_iterate(nlp);
      have_iterate = true;
    } else {
      iterate = warm_start_shift(iterate);
    }

    RtiResult rti = rti_step(nlp, iterate, config.max_qp_iter);
    rec.commanded = rti.u0;
    rec.outcome = rti.status.outcome;
    rec.qp_iterations = rti.status.qp_iterations;
    rec.solve_time = rti.status.solve_time;
    rec.kkt_residual = rti.status.kkt_residual;
    iterate = std::move(rti.iterate);

    if (rec.outcome == SolveOutcome::solved) {
      applied = rec.commanded;
    } else {
      applied = relax_control(rec.filtered);
      have_iterate = false;  // relinearize from a fresh rollout next step
      log::debug("solver failure at step " + std::to_string(step) + ": " +
                 to_string(rec.outcome));
    }
    rec.applied = applied;

    rec.lateral_dev = lateral_deviation(x_true, track, &dev_hint);
    dev_hint = project_to_path(track, x_true.x_pos, x_true.y_pos, &dev_hint).s;
    rec.gg_value = gg_constraint(x_true, params);
    log.steps.push_back(rec);

    try {
      x_true = rk4_step(x_true, applied, config.t_s, options.plant_substeps, params);
    } catch (const std::runtime_error& e) {
      log.aborted = true;
      log.abort_reason = e.what();
      break;
    }
    if (std::hypot(x_true.v_lon, x_true.v_lat) > kSpeedAbort) {
      log.aborted = true;
      log.abort_reason = "plant divergence: speed exceeded 100 m/s";
      break;
    }
  }
  if (log.aborted) {
    log::warn("closed loop aborted: " + log.abort_reason);
  }
  return log;
}

SummaryMetrics summarize(const SimLog& log) {
  if (log.steps.empty()) {
    throw std::invalid_argument("summarize: empty log");
  }
  SummaryMetrics m;
  m.steps = static_cast<int>(log.steps.size());
  std::vector<double> devs;
  devs.reserve(log.steps.size());
  int violations = 0;
  double time_sum = 0.0;
  for (const SimStepRecord& rec : log.steps) {
    devs.push_back(std::abs(rec.lateral_dev));
    if (rec.gg_value > 1.0) ++violations;
    if (rec.outcome != SolveOutcome::solved) ++m.solver_failures;
    if (rec.outcome == SolveOutcome::qp_infeasible) ++m.qp_infeasible_steps;
    time_sum += rec.solve_time;
    m.max_solve_time = std::max(m.max_solve_time, rec.solve_time);
  }
  std::sort(devs.begin(), devs.end());
  m.max_abs_dev = devs.back();
  m.median_abs_dev = percentile(devs, 0.5);
  m.p25_abs_dev = percentile(devs, 0.25);
  m.p75_abs_dev = percentile(devs, 0.75);
  m.gg_violation_fraction = static_cast<double>(violations) / m.steps;
  m.mean_solve_time = time_sum / m.steps;
  return m;
}

void write_simlog_csv(const SimLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_simlog_csv: cannot open " + path);
  out << "step,t";
  const char* groups[] = {"true", "meas", "filt"};
  const char* fields[] = {"x_pos", "y_pos", "psi",     "v_lon",
                          "v_lat", "psi_dot", "delta_f", "a"};
  for (const char* g : groups) {
    for (const char* f : fields) out << ',' << g << '_' << f;
  }
  out << ",cmd_jerk,cmd_steer_rate,applied_jerk,applied_steer_rate"
      << ",outcome,qp_iterations,kkt_residual"
      << ",lateral_dev,gg_value,ref_x,ref_y,ref_psi,ref_v\n";
  for (const SimStepRecord& rec : log.steps) {
    out << rec.step << ',' << detail::fmt_double(rec.t);
    const VehicleState* states[] = {&rec.true_state, &rec.measured, &rec.filtered};
    for (const VehicleState* s : states) {
      for (int i = 0; i < 8; ++i) out << ',' << detail::fmt_double(s->component(i));
    }
    out << ',' << detail::fmt_double(rec.commanded.jerk) << ','
        << detail::fmt_double(rec.commanded.steer_rate) << ','
        << detail::fmt_double(rec.applied.jerk) << ','
        << detail::fmt_double(rec.applied.steer_rate) << ',' << to_string(rec.outcome)
        << ',' << rec.qp_iterations << ',' << detail::fmt_double(rec.kkt_residual)
        << ',' << detail::fmt_double(rec.lateral_dev) << ','
        << detail::fmt_double(rec.gg_value) << ',' << detail::fmt_double(rec.ref_x)
        << ',' << detail::fmt_double(rec.ref_y) << ','
        << detail::fmt_double(rec.ref_psi) << ',' << detail::fmt_double(rec.ref_v)
        << '\n';
  }
  if (log.aborted) {
    out << "# aborted: " << log.abort_reason << '\n';
  }
}

void write_timing_csv(const SimLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_timing_csv: cannot open " + path);
  out << "step,solve_time_s\n";
  for (const SimStepRecord& rec : log.steps) {
    out << rec.step << ',' << detail::fmt_double(rec.solve_time) << '\n';
  }
}

}  // namespace snmpc
