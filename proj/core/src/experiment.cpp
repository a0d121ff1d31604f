#include "snmpc/experiment.hpp"

#include "snmpc/log.hpp"

#include "format.hpp"

#include <json.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace snmpc {

namespace {

using nlohmann::json;

json ocp_to_json(const OcpConfig& c) {
  json j;
  j["t_s"] = c.t_s;
  j["t_p"] = c.t_p;
  j["t_u"] = c.t_u;
  j["p"] = c.p_violation;
  j["n_s"] = c.n_s;
  j["d_max"] = c.d_max;
  j["sigma_w_snmpc"] = {c.sigma_w_snmpc(0), c.sigma_w_snmpc(1), c.sigma_w_snmpc(2)};
  j["q"] = {c.q(0), c.q(1), c.q(2), c.q(3)};
  j["q_e"] = {c.q_e(0), c.q_e(1), c.q_e(2), c.q_e(3)};
  j["r"] = {c.r(0), c.r(1)};
  j["delta_f_max"] = c.delta_f_max;
  j["omega_f_max"] = c.omega_f_max;
  j["h_lower"] = c.h_lower;
  j["h_upper"] = c.h_upper;
  j["max_qp_iter"] = c.max_qp_iter;
  return j;
}

OcpConfig ocp_from_json(const json& j) {
  OcpConfig c;
  c.t_s = j.value("t_s", c.t_s);
  c.t_p = j.value("t_p", c.t_p);
  c.t_u = j.value("t_u", c.t_u);
  c.p_violation = j.value("p", c.p_violation);
  c.n_s = j.value("n_s", c.n_s);
  c.d_max = j.value("d_max", c.d_max);
  if (j.contains("sigma_w_snmpc")) {
    const auto v = j["sigma_w_snmpc"].get<std::vector<double>>();
    if (v.size() != 3) throw std::runtime_error("ocp.sigma_w_snmpc needs 3 entries");
    c.sigma_w_snmpc = Eigen::Vector3d(v[0], v[1], v[2]);
  }
  if (j.contains("q")) {
    const auto v = j["q"].get<std::vector<double>>();
    if (v.size() != 4) throw std::runtime_error("ocp.q needs 4 entries");
    c.q = Eigen::Vector4d(v[0], v[1], v[2], v[3]);
  }
  if (j.contains("q_e")) {
    const auto v = j["q_e"].get<std::vector<double>>();
    if (v.size() != 4) throw std::runtime_error("ocp.q_e needs 4 entries");
    c.q_e = Eigen::Vector4d(v[0], v[1], v[2], v[3]);
  }
  if (j.contains("r")) {
    const auto v = j["r"].get<std::vector<double>>();
    if (v.size() != 2) throw std::runtime_error("ocp.r needs 2 entries");
    c.r = Eigen::Vector2d(v[0], v[1]);
  }
  c.delta_f_max = j.value("delta_f_max", c.delta_f_max);
  c.omega_f_max = j.value("omega_f_max", c.omega_f_max);
  c.h_lower = j.value("h_lower", c.h_lower);
  c.h_upper = j.value("h_upper", c.h_upper);
  c.max_qp_iter = j.value("max_qp_iter", c.max_qp_iter);
  return c;
}

std::string cell_name(ControllerKind kind, std::uint64_t seed) {
  return std::string(to_string(kind)) + "_seed" + std::to_string(seed);
}

void write_plot_csvs(const SimLog& log, const std::string& dir,
                     const std::string& cell) {
  {
    std::ofstream out(dir + "/gg_" + cell + ".csv");
    out << "step,a_lon,a_lat,h\n";
    for (const auto& rec : log.steps) {
      const double a_lat = rec.true_state.v_lon * rec.true_state.psi_dot;
      out << rec.step << ',' << detail::fmt_double(rec.true_state.a) << ','
          << detail::fmt_double(a_lat) << ',' << detail::fmt_double(rec.gg_value)
          << '\n';
    }
  }
  {
    std::ofstream out(dir + "/velocity_" + cell + ".csv");
    out << "step,t,v_ref,v_true\n";
    for (const auto& rec : log.steps) {
      out << rec.step << ',' << detail::fmt_double(rec.t) << ','
          << detail::fmt_double(rec.ref_v) << ','
          << detail::fmt_double(rec.true_state.v_lon) << '\n';
    }
  }
  {
    std::ofstream out(dir + "/latdev_" + cell + ".csv");
    out << "step,t,lateral_dev\n";
    for (const auto& rec : log.steps) {
      out << rec.step << ',' << detail::fmt_double(rec.t) << ','
          << detail::fmt_double(rec.lateral_dev) << '\n';
    }
  }
  {
    std::ofstream out(dir + "/status_" + cell + ".csv");
    out << "step,t,solved,outcome\n";
    for (const auto& rec : log.steps) {
      out << rec.step << ',' << detail::fmt_double(rec.t) << ','
          << (rec.outcome == SolveOutcome::solved ? 1 : 0) << ','
          << to_string(rec.outcome) << '\n';
    }
  }
}

json metrics_to_json(const SummaryMetrics& m, bool aborted) {
  json j;
  j["steps"] = m.steps;
  j["max_abs_lateral_dev"] = m.max_abs_dev;
  j["median_abs_lateral_dev"] = m.median_abs_dev;
  j["p25_abs_lateral_dev"] = m.p25_abs_dev;
  j["p75_abs_lateral_dev"] = m.p75_abs_dev;
  j["gg_violation_fraction"] = m.gg_violation_fraction;
  j["solver_failures"] = m.solver_failures;
  j["qp_infeasible_steps"] = m.qp_infeasible_steps;
  j["mean_solve_time_s"] = m.mean_solve_time;
  j["max_solve_time_s"] = m.max_solve_time;
  j["aborted"] = aborted;
  return j;
}

}  // namespace

const char* to_string(ControllerKind kind) {
  return kind == ControllerKind::nominal ? "nominal" : "snmpc";
}

void ExperimentConfig::validate() const {
  if (schema_version != 1) {
    throw std::invalid_argument("ExperimentConfig: unsupported schema_version");
  }
  if (controllers.empty()) {
    throw std::invalid_argument("ExperimentConfig: controllers must be non-empty");
  }
  if (seeds.empty()) {
    throw std::invalid_argument("ExperimentConfig: seeds must be non-empty");
  }
  if (!(duration_s > 0.0)) {
    throw std::invalid_argument("ExperimentConfig: duration_s must be positive");
  }
  const double steps = duration_s / ocp.t_s;
  if (std::abs(steps - std::lround(steps)) > 1e-6) {
    throw std::invalid_argument(
        "ExperimentConfig: duration_s must be a multiple of ocp.t_s");
  }
  if (plant_substeps < 1) {
    throw std::invalid_argument("ExperimentConfig: plant_substeps must be >= 1");
  }
  for (int i = 0; i < 7; ++i) {
    if (sigma_sim(i) < 0.0) {
      throw std::invalid_argument("ExperimentConfig: sigma_sim must be non-negative");
    }
  }
  for (int w : filter_windows) {
    if (w < 1) throw std::invalid_argument("ExperimentConfig: filter windows must be >= 1");
  }
  ocp.validate();
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("ExperimentConfig: cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json_string(buffer.str());
}

ExperimentConfig ExperimentConfig::from_json_string(const std::string& text) {
  const json j = json::parse(text);
  ExperimentConfig c;
  c.schema_version = j.value("schema_version", 1);
  if (j.contains("controllers")) {
    c.controllers.clear();
    for (const auto& name : j["controllers"]) {
      const std::string s = name.get<std::string>();
      if (s == "nominal") {
        c.controllers.push_back(ControllerKind::nominal);
      } else if (s == "snmpc") {
        c.controllers.push_back(ControllerKind::snmpc);
      } else {
        throw std::runtime_error("ExperimentConfig: unknown controller '" + s + "'");
      }
    }
  }
  if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  c.duration_s = j.value("duration_s", c.duration_s);
  c.plant_substeps = j.value("plant_substeps", c.plant_substeps);
  if (j.contains("ocp")) c.ocp = ocp_from_json(j["ocp"]);
  if (j.contains("disturbance") && j["disturbance"].contains("sigma_sim")) {
    const auto v = j["disturbance"]["sigma_sim"].get<std::vector<double>>();
    if (v.size() != 7) throw std::runtime_error("disturbance.sigma_sim needs 7 entries");
    for (int i = 0; i < 7; ++i) c.sigma_sim(i) = v[static_cast<std::size_t>(i)];
  }
  if (j.contains("filter_windows")) {
    const auto v = j["filter_windows"].get<std::vector<int>>();
    if (v.size() != 8) throw std::runtime_error("filter_windows needs 8 entries");
    for (int i = 0; i < 8; ++i) c.filter_windows[static_cast<std::size_t>(i)] = v[static_cast<std::size_t>(i)];
  }
  if (j.contains("track")) {
    const json& t = j["track"];
    if (t.contains("file")) {
      c.track_file = t["file"].get<std::string>();
    } else if (t.contains("synthesize")) {
      const json& s = t["synthesize"];
      const std::string kind = s.value("kind", "oval");
      if (kind == "oval") {
        c.track_spec.kind = TrackKind::oval;
      } else if (kind == "figure_eight") {
        c.track_spec.kind = TrackKind::figure_eight;
      } else {
        throw std::runtime_error("track.synthesize.kind must be oval or figure_eight");
      }
      c.track_spec.straight_len = s.value("straight_len", c.track_spec.straight_len);
      c.track_spec.radius = s.value("radius", c.track_spec.radius);
      c.track_spec.v_max = s.value("v_max", c.track_spec.v_max);
    } else {
      throw std::runtime_error("track needs either 'file' or 'synthesize'");
    }
  }
  c.vehicle_params_file = j.value("vehicle_params", c.vehicle_params_file);
  c.output_dir = j.value("output_dir", c.output_dir);
  return c;
}

std::string ExperimentConfig::to_json_string() const {
  json j;
  j["schema_version"] = schema_version;
  json ctrl = json::array();
  for (ControllerKind k : controllers) ctrl.push_back(to_string(k));
  j["controllers"] = ctrl;
  j["seeds"] = seeds;
  j["duration_s"] = duration_s;
  j["plant_substeps"] = plant_substeps;
  j["ocp"] = ocp_to_json(ocp);
  j["disturbance"]["sigma_sim"] = {sigma_sim(0), sigma_sim(1), sigma_sim(2),
                                   sigma_sim(3), sigma_sim(4), sigma_sim(5),
                                   sigma_sim(6)};
  j["filter_windows"] = filter_windows;
  if (!track_file.empty()) {
    j["track"]["file"] = track_file;
  } else {
    j["track"]["synthesize"] = {
        {"kind", track_spec.kind == TrackKind::oval ? "oval" : "figure_eight"},
        {"straight_len", track_spec.straight_len},
        {"radius", track_spec.radius},
        {"v_max", track_spec.v_max}};
  }
  j["vehicle_params"] = vehicle_params_file;
  j["output_dir"] = output_dir;
  j["derived"] = {{"kappa", ocp.kappa()},
                  {"n_p", ocp.prediction_steps()},
                  {"n_u", ocp.uncertainty_steps()}};
  return j.dump(2) + "\n";
}

std::vector<CellResult> run_experiment_cells(const ExperimentConfig& config,
                                             const std::string& out_dir,
                                             int parallel) {
  config.validate();

  const VehicleParams params = config.vehicle_params_file.empty()
                                   ? VehicleParams::defaults()
                                   : VehicleParams::from_json_file(config.vehicle_params_file);
  const ReferenceTrajectory track =
      config.track_file.empty() ? synthesize_track(config.track_spec, params)
                                : load_reference_csv(config.track_file);

  struct Cell {
    ControllerKind controller;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (ControllerKind k : config.controllers) {
    for (std::uint64_t seed : config.seeds) cells.push_back(Cell{k, seed});
  }

  std::vector<CellResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::string failure_message;
  std::mutex failure_mutex;

  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size() || failed.load()) break;
      const Cell& cell = cells[i];
      try {
        SimOptions options;
        options.duration = config.duration_s;
        options.plant_substeps = config.plant_substeps;
        options.filter_windows = config.filter_windows;
        DisturbanceModel disturbance;
        disturbance.sigma_sim = config.sigma_sim;
        disturbance.seed = cell.seed;
        CellResult& slot = results[i];
        slot.controller = cell.controller;
        slot.seed = cell.seed;
        slot.log = run_closed_loop(cell.controller, config.ocp, params, track,
                                   disturbance, options);
        slot.metrics = summarize(slot.log);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        failed.store(true);
        failure_message = std::string("cell ") + cell_name(cell.controller, cell.seed) +
                          ": " + e.what();
      }
    }
  };

  int n_threads = parallel > 0 ? parallel
                               : static_cast<int>(std::thread::hardware_concurrency());
  n_threads = std::max(1, std::min<int>(n_threads, static_cast<int>(cells.size())));
  {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failed.load()) {
    throw std::runtime_error(failure_message);
  }

  std::filesystem::create_directories(out_dir);
  json summary;
  summary["schema_version"] = 1;
  summary["duration_s"] = config.duration_s;
  summary["seeds"] = config.seeds;
  json cells_json = json::array();
  for (const CellResult& res : results) {
    const std::string cell = cell_name(res.controller, res.seed);
    write_simlog_csv(res.log, out_dir + "/log_" + cell + ".csv");
    write_timing_csv(res.log, out_dir + "/timing_" + cell + ".csv");
    write_plot_csvs(res.log, out_dir, cell);
    json c;
    c["controller"] = to_string(res.controller);
    c["seed"] = res.seed;
    c["metrics"] = metrics_to_json(res.metrics, res.log.aborted);
    cells_json.push_back(c);
  }
  summary["cells"] = cells_json;

  // Paired deltas per seed when both controllers ran.
  json paired = json::array();
  for (std::uint64_t seed : config.seeds) {
    const CellResult* nominal = nullptr;
    const CellResult* snmpc = nullptr;
    for (const CellResult& res : results) {
      if (res.seed != seed) continue;
      if (res.controller == ControllerKind::nominal) nominal = &res;
      if (res.controller == ControllerKind::snmpc) snmpc = &res;
    }
    if (nominal != nullptr && snmpc != nullptr) {
      json p;
      p["seed"] = seed;
      p["nominal_max_abs_dev"] = nominal->metrics.max_abs_dev;
      p["snmpc_max_abs_dev"] = snmpc->metrics.max_abs_dev;
      p["ratio"] = nominal->metrics.max_abs_dev > 0.0
                       ? snmpc->metrics.max_abs_dev / nominal->metrics.max_abs_dev
                       : 0.0;
      paired.push_back(p);
    }
  }
  summary["paired"] = paired;

  std::ofstream out(out_dir + "/summary.json");
  out << summary.dump(2) << '\n';

  for (const CellResult& res : results) {
    if (res.log.aborted) {
      throw std::runtime_error("cell " + cell_name(res.controller, res.seed) +
                               " aborted: " + res.log.abort_reason);
    }
  }
  return results;
}

int run_experiment(const std::string& config_path, const std::string& out_override,
                   int parallel) {
  ExperimentConfig config;
  try {
    config = ExperimentConfig::from_json_file(config_path);
    config.validate();
  } catch (const std::exception& e) {
    json err;
    err["error"] = {{"kind", "validation"}, {"message", e.what()}};
    std::cout << err.dump(2) << std::endl;
    return 1;
  }
  const std::string out_dir = out_override.empty() ? config.output_dir : out_override;
  try {
    run_experiment_cells(config, out_dir, parallel);
  } catch (const std::exception& e) {
    json err;
    err["error"] = {{"kind", "runtime"}, {"message", e.what()}};
    std::cout << err.dump(2) << std::endl;
    return 2;
  }
  return 0;
}

}  // namespace snmpc
