#pragma once

#include "snmpc/ocp.hpp"
#include "snmpc/sim.hpp"
#include "snmpc/track.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace snmpc {

/// Full description of an experiment: controllers x seeds cells over one
/// track, one disturbance model and one OCP configuration.
struct ExperimentConfig {
  int schema_version = 1;
  std::vector<ControllerKind> controllers{ControllerKind::nominal,
                                          ControllerKind::snmpc};
  std::vector<std::uint64_t> seeds{1};
  double duration_s = 120.0;
  int plant_substeps = 4;
  OcpConfig ocp;
  Eigen::Matrix<double, 7, 1> sigma_sim =
      (Eigen::Matrix<double, 7, 1>() << 0.1, 0.1, 0.05, 0.8, 0.35, 0.035, 0.01)
          .finished();
  std::array<int, 8> filter_windows{1, 1, 4, 2, 2, 3, 4, 2};
  std::string track_file;  // when empty the track is synthesized
  TrackSpec track_spec;
  std::string vehicle_params_file;  // when empty the built-in defaults apply
  std::string output_dir = "out";

  void validate() const;
  static ExperimentConfig defaults() { return ExperimentConfig{}; }
  static ExperimentConfig from_json_file(const std::string& path);
  static ExperimentConfig from_json_string(const std::string& text);
  /// Serialization also carries a read-only "derived" block (kappa, N_p, N_u).
  std::string to_json_string() const;
};

struct CellResult {
  ControllerKind controller = ControllerKind::nominal;
  std::uint64_t seed = 0;
  SimLog log;
  SummaryMetrics metrics;
};

/// Runs every (controller x seed) cell, writes per-cell logs, timing and
/// plot-data CSVs plus summary.json into the output directory. Throws on
/// validation problems; returns the cell results for in-process use.
std::vector<CellResult> run_experiment_cells(const ExperimentConfig& config,
                                             const std::string& out_dir,
                                             int parallel = 0);

/// CLI entry: exit code 0 on success, 1 on validation failure, 2 on a
/// mid-run abort; failures emit a machine-readable JSON error on stdout.
int run_experiment(const std::string& config_path, const std::string& out_override = "",
                   int parallel = 0);

const char* to_string(ControllerKind kind);

}  // namespace snmpc
