#include "snmpc/experiment.hpp"
#include "snmpc/track.hpp"
#include "snmpc/vehicle.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>

namespace {

int synthesize_track_command(const std::string& spec_path, const std::string& out_path) {
  try {
    std::ifstream in(spec_path);
    if (!in) throw std::runtime_error("cannot open " + spec_path);
    nlohmann::json j;
    in >> j;

    snmpc::TrackSpec spec;
    const std::string kind = j.value("kind", "oval");
    if (kind == "oval") {
      spec.kind = snmpc::TrackKind::oval;
    } else if (kind == "figure_eight") {
      spec.kind = snmpc::TrackKind::figure_eight;
    } else {
      throw std::runtime_error("kind must be oval or figure_eight");
    }
    spec.straight_len = j.value("straight_len", spec.straight_len);
    spec.radius = j.value("radius", spec.radius);
    spec.v_max = j.value("v_max", spec.v_max);

    snmpc::VehicleParams params = snmpc::VehicleParams::defaults();
    if (j.contains("vehicle_params")) {
      params = snmpc::VehicleParams::from_json_file(j["vehicle_params"].get<std::string>());
    }
    const snmpc::ReferenceTrajectory track = snmpc::synthesize_track(spec, params);
    snmpc::save_reference_csv(track, out_path);
    std::cout << "wrote " << out_path << " (" << track.size() << " nodes, "
              << track.length() << " m)\n";
    return 0;
  } catch (const std::exception& e) {
    nlohmann::json err;
    err["error"] = {{"kind", "synthesize"}, {"message", e.what()}};
    std::cout << err.dump(2) << std::endl;
    return 1;
  }
}

int validate_command(const std::string& config_path) {
  try {
    const auto config = snmpc::ExperimentConfig::from_json_file(config_path);
    config.validate();
    std::cout << "ok\n";
    return 0;
  } catch (const std::exception& e) {
    nlohmann::json err;
    err["error"] = {{"kind", "validation"}, {"message", e.what()}};
    std::cout << err.dump(2) << std::endl;
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trajectory-following MPC experiment runner"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  int parallel = 0;
  CLI::App* run = app.add_subcommand("run", "Run an experiment configuration");
  run->add_option("config", config_path, "Experiment config JSON")->required();
  run->add_option("--out", out_dir, "Output directory (overrides the config)");
  run->add_option("--parallel", parallel, "Worker count (default: physical cores)");

  CLI::App* defaults = app.add_subcommand("defaults", "Print the default configuration");

  std::string spec_path, track_out;
  CLI::App* synth = app.add_subcommand("synthesize-track", "Write a synthetic track CSV");
  synth->add_option("spec", spec_path, "Track spec JSON")->required();
  synth->add_option("out", track_out, "Output CSV path")->required();

  std::string validate_path;
  CLI::App* validate = app.add_subcommand("validate", "Validate a configuration file");
  validate->add_option("config", validate_path, "Experiment config JSON")->required();

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    return snmpc::run_experiment(config_path, out_dir, parallel);
  }
  if (defaults->parsed()) {
    std::cout << snmpc::ExperimentConfig::defaults().to_json_string();
    return 0;
  }
  if (synth->parsed()) {
    return synthesize_track_command(spec_path, track_out);
  }
  if (validate->parsed()) {
    return validate_command(validate_path);
  }
  return 0;
}
