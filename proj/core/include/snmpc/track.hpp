#pragma once

#include "snmpc/vehicle.hpp"

#include <Eigen/Dense>

#include <string>

namespace snmpc {

/// Reference path plus velocity profile, sampled over arc length.
/// psi is unwrapped along s; closed tracks have coinciding endpoints.
struct ReferenceTrajectory {
  Eigen::VectorXd s;    // m, strictly increasing
  Eigen::VectorXd x;    // m
  Eigen::VectorXd y;    // m
  Eigen::VectorXd psi;  // rad, unwrapped
  Eigen::VectorXd v;    // m/s, in (0, 37.5]
  bool closed = false;

  int size() const { return static_cast<int>(s.size()); }
  double length() const { return s(s.size() - 1); }
  /// Heading gained over one full loop (2*pi for an oval, 0 for an eight).
  double loop_heading_delta() const { return psi(psi.size() - 1) - psi(0); }
};

/// Parses the CSV schema `s_m,x_m,y_m,psi_rad,vx_mps` and validates
/// monotone arc length, the velocity range and heading/tangent
/// consistency. psi is unwrapped after parsing.
ReferenceTrajectory load_reference_csv(const std::string& path);

/// Writes the same schema with round-trip-exact number formatting.
void save_reference_csv(const ReferenceTrajectory& track, const std::string& path);

enum class TrackKind { oval, figure_eight };

struct TrackSpec {
  TrackKind kind = TrackKind::oval;
  double straight_len = 250.0;  // m
  double radius = 40.0;         // m, must exceed 10
  double v_max = 30.0;          // m/s, capped at 37.5
};

/// Synthesizes a closed track sampled at 0.5 m arc-length steps with a
/// speed profile that respects the lateral limit (0.95 margin) and the
/// piecewise longitudinal acceleration tables via a forward/backward pass.
ReferenceTrajectory synthesize_track(const TrackSpec& spec, const VehicleParams& params);

/// Point query at arc length s_query (wrapped on closed tracks, with the
/// loop heading delta accumulated per lap).
struct TrackPoint {
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
  double v = 0.0;
};
TrackPoint track_point(const ReferenceTrajectory& track, double s_query);

/// Projection of a point onto the polyline. When `s_hint` is given the
/// search is restricted to a window around it, which keeps figure-eight
/// crossings on the correct branch.
struct PathProjection {
  double s = 0.0;        // arc length of the foot point
  double distance = 0.0; // unsigned distance
  double signed_lateral = 0.0;  // left of the tangent is positive
};
PathProjection project_to_path(const ReferenceTrajectory& track, double px, double py,
                               const double* s_hint = nullptr);

/// Reference window with one node per shooting stage.
struct ReferenceWindow {
  Eigen::MatrixXd nodes;  // n x 4 columns [x y psi v]
  int size() const { return static_cast<int>(nodes.rows()); }
};

/// Projects the state onto the path, then advances by velocity-integrated
/// arc length (s_{k+1} = s_k + v_ref(s_k) T_s). Headings are unwrapped to
/// the branch nearest the state heading. `inout_s_hint`, when given, seeds
/// the projection and receives the projected arc length.
ReferenceWindow reference_window(const ReferenceTrajectory& track,
                                 const VehicleState& state, int n_nodes, double t_s,
                                 double* inout_s_hint = nullptr);

}  // namespace snmpc
