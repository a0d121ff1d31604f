#pragma once

#include <Eigen/Dense>

#include <string>

namespace snmpc {

/// Planar single-track vehicle state. psi is kept unwrapped.
struct VehicleState {
  double x_pos = 0.0;    // m
  double y_pos = 0.0;    // m
  double psi = 0.0;      // rad
  double v_lon = 0.0;    // m/s
  double v_lat = 0.0;    // m/s
  double psi_dot = 0.0;  // rad/s
  double delta_f = 0.0;  // rad
  double a = 0.0;        // m/s^2

  static constexpr int kDim = 8;

  Eigen::Matrix<double, 8, 1> vec() const;
  static VehicleState from_vec(const Eigen::Matrix<double, 8, 1>& v);
  double component(int i) const;
  void set_component(int i, double value);
  bool all_finite() const;

  friend VehicleState operator+(const VehicleState& l, const VehicleState& r);
  friend VehicleState operator*(double s, const VehicleState& x);
};

struct VehicleControl {
  double jerk = 0.0;        // m/s^3
  double steer_rate = 0.0;  // rad/s

  static constexpr int kDim = 2;
  bool all_finite() const;
};

/// Physical constants of the single-track + Pacejka model. Loadable from
/// a flat JSON object; clip_ratio is fixed at 0.98 and not part of the
/// file schema.
struct VehicleParams {
  double m = 2800.0;     // kg
  double I_z = 5500.0;   // kg m^2
  double l_f = 1.60;     // m
  double l_r = 1.55;     // m
  double B_f = 12.0, C_f = 1.5, D_f = 11000.0, E_f = 0.97;
  double B_r = 12.0, C_r = 1.5, D_r = 15500.0, E_r = 0.97;
  double fr0 = 0.009, fr1 = 0.002, fr4 = 0.0003;
  double rho = 1.225;    // kg/m^3
  double S = 3.5;        // m^2
  double C_d = 0.30;
  double g = 9.81;       // m/s^2
  double F_max_f = 11000.0;  // N, combined-slip saturation (default: D_f)
  double F_max_r = 15500.0;  // N (default: D_r)
  double v_eps = 1.0;        // m/s, low-speed slip guard
  double a_y_max = 5.866;    // m/s^2
  double clip_ratio = 0.98;

  void validate() const;
  static VehicleParams from_json_file(const std::string& path);
  static VehicleParams defaults() { return VehicleParams{}; }
};

struct AxleLoads {
  double front = 0.0;  // N
  double rear = 0.0;   // N
};

struct SlipAngles {
  double front = 0.0;  // rad
  double rear = 0.0;   // rad
};

struct LongitudinalForces {
  double front = 0.0;  // N
  double rear = 0.0;   // N
};

enum class Axle { front, rear };
enum class AccelMode { accelerating, decelerating };

/// Static vertical loads; front + rear = m g.
AxleLoads vertical_loads(const VehicleParams& p);

/// Side slip angles with the low-speed denominator floored at v_eps.
SlipAngles slip_angles(const VehicleState& x, const VehicleParams& p);

/// Reduced Pacejka magic formula for one axle.
double tire_lateral_force(double alpha, Axle axle, const VehicleParams& p);

/// Lateral force reduction under combined slip; the load ratio is
/// clipped at +/- clip_ratio before asin.
double combined_slip_lateral(double f_tire, double f_x, double f_max,
                             double clip_ratio);

/// Drive, rolling-resistance and aerodynamic contributions per axle.
LongitudinalForces longitudinal_forces(const VehicleState& x,
                                       const VehicleParams& p);

/// Continuous-time dynamics of the 8-state single-track model.
VehicleState dynamics_rhs(const VehicleState& x, const VehicleControl& u,
                          const VehicleParams& p);

/// Classical RK4 with zero-order-hold control, `substeps` sub-intervals.
/// Throws if the propagated state is not finite.
VehicleState rk4_step(const VehicleState& x, const VehicleControl& u,
                      double dt, int substeps, const VehicleParams& p);

/// Speed-dependent longitudinal acceleration limit (vehicle-interface
/// table; v_lon is clamped into [0, 37.5]).
double ax_max(double v_lon, AccelMode mode);

/// Combined acceleration potential (a/ax_max)^2 + (a_lat/a_y_max)^2 with
/// the exact piecewise ax_max selection (sign of `a` picks the table).
double gg_constraint(const VehicleState& x, const VehicleParams& p);

/// Same potential with the accelerate/decelerate table selection blended
/// by a sigmoid of width 0.2 m/s^2 around a = 0, so derivatives stay
/// defined inside the OCP.
double gg_constraint_smooth(const VehicleState& x, const VehicleParams& p);

}  // namespace snmpc
