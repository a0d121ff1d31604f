#include "snmpc/vehicle.hpp"

#include "snmpc/detail/rk4.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace snmpc {

namespace {

constexpr double kVMaxInterface = 37.5;   // m/s
constexpr double kSigmoidWidth = 0.2;     // m/s^2, accel/decel blend width

double logistic(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Eigen::Matrix<double, 8, 1> VehicleState::vec() const {
  Eigen::Matrix<double, 8, 1> v;
  v << x_pos, y_pos, psi, v_lon, v_lat, psi_dot, delta_f, a;
  return v;
}

VehicleState VehicleState::from_vec(const Eigen::Matrix<double, 8, 1>& v) {
  return VehicleState{v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7)};
}

double VehicleState::component(int i) const {
  switch (i) {
    case 0: return x_pos;
    case 1: return y_pos;
    case 2: return psi;
    case 3: return v_lon;
    case 4: return v_lat;
    case 5: return psi_dot;
    case 6: return delta_f;
    case 7: return a;
    default: throw std::out_of_range("VehicleState::component");
  }
}

void VehicleState::set_component(int i, double value) {
  switch (i) {
    case 0: x_pos = value; return;
    case 1: y_pos = value; return;
    case 2: psi = value; return;
    case 3: v_lon = value; return;
    case 4: v_lat = value; return;
    case 5: psi_dot = value; return;
    case 6: delta_f = value; return;
    case 7: a = value; return;
    default: throw std::out_of_range("VehicleState::set_component");
  }
}

bool VehicleState::all_finite() const {
  return std::isfinite(x_pos) && std::isfinite(y_pos) && std::isfinite(psi) &&
         std::isfinite(v_lon) && std::isfinite(v_lat) && std::isfinite(psi_dot) &&
         std::isfinite(delta_f) && std::isfinite(a);
}

VehicleState operator+(const VehicleState& l, const VehicleState& r) {
  return VehicleState{l.x_pos + r.x_pos,     l.y_pos + r.y_pos,
                      l.psi + r.psi,         l.v_lon + r.v_lon,
                      l.v_lat + r.v_lat,     l.psi_dot + r.psi_dot,
                      l.delta_f + r.delta_f, l.a + r.a};
}

VehicleState operator*(double s, const VehicleState& x) {
  return VehicleState{s * x.x_pos,   s * x.y_pos,    s * x.psi,
                      s * x.v_lon,   s * x.v_lat,    s * x.psi_dot,
                      s * x.delta_f, s * x.a};
}

bool VehicleControl::all_finite() const {
  return std::isfinite(jerk) && std::isfinite(steer_rate);
}

void VehicleParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) {
      throw std::invalid_argument(std::string("VehicleParams: ") + name +
                                  " must be positive");
    }
  };
  positive(m, "m");
  positive(I_z, "I_z");
  positive(l_f, "l_f");
  positive(l_r, "l_r");
  positive(g, "g");
  positive(F_max_f, "F_max_f");
  positive(F_max_r, "F_max_r");
  positive(v_eps, "v_eps");
  positive(a_y_max, "a_y_max");
  positive(rho, "rho");
  positive(S, "S");
  if (!(clip_ratio > 0.0 && clip_ratio < 1.0)) {
    throw std::invalid_argument("VehicleParams: clip_ratio must lie in (0, 1)");
  }
}

VehicleParams VehicleParams::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("VehicleParams: cannot open " + path);
  }
  nlohmann::json j;
  in >> j;

  static const char* const keys[] = {
      "m",   "I_z", "l_f", "l_r", "B_f", "C_f",     "D_f",     "E_f",
      "B_r", "C_r", "D_r", "E_r", "fr0", "fr1",     "fr4",     "rho",
      "S",   "C_d", "g",   "F_max_f",   "F_max_r",  "v_eps",   "a_y_max"};
  for (const char* key : keys) {
    if (!j.contains(key)) {
      throw std::runtime_error(std::string("VehicleParams: missing key '") + key +
                               "' in " + path);
    }
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* key : keys) {
      if (it.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw std::runtime_error("VehicleParams: unknown key '" + it.key() + "' in " +
                               path);
    }
  }

  VehicleParams p;
  p.m = j["m"];
  p.I_z = j["I_z"];
  p.l_f = j["l_f"];
  p.l_r = j["l_r"];
  p.B_f = j["B_f"];
  p.C_f = j["C_f"];
  p.D_f = j["D_f"];
  p.E_f = j["E_f"];
  p.B_r = j["B_r"];
  p.C_r = j["C_r"];
  p.D_r = j["D_r"];
  p.E_r = j["E_r"];
  p.fr0 = j["fr0"];
  p.fr1 = j["fr1"];
  p.fr4 = j["fr4"];
  p.rho = j["rho"];
  p.S = j["S"];
  p.C_d = j["C_d"];
  p.g = j["g"];
  p.F_max_f = j["F_max_f"];
  p.F_max_r = j["F_max_r"];
  p.v_eps = j["v_eps"];
  p.a_y_max = j["a_y_max"];
  p.validate();
  return p;
}

AxleLoads vertical_loads(const VehicleParams& p) {
  const double wheelbase = p.l_f + p.l_r;
  return AxleLoads{p.m * p.g * p.l_r / wheelbase, p.m * p.g * p.l_f / wheelbase};
}

SlipAngles slip_angles(const VehicleState& x, const VehicleParams& p) {
  const double v = std::max(x.v_lon, p.v_eps);
  return SlipAngles{
      x.delta_f - std::atan((x.v_lat + p.l_f * x.psi_dot) / v),
      std::atan((p.l_r * x.psi_dot - x.v_lat) / v)};
}

double tire_lateral_force(double alpha, Axle axle, const VehicleParams& p) {
  const double b = axle == Axle::front ? p.B_f : p.B_r;
  const double c = axle == Axle::front ? p.C_f : p.C_r;
  const double d = axle == Axle::front ? p.D_f : p.D_r;
  const double e = axle == Axle::front ? p.E_f : p.E_r;
  const double ba = b * alpha;
  return d * std::sin(c * std::atan(ba - e * (ba - std::atan(ba))));
}

double combined_slip_lateral(double f_tire, double f_x, double f_max,
                             double clip_ratio) {
  const double ratio = std::clamp(f_x / f_max, -clip_ratio, clip_ratio);
  return f_tire * std::cos(std::asin(ratio));
}

LongitudinalForces longitudinal_forces(const VehicleState& x,
                                       const VehicleParams& p) {
  const AxleLoads fz = vertical_loads(p);
  const double v_kmh = 3.6 * std::hypot(x.v_lon, x.v_lat);
  const double s = v_kmh / 100.0;
  const double fr = p.fr0 + p.fr1 * s + p.fr4 * s * s * s * s;
  const double f_drive = p.m * x.a;
  const double f_aero = 0.5 * p.rho * p.S * p.C_d * x.v_lon * x.v_lon;
  return LongitudinalForces{-fr * fz.front, f_drive - fr * fz.rear - f_aero};
}

VehicleState dynamics_rhs(const VehicleState& x, const VehicleControl& u,
                          const VehicleParams& p) {
  const SlipAngles alpha = slip_angles(x, p);
  const LongitudinalForces fx = longitudinal_forces(x, p);
  const double f_yf = combined_slip_lateral(
      tire_lateral_force(alpha.front, Axle::front, p), fx.front, p.F_max_f,
      p.clip_ratio);
  const double f_yr = combined_slip_lateral(
      tire_lateral_force(alpha.rear, Axle::rear, p), fx.rear, p.F_max_r,
      p.clip_ratio);

  const double sin_psi = std::sin(x.psi);
  const double cos_psi = std::cos(x.psi);
  const double sin_d = std::sin(x.delta_f);
  const double cos_d = std::cos(x.delta_f);

  VehicleState dx;
  dx.x_pos = x.v_lon * cos_psi - x.v_lat * sin_psi;
  dx.y_pos = x.v_lon * sin_psi + x.v_lat * cos_psi;
  dx.psi = x.psi_dot;
  dx.v_lon = (fx.rear - f_yf * sin_d + fx.front * cos_d + p.m * x.v_lat * x.psi_dot) / p.m;
  dx.v_lat = (f_yr + f_yf * cos_d + fx.front * sin_d - p.m * x.v_lon * x.psi_dot) / p.m;
  dx.psi_dot = (p.l_f * (f_yf * cos_d + fx.front * sin_d) - p.l_r * f_yr) / p.I_z;
  dx.delta_f = u.steer_rate;
  dx.a = u.jerk;
  return dx;
}

VehicleState rk4_step(const VehicleState& x, const VehicleControl& u,
                      double dt, int substeps, const VehicleParams& p) {
  if (!(dt > 0.0)) throw std::invalid_argument("rk4_step: dt must be positive");
  if (substeps < 1) throw std::invalid_argument("rk4_step: substeps must be >= 1");
  const VehicleState out = detail::rk4(
      [&](const VehicleState& s) { return dynamics_rhs(s, u, p); }, x, dt, substeps);
  if (!out.all_finite()) {
    throw std::runtime_error("rk4_step: non-finite state after integration");
  }
  return out;
}

double ax_max(double v_lon, AccelMode mode) {
  const double v = std::clamp(v_lon, 0.0, kVMaxInterface);
  if (mode == AccelMode::decelerating) {
    return v <= 11.0 ? 4.5 : 3.5;
  }
  return v <= 11.0 ? 3.0 : 2.5;
}

double gg_constraint(const VehicleState& x, const VehicleParams& p) {
  const AccelMode mode =
      x.a >= 0.0 ? AccelMode::accelerating : AccelMode::decelerating;
  const double ax = ax_max(x.v_lon, mode);
  const double a_lat = x.v_lon * x.psi_dot;
  const double lon = x.a / ax;
  const double lat = a_lat / p.a_y_max;
  return lon * lon + lat * lat;
}

double gg_constraint_smooth(const VehicleState& x, const VehicleParams& p) {
  const double s = logistic(x.a / kSigmoidWidth);
  const double ax = s * ax_max(x.v_lon, AccelMode::accelerating) +
                    (1.0 - s) * ax_max(x.v_lon, AccelMode::decelerating);
  const double a_lat = x.v_lon * x.psi_dot;
  const double lon = x.a / ax;
  const double lat = a_lat / p.a_y_max;
  return lon * lon + lat * lat;
}

}  // namespace snmpc
