#include "snmpc/track.hpp"

#include "format.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace snmpc {

namespace {

constexpr double kSampleStep = 0.5;     // m
constexpr double kSpeedMargin = 0.95;
constexpr double kLongMargin = 0.80;   // braking/throttle headroom for the tracking loop
constexpr double kVMaxInterface = 37.5; // m/s
constexpr double kProjectionLimit = 50.0;  // m
constexpr double kHintBehind = 20.0;    // m
constexpr double kHintAhead = 60.0;     // m

double wrap_pm_pi(double angle) {
  return std::remainder(angle, 2.0 * M_PI);
}

// One geometric primitive of a synthesized centerline; the curvature
// varies linearly along the piece (clothoid), with straights and arcs as
// the constant special cases.
struct Piece {
  double length;
  double kappa_start;
  double kappa_end;

  double kappa_at(double t) const {
    return kappa_start + (kappa_end - kappa_start) * (length > 0.0 ? t / length : 0.0);
  }
  double heading_gain(double t) const {
    // integral of kappa over [0, t], exact for the linear ramp
    return kappa_start * t + 0.5 * (kappa_end - kappa_start) * t * t / length;
  }
  double turn() const {
    return 0.5 * (kappa_start + kappa_end) * length;
  }
};

// Corner unit spiral-in / arc / spiral-out with the given total heading
// change. Transition length is tied to the radius so the steering ramp
// stays gentle.
void append_corner(std::vector<Piece>& pieces, double total_turn, double radius) {
  const double kappa = (total_turn >= 0.0 ? 1.0 : -1.0) / radius;
  double spiral = std::clamp(1.2 * radius, 15.0, 100.0);
  // keep a real arc in the middle
  const double max_spiral_turn = 0.4 * std::abs(total_turn);
  if (0.5 * std::abs(kappa) * spiral > max_spiral_turn) {
    spiral = 2.0 * max_spiral_turn / std::abs(kappa);
  }
  const double arc_turn = std::abs(total_turn) - std::abs(kappa) * spiral;
  pieces.push_back(Piece{spiral, 0.0, kappa});
  pieces.push_back(Piece{arc_turn / std::abs(kappa), kappa, kappa});
  pieces.push_back(Piece{spiral, kappa, 0.0});
}

std::vector<Piece> oval_pieces(double straight_len, double radius) {
  std::vector<Piece> pieces;
  pieces.push_back(Piece{straight_len, 0.0, 0.0});
  append_corner(pieces, M_PI, radius);
  pieces.push_back(Piece{straight_len, 0.0, 0.0});
  append_corner(pieces, M_PI, radius);
  return pieces;
}

// Two circles of the given radius joined by their internal tangent lines,
// which cross at the origin; straight_len is the combined tangent length
// per crossing line. Constant-curvature loops keep the tangent geometry
// exact.
std::vector<Piece> figure_eight_pieces(double straight_len, double radius) {
  const double t_len = std::max(straight_len / 2.0, 1.0);
  const double d = std::hypot(radius, t_len);
  const double beta = std::asin(radius / d);
  const double arc_angle = M_PI + 2.0 * beta;
  const double kappa = 1.0 / radius;

  std::vector<Piece> pieces;
  pieces.push_back(Piece{t_len, 0.0, 0.0});
  pieces.push_back(Piece{arc_angle * radius, -kappa, -kappa});  // right loop, CW
  pieces.push_back(Piece{2.0 * t_len, 0.0, 0.0});
  pieces.push_back(Piece{arc_angle * radius, kappa, kappa});  // left loop, CCW
  pieces.push_back(Piece{t_len, 0.0, 0.0});
  return pieces;
}

int locate_segment(const Eigen::VectorXd& s, double s_query) {
  // Largest i with s(i) <= s_query, clamped to a valid segment index.
  const int n = static_cast<int>(s.size());
  int lo = 0, hi = n - 1;
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    if (s(mid) <= s_query) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

double interp(const Eigen::VectorXd& s, const Eigen::VectorXd& f, int i, double s_query) {
  const double span = s(i + 1) - s(i);
  const double t = span > 0.0 ? (s_query - s(i)) / span : 0.0;
  return f(i) + t * (f(i + 1) - f(i));
}

void validate_track(const ReferenceTrajectory& track, const std::string& origin) {
  const int n = track.size();
  if (n < 2) throw std::runtime_error(origin + ": needs at least two nodes");
  for (int i = 1; i < n; ++i) {
    if (!(track.s(i) > track.s(i - 1))) {
      throw std::runtime_error(origin + ": non-monotone arc length at row " +
                               std::to_string(i + 1));
    }
  }
  for (int i = 0; i < n; ++i) {
    if (!(track.v(i) > 0.0) || track.v(i) > kVMaxInterface + 1e-9) {
      throw std::runtime_error(origin + ": velocity out of range (0, 37.5] at row " +
                               std::to_string(i + 1));
    }
  }
  for (int i = 0; i < n; ++i) {
    const int seg = std::min(i, n - 2);  // outgoing tangent; last node uses incoming
    const double dx = track.x(seg + 1) - track.x(seg);
    const double dy = track.y(seg + 1) - track.y(seg);
    const double tangent = std::atan2(dy, dx);
    if (std::abs(wrap_pm_pi(track.psi(i) - tangent)) > 0.05 + 1e-9) {
      throw std::runtime_error(origin + ": heading inconsistent with tangent at row " +
                               std::to_string(i + 1));
    }
  }
}

}  // namespace

ReferenceTrajectory load_reference_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_reference_csv: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("load_reference_csv: empty file " + path);
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "s_m,x_m,y_m,psi_rad,vx_mps") {
    throw std::runtime_error("load_reference_csv: unexpected header '" + line + "'");
  }

  std::vector<std::array<double, 5>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<double, 5> row{};
    std::stringstream ss(line);
    std::string cell;
    for (int c = 0; c < 5; ++c) {
      if (!std::getline(ss, cell, ',')) {
        throw std::runtime_error("load_reference_csv: malformed row " +
                                 std::to_string(line_no));
      }
      try {
        row[c] = std::stod(cell);
      } catch (const std::exception&) {
        throw std::runtime_error("load_reference_csv: malformed number in row " +
                                 std::to_string(line_no));
      }
    }
    rows.push_back(row);
  }

  const int n = static_cast<int>(rows.size());
  ReferenceTrajectory track;
  track.s.resize(n);
  track.x.resize(n);
  track.y.resize(n);
  track.psi.resize(n);
  track.v.resize(n);
  for (int i = 0; i < n; ++i) {
    track.s(i) = rows[i][0];
    track.x(i) = rows[i][1];
    track.y(i) = rows[i][2];
    track.psi(i) = rows[i][3];
    track.v(i) = rows[i][4];
  }
  // Unwrap headings along the path.
  for (int i = 1; i < n; ++i) {
    track.psi(i) = track.psi(i - 1) + wrap_pm_pi(track.psi(i) - track.psi(i - 1));
  }
  validate_track(track, "load_reference_csv");
  track.closed = n >= 3 && std::hypot(track.x(n - 1) - track.x(0),
                                      track.y(n - 1) - track.y(0)) < 1e-6;
  return track;
}

void save_reference_csv(const ReferenceTrajectory& track, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_reference_csv: cannot open " + path);
  out << "s_m,x_m,y_m,psi_rad,vx_mps\n";
  for (int i = 0; i < track.size(); ++i) {
    out << detail::fmt_double(track.s(i)) << ',' << detail::fmt_double(track.x(i))
        << ',' << detail::fmt_double(track.y(i)) << ','
        << detail::fmt_double(track.psi(i)) << ',' << detail::fmt_double(track.v(i))
        << '\n';
  }
}

ReferenceTrajectory synthesize_track(const TrackSpec& spec, const VehicleParams& params) {
  if (!(spec.radius > 10.0)) {
    throw std::invalid_argument("synthesize_track: radius must exceed 10 m");
  }
  if (!(spec.v_max > 0.0) || spec.v_max > kVMaxInterface) {
    throw std::invalid_argument("synthesize_track: v_max must lie in (0, 37.5]");
  }
  if (spec.straight_len < 0.0) {
    throw std::invalid_argument("synthesize_track: straight_len must be non-negative");
  }

  const double psi_init =
      spec.kind == TrackKind::oval
          ? 0.0
          : std::asin(spec.radius / std::hypot(spec.radius,
                                               std::max(spec.straight_len / 2.0, 1.0)));
  const std::vector<Piece> pieces = spec.kind == TrackKind::oval
                                        ? oval_pieces(spec.straight_len, spec.radius)
                                        : figure_eight_pieces(spec.straight_len, spec.radius);
  std::vector<double> piece_start(pieces.size() + 1, 0.0);
  std::vector<double> piece_psi(pieces.size() + 1, psi_init);
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    piece_start[i + 1] = piece_start[i] + pieces[i].length;
    piece_psi[i + 1] = piece_psi[i] + pieces[i].turn();
  }
  const double total = piece_start.back();

  auto locate_piece = [&](double s) {
    std::size_t i = 0;
    while (i + 1 < pieces.size() && s > piece_start[i + 1] + 1e-12) ++i;
    return i;
  };
  auto psi_at = [&](double s) {
    const std::size_t i = locate_piece(s);
    const double local = std::clamp(s - piece_start[i], 0.0, pieces[i].length);
    return piece_psi[i] + pieces[i].heading_gain(local);
  };
  auto kappa_at = [&](double s) {
    const std::size_t i = locate_piece(s);
    const double local = std::clamp(s - piece_start[i], 0.0, pieces[i].length);
    return pieces[i].kappa_at(local);
  };

  const int n_seg = std::max(8, static_cast<int>(std::ceil(total / kSampleStep)));
  const double ds = total / n_seg;
  const int n = n_seg + 1;

  ReferenceTrajectory track;
  track.s.resize(n);
  track.x.resize(n);
  track.y.resize(n);
  track.psi.resize(n);
  track.v.resize(n);
  track.closed = true;

  Eigen::VectorXd curvature(n);
  track.s(0) = 0.0;
  track.x(0) = 0.0;
  track.y(0) = 0.0;
  track.psi(0) = psi_init;
  curvature(0) = kappa_at(0.0);
  double cx = 0.0, cy = 0.0;
  for (int k = 1; k < n; ++k) {
    const double s_a = (k - 1) * ds;
    // Simpson quadrature of (cos psi, sin psi) over the interval; psi is
    // exact along the pieces.
    const int substeps = std::max(1, static_cast<int>(std::ceil(ds / 0.05)));
    const double h = ds / substeps;
    for (int m = 0; m < substeps; ++m) {
      const double a = s_a + m * h;
      const double p0 = psi_at(a);
      const double p1 = psi_at(a + 0.5 * h);
      const double p2 = psi_at(a + h);
      cx += h / 6.0 * (std::cos(p0) + 4.0 * std::cos(p1) + std::cos(p2));
      cy += h / 6.0 * (std::sin(p0) + 4.0 * std::sin(p1) + std::sin(p2));
    }
    track.s(k) = k * ds;
    track.x(k) = cx;
    track.y(k) = cy;
    track.psi(k) = psi_at(k * ds);
    curvature(k) = kappa_at(k * ds);
  }
  // Exact closure of the sampled loop.
  track.x(n - 1) = track.x(0);
  track.y(n - 1) = track.y(0);

  // Lateral speed cap per node, with margin.
  double cap_min = spec.v_max;
  for (int k = 0; k < n; ++k) {
    double cap = spec.v_max;
    if (curvature(k) != 0.0) {
      cap = std::min(cap, kSpeedMargin *
                              std::sqrt(params.a_y_max / std::abs(curvature(k))));
    }
    track.v(k) = cap;
    cap_min = std::min(cap_min, cap);
  }
  if (cap_min < 1.0) {
    throw std::invalid_argument(
        "synthesize_track: infeasible geometry, lateral cap drops below 1 m/s");
  }

  // Longitudinal feasibility. The allowed |dv^2/(2 ds)| uses the table at
  // the faster interval endpoint (the tables are non-increasing in v) and
  // shrinks with the lateral share of the combined gg ellipse, so the
  // profile never asks for braking and full cornering at once.
  auto limit = [&](int k_a, int k_b, AccelMode mode) {
    const double v_fast = std::max(track.v(k_a), track.v(k_b));
    const double kappa = std::max(std::abs(curvature(k_a)), std::abs(curvature(k_b)));
    const double lat_ratio = v_fast * v_fast * kappa / params.a_y_max;
    const double lon_share = std::sqrt(std::max(0.0, 1.0 - lat_ratio * lat_ratio));
    return kLongMargin * ax_max(v_fast, mode) * lon_share;
  };
  const int laps = track.closed ? 2 : 1;
  for (int lap = 0; lap < laps; ++lap) {  // backward pass: deceleration into slow zones
    for (int k = n_seg - 1; k >= 0; --k) {
      for (int it = 0; it < 2; ++it) {
        const double allowed = limit(k, k + 1, AccelMode::decelerating);
        const double v_max_k = std::sqrt(track.v(k + 1) * track.v(k + 1) + 2.0 * ds * allowed);
        track.v(k) = std::min(track.v(k), v_max_k);
      }
    }
    if (track.closed) track.v(n - 1) = track.v(0);
  }
  for (int lap = 0; lap < laps; ++lap) {  // forward pass: acceleration out of slow zones
    for (int k = 0; k < n_seg; ++k) {
      for (int it = 0; it < 2; ++it) {
        const double allowed = limit(k, k + 1, AccelMode::accelerating);
        const double v_max_next = std::sqrt(track.v(k) * track.v(k) + 2.0 * ds * allowed);
        track.v(k + 1) = std::min(track.v(k + 1), v_max_next);
      }
    }
    if (track.closed) track.v(0) = track.v(n - 1);
  }

  validate_track(track, "synthesize_track");
  return track;
}

TrackPoint track_point(const ReferenceTrajectory& track, double s_query) {
  const double len = track.length();
  double lap = 0.0;
  double s_local = s_query;
  if (track.closed) {
    lap = std::floor(s_query / len);
    s_local = s_query - lap * len;
    if (s_local < 0.0) {  // guard against rounding at the seam
      s_local = 0.0;
    }
  } else {
    s_local = std::clamp(s_query, 0.0, len);
  }
  const int i = locate_segment(track.s, s_local);
  TrackPoint p;
  p.x = interp(track.s, track.x, i, s_local);
  p.y = interp(track.s, track.y, i, s_local);
  p.v = interp(track.s, track.v, i, s_local);
  p.psi = interp(track.s, track.psi, i, s_local) + lap * track.loop_heading_delta();
  return p;
}

PathProjection project_to_path(const ReferenceTrajectory& track, double px, double py,
                               const double* s_hint) {
  const int n = track.size();
  const double len = track.length();

  auto scan = [&](int first, int last, PathProjection& best) {
    for (int i = first; i < last; ++i) {
      const double ax = track.x(i), ay = track.y(i);
      const double bx = track.x(i + 1), by = track.y(i + 1);
      const double dx = bx - ax, dy = by - ay;
      const double seg_sq = dx * dx + dy * dy;
      if (seg_sq == 0.0) continue;
      double t = ((px - ax) * dx + (py - ay) * dy) / seg_sq;
      t = std::clamp(t, 0.0, 1.0);
      const double fx = ax + t * dx, fy = ay + t * dy;
      const double dist = std::hypot(px - fx, py - fy);
      if (dist < best.distance) {
        const double seg_len = std::sqrt(seg_sq);
        best.distance = dist;
        best.s = track.s(i) + t * seg_len;
        best.signed_lateral = (dx * (py - fy) - dy * (px - fx)) / seg_len;
      }
    }
  };

  PathProjection best;
  best.distance = std::numeric_limits<double>::infinity();

  if (s_hint != nullptr) {
    double hint_local = *s_hint;
    if (track.closed) {
      hint_local -= std::floor(hint_local / len) * len;
    } else {
      hint_local = std::clamp(hint_local, 0.0, len);
    }
    double lo = hint_local - kHintBehind;
    double hi = hint_local + kHintAhead;
    if (track.closed && hi - lo < len) {
      if (lo < 0.0) {
        scan(locate_segment(track.s, lo + len), n - 1, best);
        lo = 0.0;
      }
      if (hi > len) {
        scan(0, locate_segment(track.s, hi - len) + 1, best);
        hi = len;
      }
      scan(locate_segment(track.s, lo), std::min(locate_segment(track.s, hi) + 1, n - 1),
           best);
    } else {
      scan(locate_segment(track.s, std::max(lo, 0.0)),
           std::min(locate_segment(track.s, std::min(hi, len)) + 1, n - 1), best);
    }
    if (best.distance <= 10.0) {
      // Keep continuity with the hint: report s on the hint's branch.
      const double delta = track.closed
                               ? std::remainder(best.s - hint_local, len)
                               : best.s - hint_local;
      best.s = *s_hint + delta;
      return best;
    }
    best.distance = std::numeric_limits<double>::infinity();  // fall through to full scan
  }

  scan(0, n - 1, best);
  return best;
}

ReferenceWindow reference_window(const ReferenceTrajectory& track,
                                 const VehicleState& state, int n_nodes, double t_s,
                                 double* inout_s_hint) {
  if (n_nodes < 1) throw std::invalid_argument("reference_window: n_nodes must be >= 1");
  const PathProjection proj =
      project_to_path(track, state.x_pos, state.y_pos,
                      inout_s_hint != nullptr ? inout_s_hint : nullptr);
  if (proj.distance > kProjectionLimit) {
    std::ostringstream msg;
    msg << "reference_window: state is " << proj.distance
        << " m from the path (limit " << kProjectionLimit << ")";
    throw std::runtime_error(msg.str());
  }
  if (inout_s_hint != nullptr) *inout_s_hint = proj.s;

  ReferenceWindow window;
  window.nodes.resize(n_nodes, 4);
  double s_k = proj.s;
  for (int k = 0; k < n_nodes; ++k) {
    const TrackPoint p = track_point(track, s_k);
    window.nodes(k, 0) = p.x;
    window.nodes(k, 1) = p.y;
    window.nodes(k, 2) = p.psi;
    window.nodes(k, 3) = p.v;
    s_k += p.v * t_s;
  }
  // Shift the heading column onto the branch nearest the state heading.
  const double offset =
      2.0 * M_PI * std::round((state.psi - window.nodes(0, 2)) / (2.0 * M_PI));
  window.nodes.col(2).array() += offset;
  return window;
}

}  // namespace snmpc
