#include "snmpc/sim.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace snmpc;

namespace {

const VehicleParams kParams = VehicleParams::defaults();

ReferenceTrajectory straight_track(double length, double v) {
  const int n = static_cast<int>(length / 0.5) + 1;
  ReferenceTrajectory t;
  t.s.resize(n);
  t.x.resize(n);
  t.y.resize(n);
  t.psi.resize(n);
  t.v.resize(n);
  for (int i = 0; i < n; ++i) {
    t.s(i) = 0.5 * i;
    t.x(i) = 0.5 * i;
    t.y(i) = 0.0;
    t.psi(i) = 0.0;
    t.v(i) = v;
  }
  t.closed = false;
  return t;
}

DisturbanceModel paper_noise(std::uint64_t seed) {
  DisturbanceModel d;
  d.sigma_sim << 0.1, 0.1, 0.05, 0.8, 0.35, 0.035, 0.01;
  d.seed = seed;
  return d;
}

}  // namespace

TEST_CASE("disturbance stream") {
  const DisturbanceModel d = paper_noise(42);

  SUBCASE("pure function of (seed, step, index)") {
    const DisturbanceModel d2 = paper_noise(42);
    for (int step = 0; step < 50; ++step) {
      for (int i = 0; i < 7; ++i) {
        CHECK(d.noise(step, i) == d2.noise(step, i));
      }
    }
    const DisturbanceModel d3 = paper_noise(43);
    bool any_different = false;
    for (int step = 0; step < 10; ++step) {
      for (int i = 0; i < 7; ++i) {
        any_different = any_different || d.noise(step, i) != d3.noise(step, i);
      }
    }
    CHECK(any_different);
  }

  SUBCASE("acceleration receives no noise") {
    VehicleState x;
    x.a = 1.234;
    const VehicleState measured = d.perturb(x, 7);
    CHECK(measured.a == x.a);
  }

  SUBCASE("empirical standard deviations within 5%") {
    constexpr int kSteps = 10000;
    for (int i = 0; i < 7; ++i) {
      double sum = 0.0, sum2 = 0.0;
      for (int step = 0; step < kSteps; ++step) {
        const double v = d.noise(step, i);
        sum += v;
        sum2 += v * v;
      }
      const double mean = sum / kSteps;
      const double stddev = std::sqrt(sum2 / kSteps - mean * mean);
      CHECK(stddev == doctest::Approx(d.sigma_sim(i)).epsilon(0.05));
    }
  }

  SUBCASE("zero sigma produces exact zeros") {
    DisturbanceModel quiet;
    quiet.seed = 5;
    for (int i = 0; i < 7; ++i) CHECK(quiet.noise(123, i) == 0.0);
  }
}

TEST_CASE("moving average filter") {
  SUBCASE("window 1 passes through") {
    MovingAverageFilter f({1, 1, 1, 1, 1, 1, 1, 1});
    VehicleState x;
    x.x_pos = 3.7;
    x.v_lon = -2.0;
    const VehicleState out = f.apply(x);
    CHECK(out.x_pos == x.x_pos);
    CHECK(out.v_lon == x.v_lon);
  }

  SUBCASE("unit step reaches 1 after exactly n samples") {
    const std::array<int, 8> windows{1, 1, 4, 2, 2, 3, 4, 2};
    MovingAverageFilter f(windows);
    VehicleState ones;
    for (int i = 0; i < 8; ++i) ones.set_component(i, 1.0);
    for (int k = 1; k <= 4; ++k) {
      const VehicleState out = f.apply(ones);
      for (int i = 0; i < 8; ++i) {
        if (k >= windows[static_cast<std::size_t>(i)]) {
          CHECK(out.component(i) == 1.0);
        } else {
          CHECK(out.component(i) == 1.0);  // mean over what was seen so far
        }
      }
    }
  }

  SUBCASE("running mean before the window fills") {
    MovingAverageFilter f({1, 1, 1, 1, 1, 1, 1, 4});
    VehicleState x;
    x.a = 4.0;
    CHECK(f.apply(x).a == 4.0);
    x.a = 0.0;
    CHECK(f.apply(x).a == 2.0);  // mean of {4, 0}
    CHECK(f.apply(x).a == doctest::Approx(4.0 / 3.0));
    CHECK(f.apply(x).a == 1.0);  // window full: {4,0,0,0}
    CHECK(f.apply(x).a == 0.0);  // 4 dropped out
  }
}

TEST_CASE("lateral deviation") {
  const ReferenceTrajectory line = straight_track(100.0, 10.0);

  SUBCASE("on the path") {
    VehicleState x;
    x.x_pos = 13.0;
    CHECK(lateral_deviation(x, line) == doctest::Approx(0.0));
  }

  SUBCASE("unit offset to the left is +1") {
    VehicleState x;
    x.x_pos = 40.0;
    x.y_pos = 1.0;
    CHECK(lateral_deviation(x, line) == doctest::Approx(1.0).epsilon(1e-12));
    x.y_pos = -2.5;
    CHECK(lateral_deviation(x, line) == doctest::Approx(-2.5).epsilon(1e-12));
  }

  SUBCASE("near a sharp corner, matches a densely resampled oracle") {
    // 90 degree corner polyline
    ReferenceTrajectory corner;
    const int n = 41;
    corner.s.resize(n);
    corner.x.resize(n);
    corner.y.resize(n);
    corner.psi.resize(n);
    corner.v.resize(n);
    for (int i = 0; i < n; ++i) {
      if (i <= 20) {
        corner.x(i) = i * 0.5;
        corner.y(i) = 0.0;
        corner.psi(i) = 0.0;
      } else {
        corner.x(i) = 10.0;
        corner.y(i) = (i - 20) * 0.5;
        corner.psi(i) = M_PI / 2.0;
      }
      corner.s(i) = i * 0.5;
      corner.v(i) = 5.0;
    }
    VehicleState x;
    x.x_pos = 10.4;
    x.y_pos = 0.3;

    // brute-force min distance over 1 mm resampling
    double best = 1e30;
    for (int i = 0; i + 1 < n; ++i) {
      for (int k = 0; k <= 500; ++k) {
        const double t = k / 500.0;
        const double px = corner.x(i) + t * (corner.x(i + 1) - corner.x(i));
        const double py = corner.y(i) + t * (corner.y(i + 1) - corner.y(i));
        best = std::min(best, std::hypot(x.x_pos - px, x.y_pos - py));
      }
    }
    CHECK(std::abs(lateral_deviation(x, corner)) == doctest::Approx(best).epsilon(1e-3));
  }
}

TEST_CASE("summary metrics") {
  SimLog log;
  auto push = [&](double dev, double gg, SolveOutcome outcome, double time) {
    SimStepRecord rec;
    rec.step = static_cast<int>(log.steps.size());
    rec.lateral_dev = dev;
    rec.gg_value = gg;
    rec.outcome = outcome;
    rec.solve_time = time;
    log.steps.push_back(rec);
  };

  SUBCASE("constant series") {
    for (int i = 0; i < 8; ++i) push(0.5, 0.2, SolveOutcome::solved, 1e-3);
    const SummaryMetrics m = summarize(log);
    CHECK(m.max_abs_dev == 0.5);
    CHECK(m.median_abs_dev == 0.5);
    CHECK(m.p25_abs_dev == 0.5);
    CHECK(m.p75_abs_dev == 0.5);
    CHECK(m.gg_violation_fraction == 0.0);
    CHECK(m.solver_failures == 0);
  }

  SUBCASE("midpoint percentile convention") {
    for (double v : {0.0, 1.0, 2.0, 3.0}) push(v, 0.0, SolveOutcome::solved, 1e-3);
    const SummaryMetrics m = summarize(log);
    CHECK(m.median_abs_dev == doctest::Approx(1.5));
    CHECK(m.p25_abs_dev == doctest::Approx(0.75));
    CHECK(m.p75_abs_dev == doctest::Approx(2.25));
  }

  SUBCASE("failure and violation counting") {
    for (int i = 0; i < 10; ++i) {
      push(0.1, i < 3 ? 1.2 : 0.5,
           i == 4 ? SolveOutcome::qp_infeasible
                  : (i == 7 ? SolveOutcome::max_iterations : SolveOutcome::solved),
           1e-3);
    }
    const SummaryMetrics m = summarize(log);
    CHECK(m.gg_violation_fraction == doctest::Approx(0.3));
    CHECK(m.solver_failures == 2);
    CHECK(m.qp_infeasible_steps == 1);
  }

  SUBCASE("empty log is rejected") {
    SimLog empty;
    CHECK_THROWS_AS(summarize(empty), std::invalid_argument);
  }
}

TEST_CASE("closed loop on a straight reference") {
  OcpConfig config;
  const ReferenceTrajectory track = straight_track(400.0, 15.0);
  SimOptions options;
  options.duration = 10.0;
  DisturbanceModel quiet;  // zero noise
  quiet.seed = 1;

  for (ControllerKind kind : {ControllerKind::nominal, ControllerKind::snmpc}) {
    const SimLog log = run_closed_loop(kind, config, kParams, track, quiet, options);
    REQUIRE_FALSE(log.aborted);
    CHECK(static_cast<int>(log.steps.size()) == 125);
    double max_dev = 0.0;
    for (const auto& rec : log.steps) {
      max_dev = std::max(max_dev, std::abs(rec.lateral_dev));
    }
    CHECK(max_dev < 0.02);
  }
}

TEST_CASE("shared disturbance realization across controllers") {
  OcpConfig config;
  config.t_p = 0.8;  // smaller horizon keeps this quick
  const ReferenceTrajectory track = straight_track(300.0, 12.0);
  SimOptions options;
  options.duration = 2.0;
  const DisturbanceModel noisy = paper_noise(7);

  const SimLog a =
      run_closed_loop(ControllerKind::nominal, config, kParams, track, noisy, options);
  const SimLog b =
      run_closed_loop(ControllerKind::snmpc, config, kParams, track, noisy, options);
  REQUIRE(a.steps.size() == b.steps.size());
  // Both logs reproduce bit-exactly from the same noise stream: the
  // measurement is true + noise(seed, step, i) regardless of controller.
  for (const SimLog* log : {&a, &b}) {
    for (const auto& rec : log->steps) {
      for (int c = 0; c < 7; ++c) {
        CHECK(rec.measured.component(c) ==
              rec.true_state.component(c) + noisy.noise(rec.step, c));
      }
      CHECK(rec.measured.a == rec.true_state.a);
    }
  }
}

TEST_CASE("replay determinism") {
  OcpConfig config;
  config.t_p = 0.8;
  const ReferenceTrajectory track = straight_track(300.0, 12.0);
  SimOptions options;
  options.duration = 2.0;
  const DisturbanceModel noisy = paper_noise(11);

  const SimLog a =
      run_closed_loop(ControllerKind::snmpc, config, kParams, track, noisy, options);
  const SimLog b =
      run_closed_loop(ControllerKind::snmpc, config, kParams, track, noisy, options);
  REQUIRE(a.steps.size() == b.steps.size());
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    CHECK(a.steps[i].true_state.vec() == b.steps[i].true_state.vec());
    CHECK(a.steps[i].applied.jerk == b.steps[i].applied.jerk);
    CHECK(a.steps[i].applied.steer_rate == b.steps[i].applied.steer_rate);
    CHECK(a.steps[i].lateral_dev == b.steps[i].lateral_dev);
    CHECK(a.steps[i].qp_iterations == b.steps[i].qp_iterations);
  }
}

TEST_CASE("duration must divide into sampling periods") {
  OcpConfig config;
  const ReferenceTrajectory track = straight_track(100.0, 10.0);
  SimOptions options;
  options.duration = 1.0 + 0.03;  // not a multiple of 0.08
  DisturbanceModel quiet;
  CHECK_THROWS_AS(
      run_closed_loop(ControllerKind::nominal, config, kParams, track, quiet, options),
      std::invalid_argument);
}
