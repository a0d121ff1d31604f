#include "snmpc/experiment.hpp"
#include "snmpc/sqp.hpp"

#include <benchmark/benchmark.h>

#include <memory>

namespace {

using namespace snmpc;

struct Fixture {
  OcpConfig config;
  VehicleParams params = VehicleParams::defaults();
  ReferenceTrajectory track;
  VehicleState x0;
  ReferenceWindow window;
  std::shared_ptr<const pce::CollocationSet> colloc;

  Fixture() {
    TrackSpec spec;
    spec.kind = TrackKind::oval;
    spec.straight_len = 250.0;
    spec.radius = 60.0;
    spec.v_max = 25.0;
    track = synthesize_track(spec, params);
    const TrackPoint start = track_point(track, 40.0);
    x0.x_pos = start.x;
    x0.y_pos = start.y;
    x0.psi = start.psi;
    x0.v_lon = start.v;
    window = reference_window(track, x0, config.prediction_steps() + 1, config.t_s);
    colloc = std::make_shared<pce::CollocationSet>(pce::build_collocation(
        config.sigma_w_snmpc, config.n_s, pce::generate_multi_indices(3, config.d_max)));
  }
};

void BM_RtiStepNominal(benchmark::State& state) {
  Fixture f;
  const TranscribedNlp nlp =
      build_nominal_problem(f.config, f.x0, f.window, f.params);
  SolverIterate iterate = initial_iterate(nlp);
  for (auto _ : state) {
    RtiResult res = rti_step(nlp, iterate, f.config.max_qp_iter);
    benchmark::DoNotOptimize(res.u0.jerk);
  }
}
BENCHMARK(BM_RtiStepNominal)->Unit(benchmark::kMillisecond);

void BM_RtiStepSnmpc(benchmark::State& state) {
  Fixture f;
  const TranscribedNlp nlp =
      build_snmpc_problem(f.config, f.colloc, f.x0, f.window, f.params);
  SolverIterate iterate = initial_iterate(nlp);
  for (auto _ : state) {
    RtiResult res = rti_step(nlp, iterate, f.config.max_qp_iter);
    benchmark::DoNotOptimize(res.u0.jerk);
  }
}
BENCHMARK(BM_RtiStepSnmpc)->Unit(benchmark::kMillisecond);

void BM_PceRegression(benchmark::State& state) {
  const auto indices = pce::generate_multi_indices(3, 2);
  const auto colloc =
      pce::build_collocation(Eigen::Vector3d(0.8, 0.35, 0.035), 10, indices);
  Eigen::MatrixXd values(10, 8);
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 8; ++j) values(i, j) = std::sin(0.1 * i + j);
  }
  for (auto _ : state) {
    auto moments = pce::regress_moments(colloc, values);
    benchmark::DoNotOptimize(moments.expectation(0));
  }
}
BENCHMARK(BM_PceRegression);

}  // namespace

BENCHMARK_MAIN();
