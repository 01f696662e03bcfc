#include <cmath>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "qcube/cube.hpp"
#include "qcube/dmr.hpp"
#include "qcube/hellinger.hpp"
#include "qcube/kinematics.hpp"
#include "qcube/simulate.hpp"

using namespace qcube;

namespace {

std::vector<std::int64_t> pool_of(std::size_t d, std::int64_t total) {
  std::mt19937_64 gen(1);
  std::gamma_distribution<double> g(2.0, 1.0);
  std::vector<double> w(d);
  double sum = 0.0;
  for (double& x : w) sum += (x = g(gen) + 0.05);
  std::vector<std::int64_t> pool(d);
  for (std::size_t j = 0; j < d; ++j) pool[j] = std::llround(double(total) * w[j] / sum);
  return pool;
}

void BM_NullSimulation(benchmark::State& state) {
  const auto pool = pool_of(100, 11'000'000);
  const std::int64_t t = state.range(0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(simulate_null(pool, t, t, 256, 7, 1));
  }
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_NullSimulation)->Arg(3'000)->Arg(27'000)->Unit(benchmark::kMillisecond);

void BM_SplineKinematics(benchmark::State& state) {
  const auto trace = project_to_meters(gen_trace(RegimeSpec::match_play(Position::kMidfielder, Half::kFirst),
                                                 double(state.range(0)), 3));
  for (auto _ : state) {
    benchmark::DoNotOptimize(trace_kinematics(trace));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * 10);
}
BENCHMARK(BM_SplineKinematics)->Arg(2700)->Unit(benchmark::kMillisecond);

void BM_Boundaries(benchmark::State& state) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.0, 1.0), ang(-180.0, 180.0);
  KinematicSeries s;
  for (std::int64_t k = 0; k < state.range(0); ++k) {
    KinematicPoint p;
    p.v = u(gen);
    p.a = u(gen);
    p.angle = ang(gen);
    s.points.push_back(p);
  }
  const std::vector<KinematicSeries> pool{s};
  for (auto _ : state) {
    benchmark::DoNotOptimize(compute_boundaries(pool));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Boundaries)->Arg(1'000'000)->Unit(benchmark::kMillisecond);

void BM_DmrGradient(benchmark::State& state) {
  const int n = int(state.range(0));
  const BinLayout layout;
  const auto recs = synthetic_covariates(n, 27'000, 2);
  const auto spec = DesignSpec::parse("half+position+logtime");
  auto varied = recs;
  for (std::size_t i = 0; i < varied.size(); ++i) varied[i].playing_time = 20'000 + 97 * std::int64_t(i);
  const auto design = build_design(spec, varied);
  Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(layout.size(), design.p());
  beta.col(0).setConstant(-1.0);
  const auto ds = gen_cube_dataset(beta, design, varied, layout, 3);
  const DmrObjective objective(ds.counts_matrix(), design.x);
  Eigen::MatrixXd grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(objective.loglik_and_gradient(beta, grad));
  }
}
BENCHMARK(BM_DmrGradient)->Arg(396)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
