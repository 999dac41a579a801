// Microbenchmarks for the hot paths: per-slot scheduling, scene evaluation,
// lattice lookups and the predictors. Fixtures are built once and shared.

#include <benchmark/benchmark.h>

#include <vector>

#include "l3gs/grid.hpp"
#include "l3gs/layering.hpp"
#include "l3gs/predict.hpp"
#include "l3gs/scene.hpp"
#include "l3gs/sched.hpp"
#include "l3gs/utility.hpp"

using namespace l3gs;

namespace {

const Scene& bench_scene() {
  static const Scene scene = [] {
    SyntheticSceneParams params;
    params.layer_targets = {5000, 10000, 15000, 20000};
    params.num_objects = 40;
    params.seed = 17;
    return make_synthetic_scene(params);
  }();
  return scene;
}

Viewport bench_pose() {
  Viewport vp;
  vp.position = {1.0, 1.5, 6.0};
  vp.yaw = 15.0;
  vp.pitch = -5.0;
  return vp;
}

/// MCKP instance at production scale: one group per object, one option per
/// reachable layer, megabyte-range budget at the default cell size.
KnapsackInstance bench_instance() {
  Rng rng(99);
  KnapsackInstance inst;
  inst.budget_bytes = 1'800'000;
  inst.resolution = 1024;
  for (int g = 0; g < 40; ++g) {
    KnapsackGroup grp;
    grp.object = ObjectId(g);
    std::uint64_t cost = 0;
    double value = 0.0;
    for (int l = 1; l <= 4; ++l) {
      cost += 100'000 + rng.next_below(200'000);
      value += rng.uniform(0.0, 2.0);
      grp.options.push_back({grp.object, 0, l, PickForm::layer_full, cost, value});
    }
    inst.groups.push_back(std::move(grp));
  }
  return inst;
}

void BM_KnapsackSolve(benchmark::State& state) {
  const KnapsackInstance inst = bench_instance();
  for (auto _ : state) {
    KnapsackSolution sol = solve_knapsack(inst);
    benchmark::DoNotOptimize(sol.value);
  }
}
BENCHMARK(BM_KnapsackSolve);

void BM_SceneEvaluate(benchmark::State& state) {
  const SceneEvaluator eval(bench_scene());
  const Viewport vp = bench_pose();
  std::vector<double> out;
  for (auto _ : state) {
    eval.evaluate(vp, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * std::int64_t(bench_scene().size()));
}
BENCHMARK(BM_SceneEvaluate);

void BM_SplatValue(benchmark::State& state) {
  const SceneEvaluator eval(bench_scene());
  const Viewport vp = bench_pose();
  std::uint32_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval.splat_value(i, vp));
    i = (i + 1) % std::uint32_t(bench_scene().size());
  }
}
BENCHMARK(BM_SplatValue);

void BM_GridLookup(benchmark::State& state) {
  static const UtilityGrid grid = [] {
    GridSpec spec = default_grid_spec(bench_scene());
    spec.nx = spec.ny = spec.nz = 4;
    spec.nyaw = 6;
    spec.npitch = 3;
    spec.nroll = 3;
    return precompute_grid(bench_scene(), spec, 1);
  }();
  const Viewport vp = bench_pose();
  std::vector<double> out;
  for (auto _ : state) {
    grid.lookup_layers(vp, out);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_GridLookup);

void BM_PredictViewport(benchmark::State& state) {
  const ViewportTrace trace = generate_synthetic_trace("ellipse", 10.0, 4);
  for (auto _ : state) {
    std::vector<Viewport> preds = predict_viewport(trace, 5.0);
    benchmark::DoNotOptimize(preds.data());
  }
}
BENCHMARK(BM_PredictViewport);

void BM_PredictBandwidth(benchmark::State& state) {
  BandwidthTrace bw;
  Rng rng(5);
  for (int i = 0; i < 600; ++i) bw.samples.push_back({i * 0.5, rng.uniform(4.0, 40.0)});
  for (auto _ : state) benchmark::DoNotOptimize(predict_bandwidth(bw, 150.0));
}
BENCHMARK(BM_PredictBandwidth);

void BM_Significance(benchmark::State& state) {
  SyntheticSceneParams params;
  params.layer_targets = {5000};
  params.num_objects = 8;
  params.seed = 23;
  const Scene scene = make_synthetic_scene(params);
  SignificanceConfig cfg;
  for (int i = 0; i < 6; ++i) {
    Viewport vp;
    vp.position = {2.0 * i - 5.0, 1.6, 6.0};
    cfg.viewports.push_back(vp);
  }
  for (auto _ : state) {
    std::vector<double> scores = compute_significance(scene, cfg);
    benchmark::DoNotOptimize(scores.data());
  }
}
BENCHMARK(BM_Significance);

}  // namespace
