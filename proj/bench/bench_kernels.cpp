// Serial reference loops against their OpenMP counterparts. The benchmark
// argument selects the path: 0 runs serially, 1 runs in parallel.

#include <benchmark/benchmark.h>

#include <random>

#include "pinsight/attacks/samples.hpp"
#include "pinsight/attacks/windtalker.hpp"
#include "pinsight/attacks/wink.hpp"
#include "pinsight/channel_sim.hpp"
#include "pinsight/eval/top100.hpp"
#include "pinsight/features.hpp"

using namespace pinsight;

namespace {

std::vector<sim::RenderJob> make_jobs(int n) {
  std::vector<sim::RenderJob> jobs;
  std::mt19937_64 rng(21);
  for (int i = 0; i < n; ++i) {
    sim::RenderJob job;
    job.domain = DomainKey{i % 4, (i / 4) % 5, 44, 0};
    job.scene = sim::Scene::from_domain(job.domain, 17);
    for (int& d : job.plan.pin) d = static_cast<int>(rng() % 10);
    job.plan.rng_seed = rng();
    jobs.push_back(job);
  }
  return jobs;
}

const std::vector<PinTrace>& traces() {
  static const std::vector<PinTrace> t = [] {
    const auto jobs = make_jobs(8);
    return sim::render_batch(jobs, sim::HandModel::default_hand());
  }();
  return t;
}

const std::vector<features::TraceFeatures>& featurized() {
  static const auto f = features::featurize_batch(traces());
  return f;
}

std::vector<eval::DigitRow> random_grid(int n) {
  std::mt19937_64 rng(3);
  std::gamma_distribution<double> g(0.5, 1.0);
  std::vector<eval::DigitRow> grid(n);
  for (auto& row : grid) {
    double s = 0;
    for (double& p : row) s += (p = g(rng) + 1e-12);
    for (double& p : row) p /= s;
  }
  return grid;
}

void BM_rank_bruteforce(benchmark::State& state) {
  const auto grid = random_grid(6);
  const std::vector<int> truth = {1, 2, 3, 4, 5, 6};
  for (auto _ : state)
    benchmark::DoNotOptimize(eval::rank_bruteforce(grid, truth, eval::TieRule::StrictlyBetter, 100, state.range(0)));
}

void BM_wink_scores(benchmark::State& state) {
  const auto ev = attacks::wink_evidence(featurized()[0]);
  for (auto _ : state) benchmark::DoNotOptimize(attacks::wink_scores(ev, {}, state.range(0)));
}

void BM_render_batch(benchmark::State& state) {
  const auto jobs = make_jobs(8);
  const auto hand = sim::HandModel::default_hand();
  for (auto _ : state) benchmark::DoNotOptimize(sim::render_batch(jobs, hand, state.range(0)));
}

void BM_featurize_batch(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(features::featurize_batch(traces(), {}, state.range(0)));
}

void BM_windtalker_predict_trace(benchmark::State& state) {
  std::vector<attacks::Sample> train;
  for (const auto& t : featurized()) {
    auto s = attacks::make_samples(t, 20);
    train.insert(train.end(), s.begin(), s.end());
  }
  const auto bank = attacks::windtalker_fit(train);
  const auto probe = attacks::make_samples(featurized()[0], 20);
  for (auto _ : state) benchmark::DoNotOptimize(attacks::windtalker_predict_trace(probe, bank, state.range(0)));
}

}  // namespace

BENCHMARK(BM_rank_bruteforce)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_wink_scores)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_render_batch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_featurize_batch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_windtalker_predict_trace)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
