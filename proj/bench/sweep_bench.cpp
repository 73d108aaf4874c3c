#include <benchmark/benchmark.h>

#include "loraweb/scenario_io.hpp"
#include "loraweb/sweep.hpp"

namespace {

loraweb::sim::SweepSpec pdr_grid(std::size_t successes) {
  auto spec = loraweb::sim::load_sweep(std::string(LORAWEB_SCENARIO_DIR) + "/pdr_grid_sweep.yaml");
  spec.base.target_successes = successes;
  return spec;
}

void BM_SweepSerial(benchmark::State& state) {
  const auto spec = pdr_grid(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(loraweb::sim::run_sweep_serial(spec));
}

void BM_SweepParallel(benchmark::State& state) {
  const auto spec = pdr_grid(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(loraweb::sim::run_sweep_parallel(spec));
}

void BM_SingleScenario(benchmark::State& state) {
  auto spec = loraweb::sim::load_scenario(std::string(LORAWEB_SCENARIO_DIR) + "/fourclient_sf7bw500.yaml");
  spec.target_successes = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(loraweb::sim::run_scenario(spec).metrics);
}

}  // namespace

BENCHMARK(BM_SweepSerial)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_SweepParallel)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_SingleScenario)->Arg(50)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
