// Serial reference kernels against their OpenMP versions.

#include <benchmark/benchmark.h>

#include "bdlab/experiment.hpp"
#include "bdlab/parallel.hpp"

using namespace bdlab;

namespace {

const ModelSpec kLattice{ModelKind::lattice, 1, "nn", "fixed:0.25"};
const ModelSpec kContinuum{ModelKind::continuum, 1, "nn", "fixed:0.25"};

void BM_heights_serial(benchmark::State& state, const ModelSpec& model) {
  const double t = static_cast<double>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        origin_heights_serial(model, t, 7, 0, 64, 1e-9, OriginQuantity::last_arrival));
  }
  state.SetItemsProcessed(state.iterations() * 64);
}

void BM_heights_parallel(benchmark::State& state, const ModelSpec& model) {
  const double t = static_cast<double>(state.range(0));
  const int workers = worker_count();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        origin_heights(model, t, 7, 0, 64, 1e-9, OriginQuantity::last_arrival, workers));
  }
  state.SetItemsProcessed(state.iterations() * 64);
  state.counters["workers"] = workers;
}

void BM_widths_serial(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(window_widths_serial(kLattice, 10.0, n, 7, 0, 32));
  state.SetItemsProcessed(state.iterations() * 32);
}

void BM_widths_parallel(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int workers = worker_count();
  for (auto _ : state) {
    benchmark::DoNotOptimize(window_widths(kLattice, 10.0, n, 7, 0, 32, workers));
  }
  state.SetItemsProcessed(state.iterations() * 32);
  state.counters["workers"] = workers;
}

}  // namespace

BENCHMARK_CAPTURE(BM_heights_serial, lattice, kLattice)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_heights_parallel, lattice, kLattice)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_heights_serial, continuum, kContinuum)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_heights_parallel, continuum, kContinuum)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_widths_serial)->Arg(256)->Arg(4096)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_widths_parallel)->Arg(256)->Arg(4096)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
