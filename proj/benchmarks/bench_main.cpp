#include <cmath>
#include <random>

#include <benchmark/benchmark.h>

#include "topotrack/field_io.hpp"
#include "topotrack/measure_net.hpp"
#include "topotrack/merge_tree.hpp"
#include "topotrack/partial_ot.hpp"
#include "topotrack/pfgw.hpp"

using namespace topotrack;

namespace {

// Sum of random Gaussian bumps; roughly `bumps` maxima.
ScalarField bumpy_field(int size, int bumps, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(0.0, size), amp(1.0, 10.0), width(1.5, 4.0);
  ScalarField f;
  f.width_px = size;
  f.height_px = size;
  f.values.assign(static_cast<std::size_t>(size) * size, 0.0);
  f.missing.assign(f.values.size(), 0);
  for (int b = 0; b < bumps; ++b) {
    const double cx = pos(rng), cy = pos(rng), a = amp(rng), w = width(rng);
    for (int r = 0; r < size; ++r) {
      for (int c = 0; c < size; ++c) {
        const double d2 = (c - cx) * (c - cx) + (r - cy) * (r - cy);
        f.values[static_cast<std::size_t>(r) * size + c] += a * std::exp(-d2 / (2 * w * w));
      }
    }
  }
  return f;
}

Eigen::VectorXd probability(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  Eigen::VectorXd p(n);
  for (int i = 0; i < n; ++i) p(i) = u(rng);
  return p / p.sum();
}

void BM_BuildMergeTree(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const auto f = bumpy_field(size, size / 4, 1);
  for (auto _ : state) benchmark::DoNotOptimize(build_merge_tree(f));
  state.SetItemsProcessed(state.iterations() * size * size);
}
BENCHMARK(BM_BuildMergeTree)->Arg(64)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_AutoSimplify(benchmark::State& state) {
  const auto f = bumpy_field(256, 200, 2);
  const auto built = build_merge_tree(f);
  for (auto _ : state) benchmark::DoNotOptimize(auto_simplify(built.tree, built.zones, 50, 5));
}
BENCHMARK(BM_AutoSimplify)->Unit(benchmark::kMillisecond);

void BM_PartialOt(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  Eigen::MatrixXd cost(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) cost(i, j) = u(rng);
  }
  const auto p1 = probability(rng, n);
  const auto p2 = probability(rng, n);
  for (auto _ : state) benchmark::DoNotOptimize(solve_partial_linear_ot(cost, p1, p2, 0.75));
}
BENCHMARK(BM_PartialOt)->Arg(10)->Arg(50)->Arg(200)->Unit(benchmark::kMicrosecond);

void BM_Pfgw(benchmark::State& state) {
  const int bumps = static_cast<int>(state.range(0));
  const auto a = to_measure_network(build_merge_tree(bumpy_field(128, bumps, 4)).tree, Spacing{1.0, 1.0});
  const auto b = to_measure_network(build_merge_tree(bumpy_field(128, bumps, 5)).tree, Spacing{1.0, 1.0});
  PfgwOptions options;
  options.alpha = 0.4;
  options.m = 0.8;
  for (auto _ : state) benchmark::DoNotOptimize(solve_pfgw(a, b, options));
  state.counters["nodes"] = static_cast<double>(a.size() + b.size());
}
BENCHMARK(BM_Pfgw)->Arg(10)->Arg(40)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
