// SPDX-License-Identifier: Apache-2.0
//
// Serial reference vs OpenMP kernels on the shapes the tuner sees.
// Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <random>

#include "vcal/kernels.hpp"
#include "vcal/tuner.hpp"

using namespace vcal::kernels;

namespace {

ScoreMatrix make_scores(std::size_t rows, std::size_t cols) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal(0.0, 2.0);
  std::uniform_int_distribution<std::size_t> pick(0, cols - 1);
  ScoreMatrix s{rows, cols, std::vector<double>(rows * cols), std::vector<std::size_t>(rows)};
  for (auto& v : s.values) v = normal(rng);
  for (auto& g : s.gold) g = pick(rng);
  return s;
}

template <bool Parallel>
void BM_ObjectiveGrid(benchmark::State& state) {
  const auto scores = make_scores(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  const auto taus = vcal::tuner::search_grid({});
  for (auto _ : state) {
    auto v = Parallel ? objective_grid_parallel(scores, taus, Objective::NLL, 10)
                      : objective_grid_serial(scores, taus, Objective::NLL, 10);
    benchmark::DoNotOptimize(v.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(taus.size()) * state.range(0));
}

template <bool Parallel>
void BM_ScaleAndNll(benchmark::State& state) {
  const auto scores = make_scores(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  std::vector<double> probs(scores.values.size());
  for (auto _ : state) {
    if constexpr (Parallel) {
      scale_rows_parallel(scores, 1.7, probs);
      benchmark::DoNotOptimize(mean_nll_parallel(probs, scores.cols, scores.gold));
    } else {
      scale_rows_serial(scores, 1.7, probs);
      benchmark::DoNotOptimize(mean_nll_serial(probs, scores.cols, scores.gold));
    }
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_ObjectiveGrid<false>)->Args({5000, 2})->Args({2000, 6})->Args({2000, 60})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ObjectiveGrid<true>)->Args({5000, 2})->Args({2000, 6})->Args({2000, 60})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ScaleAndNll<false>)->Args({100000, 6})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ScaleAndNll<true>)->Args({100000, 6})->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
