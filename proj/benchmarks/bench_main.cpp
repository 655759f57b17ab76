#include "nhop/divergence.hpp"
#include "nhop/ensemble.hpp"
#include "nhop/environments.hpp"
#include "nhop/mdp.hpp"

#include <benchmark/benchmark.h>

namespace {

nhop::TabularEnvironment er(std::int64_t states) {
  return nhop::build_er_env({static_cast<nhop::Index>(states), 2, 0.2, 2024});
}

void BM_MatrixPower(benchmark::State& state) {
  const auto env = er(state.range(0));
  const auto n = static_cast<unsigned>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(nhop::matrix_power_ptt(env.ptt(), n));
}
BENCHMARK(BM_MatrixPower)->Args({100, 5})->Args({500, 5})->Args({500, 12});

void BM_ValueIteration(benchmark::State& state) {
  const auto env = er(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(nhop::value_iteration(env.ptt(), env.costs(), nhop::DiscountFactor(0.95)));
}
BENCHMARK(BM_ValueIteration)->Arg(100)->Arg(500);

void BM_ComputeWeights(benchmark::State& state) {
  const auto S = static_cast<nhop::Index>(state.range(0));
  nhop::RngStream rng(7);
  std::vector<nhop::QTable> tables;
  for (int k = 0; k < 4; ++k) {
    nhop::QTable q(S, 2);
    for (nhop::Index s = 0; s < S; ++s)
      for (nhop::Index a = 0; a < 2; ++a) q(s, a) = rng.uniform01();
    tables.push_back(std::move(q));
  }
  for (auto _ : state) benchmark::DoNotOptimize(nhop::compute_weights(tables));
}
BENCHMARK(BM_ComputeWeights)->Arg(100)->Arg(1000);

// Cost per time step of a full nEQL run with a fixed step budget.
void BM_NeqlSteps(benchmark::State& state) {
  const auto env = er(state.range(0));
  nhop::SamplingConfig cfg;
  cfg.trajectory_length = 10;
  cfg.min_transition_visits = 40;
  cfg.num_environments = 4;
  cfg.orders = {1, 2, 3, 5};
  nhop::ScheduleSet sched;
  sched.c2 = nhop::default_epsilon_bases(4);
  nhop::RunOptions opt;
  opt.fixed_iterations = 10'000;
  opt.log_every = 1000;
  for (auto _ : state)
    benchmark::DoNotOptimize(nhop::run_neql(env, cfg, sched, nhop::DiscountFactor(0.95), 1, opt));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(opt.fixed_iterations));
}
BENCHMARK(BM_NeqlSteps)->Arg(30)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
