#include "ebsim/analysis.hpp"
#include "ebsim/model.hpp"
#include "ebsim/oracle.hpp"
#include "ebsim/queueing.hpp"
#include "ebsim/sim.hpp"

#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

using namespace ebsim;

static void BM_ResolveSlot(benchmark::State& state) {
    const SystemState s(std::vector<std::uint32_t>{2, 4, 6, 8});
    const std::vector<int> tx{1, 3};
    for (auto _ : state) {
        auto out = resolve_slot(s, tx);
        benchmark::DoNotOptimize(out);
    }
}
BENCHMARK(BM_ResolveSlot);

static void BM_SaturatedSlotLoop(benchmark::State& state) {
    sim::SimConfig cfg;
    cfg.n = static_cast<int>(state.range(0));
    cfg.law = BackoffLaw::exponential(2.0, 1.0);
    cfg.horizon = 100000;
    cfg.histogram_buckets = 0;
    cfg.return_times_cap = 0;
    for (auto _ : state) {
        auto stats = sim::run_saturated(cfg);
        benchmark::DoNotOptimize(stats.successes);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cfg.horizon));
}
BENCHMARK(BM_SaturatedSlotLoop)->Arg(2)->Arg(5)->Arg(10);

static void BM_QueuedSlotLoop(benchmark::State& state) {
    sim::SimConfig cfg;
    cfg.n = 3;
    cfg.law = BackoffLaw::exponential(2.0, 1.5);
    cfg.mode = sim::SimMode::Queued;
    cfg.lambda = 0.1;
    cfg.horizon = 100000;
    for (auto _ : state) {
        auto stats = sim::run_queued(cfg);
        benchmark::DoNotOptimize(stats.departures);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cfg.horizon));
}
BENCHMARK(BM_QueuedSlotLoop);

static void BM_OracleBuildSolve(benchmark::State& state) {
    const auto law = BackoffLaw::exponential(2.0, 2.0);
    const auto cap = static_cast<std::uint32_t>(state.range(0));
    for (auto _ : state) {
        auto chain = oracle::build_truncated_chain(2, cap, law);
        auto sol = oracle::exact_stationary(chain);
        benchmark::DoNotOptimize(sol.pi.data());
    }
}
BENCHMARK(BM_OracleBuildSolve)->Arg(20)->Arg(40);

static void BM_ComputeZeta(benchmark::State& state) {
    const auto service = queueing::ServiceDist::geometric(2.0);
    for (auto _ : state) {
        auto zeta = queueing::compute_zeta(service, 0.4);
        benchmark::DoNotOptimize(zeta.data());
    }
}
BENCHMARK(BM_ComputeZeta);

static void BM_BdStationary(benchmark::State& state) {
    const auto spec = analysis::BirthDeathSpec::make(2.0, 1.0, 3, 10);
    for (auto _ : state) {
        auto dist = analysis::bd_stationary(spec, spec.delta_star + 60);
        benchmark::DoNotOptimize(dist.pi.data());
    }
}
BENCHMARK(BM_BdStationary);

static void BM_AuxChain(benchmark::State& state) {
    const auto spec = analysis::BirthDeathSpec::make(2.0, 1.0, 3, 10);
    for (auto _ : state) {
        auto res = analysis::simulate_aux_chain(spec, 100000, 1, 0);
        benchmark::DoNotOptimize(res.n2_gt1_steps);
    }
    state.SetItemsProcessed(state.iterations() * 100000);
}
BENCHMARK(BM_AuxChain);

BENCHMARK_MAIN();
