#include "p2pm/baselines.hpp"
#include "p2pm/runtime.hpp"
#include "p2pm/scenario.hpp"

#include <benchmark/benchmark.h>

using namespace p2pm;

namespace {

Scenario feeder(int prosumers) {
    ScenarioConfig c;
    c.seed = 1;
    if (prosumers != 14) {
        c.network = "radial";
        c.radial_prosumers = prosumers;
    }
    return generate_scenario(c);
}

// First slot after noon with a live market.
int busy_slot(const Scenario& sc) {
    for (int t = 12; t < sc.horizon(); ++t)
        if (classify_roles(sc.slots[t]).active()) return t;
    return 12;
}

SlotProblem busy_problem(const Scenario& sc) {
    const auto gaps = minimize_gaps(sc.ess, GapSearch{});
    const int t = busy_slot(sc);
    return with_policies(slot_problem(sc, t, sc.soc0), Algorithm::ProposedFramework, gaps, t);
}

void BM_SolveSlot(benchmark::State& state) {
    const Scenario sc = feeder(static_cast<int>(state.range(0)));
    const SlotProblem sp = busy_problem(sc);
    int iters = 0;
    for (auto _ : state) {
        auto sol = solve_slot(sp, AdmmConfig{});
        iters = sol.record.iterations;
        benchmark::DoNotOptimize(sol.objective);
    }
    state.counters["iterations"] = iters;
}
BENCHMARK(BM_SolveSlot)->Arg(14)->Arg(32)->Arg(68)->Unit(benchmark::kMillisecond);

void BM_SlotAgents(benchmark::State& state) {
    const Scenario sc = feeder(static_cast<int>(state.range(0)));
    const SlotProblem sp = busy_problem(sc);
    for (auto _ : state) {
        MessageBus bus(sp.size());
        auto sol = run_slot_agents(sp, AdmmConfig{}, nullptr, bus);
        benchmark::DoNotOptimize(sol.objective);
    }
}
BENCHMARK(BM_SlotAgents)->Arg(14)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_Centralized(benchmark::State& state) {
    const Scenario sc = feeder(static_cast<int>(state.range(0)));
    const SlotProblem sp = busy_problem(sc);
    for (auto _ : state) {
        auto ref = solve_centralized_reference(sp);
        benchmark::DoNotOptimize(ref.objective);
    }
}
BENCHMARK(BM_Centralized)->Arg(14)->Arg(32)->Arg(68)->Unit(benchmark::kMillisecond);

void BM_SolveLocal(benchmark::State& state) {
    const Scenario sc = feeder(14);
    const SlotProblem sp = busy_problem(sc);
    const DualState d = DualState::zeros(sp.size());
    int i = 0;
    while (i < sp.size() && sp.registry.partners[i].empty()) ++i;
    const LocalProblem lp = make_local_problem(i, sp, d, 0.0, 12.0);
    for (auto _ : state) benchmark::DoNotOptimize(solve_local(lp).p);
}
BENCHMARK(BM_SolveLocal);

void BM_MinimizeGap(benchmark::State& state) {
    const Scenario sc = feeder(14);
    for (auto _ : state) benchmark::DoNotOptimize(minimize_gap(sc.ess[0], GapSearch{}).O_star);
}
BENCHMARK(BM_MinimizeGap);

}  // namespace

BENCHMARK_MAIN();
