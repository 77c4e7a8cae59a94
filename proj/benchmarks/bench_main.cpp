#include <benchmark/benchmark.h>

#include "sdla/coupling.hpp"
#include "sdla/engine.hpp"
#include "sdla/harmonic.hpp"

using namespace sdla;

static void BM_StripSolverCold(benchmark::State& state) {
  int N = int(state.range(0));
  AggregateSet b({{0, 1}, {0, 2}, {1, 2}}, true);
  HarmonicPolicy pol;
  BoxRegion dom = pol.domain_for(b, N);
  for (auto _ : state) {
    StripSolver s(dom, b.sites(), 1e-10);
    benchmark::DoNotOptimize(s.solve());
  }
}
BENCHMARK(BM_StripSolverCold)->Arg(8)->Arg(16)->Arg(32)->Arg(64);

static void BM_StripSolverWarmAttach(benchmark::State& state) {
  int N = int(state.range(0));
  AggregateSet b({{0, 1}}, true);
  HarmonicPolicy pol;
  BoxRegion dom = pol.domain_for(b, N);
  StripSolver s(dom, b.sites(), 1e-10);
  s.solve();
  int x = 1;
  for (auto _ : state) {
    state.PauseTiming();
    StripSolver warm(s);
    state.ResumeTiming();
    warm.attach({x, 1});
    benchmark::DoNotOptimize(warm.solve());
  }
}
BENCHMARK(BM_StripSolverWarmAttach)->Arg(16)->Arg(32);

static void BM_EventEnumeration(benchmark::State& state) {
  EventStream stream(7, 1.0, 2.0);
  long edges = state.range(0);
  for (auto _ : state) {
    long total = 0;
    for (long i = 0; i < edges; ++i) {
      DirectedEdge e{{int(i % 100), int(1 + i % 7)}, {int(i % 100), int(2 + i % 7)}};
      total += long(stream.events_on(e, 0.0, 1.0).size());
    }
    benchmark::DoNotOptimize(total);
  }
}
BENCHMARK(BM_EventEnumeration)->Arg(1000);

static void BM_ThinnedRun(benchmark::State& state) {
  int n = int(state.range(0));
  EngineConfig cfg = coupling_config(n);
  std::vector<Site> seed = segment_seed(n);
  SeedPrototype proto = make_seed_prototype(seed, cfg);
  uint64_t s = 0;
  for (auto _ : state) {
    EventStream stream(++s, 1.0, cfg.c_dom);
    RunResult res = run_thinned(seed, 1.0, cfg, stream, {}, &proto);
    benchmark::DoNotOptimize(res.diagnostics.accepted);
  }
}
BENCHMARK(BM_ThinnedRun)->Arg(8)->Arg(32);

static void BM_CoupledRun(benchmark::State& state) {
  int n = int(state.range(0));
  EngineConfig cfg = coupling_config(n);
  CoupledPrototypes protos = make_coupled_prototypes(n, cfg);
  uint64_t s = 0;
  for (auto _ : state) {
    EventStream stream(++s, 1.0, cfg.c_dom);
    auto out = run_coupled(n, 1.0, {}, cfg, stream, &protos);
    benchmark::DoNotOptimize(out.second.count_at_1);
  }
}
BENCHMARK(BM_CoupledRun)->Arg(8)->Arg(16);

BENCHMARK_MAIN();
