// Kernel benchmarks: OpenMP sweeps against the serial reference on the
// simulation configuration used by the experiments. Build with Release and
// run ./bench_kernels; OMP_NUM_THREADS controls the parallel side.

#include <benchmark/benchmark.h>

#include "mfvi/mmsb.hpp"
#include "mfvi/oracle.hpp"

using namespace mfvi;

namespace {

struct PgFixture {
  MmsbHyperparams hp;
  MmsbGraph graph;
  PgState state;

  explicit PgFixture(int n) {
    hp.num_nodes = n;
    hp.num_groups = 2;
    hp.alpha = {1.0, 1.0};
    hp.bmat = {{0.9, 0.3}, {0.3, 0.9}};
    auto [g, latents] = mmsb_sample(hp, 1);
    graph = std::move(g);
    state = pg_init_state(hp, graph, MmsbInit::kJitter, 1);
  }
};

struct FfFixture {
  MmsbHyperparams hp;
  MmsbGraph graph;
  FfState state;

  explicit FfFixture(int n) {
    hp.num_nodes = n;
    hp.num_groups = 2;
    hp.alpha = {1.0, 1.0};
    hp.bmat = {{0.9, 0.3}, {0.3, 0.9}};
    auto [g, latents] = mmsb_sample(hp, 1);
    graph = std::move(g);
    state = ff_init_state(hp, graph, MmsbInit::kJitter, 1);
  }
};

void BM_pg_sweep(benchmark::State& state, bool parallel) {
  PgFixture fix(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    pg_cavi_step(fix.hp, fix.graph, fix.state, parallel);
    benchmark::ClobberMemory();
  }
}

void BM_pg_elbo(benchmark::State& state, bool parallel) {
  PgFixture fix(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(pg_elbo(fix.hp, fix.graph, fix.state, parallel));
  }
}

void BM_ff_sweep(benchmark::State& state, bool parallel) {
  FfFixture fix(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    ff_cavi_step(fix.hp, fix.graph, fix.state, parallel);
    benchmark::ClobberMemory();
  }
}

void BM_enumerate(benchmark::State& state, bool parallel) {
  LdaHyperparams hp;
  hp.num_docs = 1;
  hp.num_topics = 3;
  hp.vocab_size = 4;
  hp.doc_lengths = {11};  // 3^11 = 177147 states
  hp.alpha = {0.5, 0.5, 0.5};
  hp.eta.assign(3, std::vector<double>(4, 0.25));
  auto [corpus, latents] = lda_sample(hp, 1);
  const auto inst = CollapsedInstance::make_lda(hp, corpus);
  for (auto _ : state) {
    benchmark::DoNotOptimize(enumerate_posterior(inst, parallel).log_partition);
  }
}

}  // namespace

BENCHMARK_CAPTURE(BM_pg_sweep, omp, true)->Arg(50)->Arg(100)->Arg(200)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_pg_sweep, serial, false)->Arg(50)->Arg(100)->Arg(200)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_pg_elbo, omp, true)->Arg(200)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_pg_elbo, serial, false)->Arg(200)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_ff_sweep, omp, true)->Arg(200)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_ff_sweep, serial, false)->Arg(200)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_enumerate, omp, true)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_enumerate, serial, false)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
