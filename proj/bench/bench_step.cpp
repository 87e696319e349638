// OpenMP kernels against their serial references.
//
//   dimix_bench [--benchmark_filter=...]
//
// Thread count follows OMP_NUM_THREADS.

#include "dimix/config.hpp"
#include "dimix/engine.hpp"

#include <benchmark/benchmark.h>

using namespace dimix;

namespace {

RunConfig step_config(Index n, Index d)
{
  RunConfig c;
  c.loss = {LossKind::linear_regression, 50 * n, d, 0.0, 10.0, 0.1, 1};
  c.topology.kind = TopologyKind::erdos_renyi;
  c.topology.n = n;
  c.topology.r_mode = "random";
  c.topology.r_seed = 1;
  c.topology.seed = 1;
  c.channel.kind = ChannelKind::quantizer;
  c.channel.s = 6;
  c.channel.norm_cap = 100.0;
  c.schedule = {0.05, 0.2, 0.8, 0.5, 10.0};
  return c;
}

template <StateMatrix (*Step)(const StateMatrix&, const Problem&, std::uint64_t, StepTrace*)>
void bm_step(benchmark::State& state)
{
  const auto n = static_cast<Index>(state.range(0));
  const Index d = 50;
  const Problem p = build_problem(step_config(n, d));
  StateMatrix x{RowMatrix::Constant(n, d, 0.1), 1};
  for (auto _ : state) {
    StateMatrix next = Step(x, p, 3, nullptr);
    benchmark::DoNotOptimize(next.x.data());
    x.x.swap(next.x);
    x.t = next.t <= 1000 ? next.t : 1;
  }
  state.SetItemsProcessed(state.iterations() * n);
}

template <std::vector<RunResult> (*Many)(const Problem&, const RunConfig&)>
void bm_seeds(benchmark::State& state)
{
  RunConfig c = rate_study_base(TopologyKind::gossip, 1.0 / 6.0, 0.5);
  c.T = 2000;
  c.seeds = static_cast<int>(state.range(0));
  const Problem p = build_problem(c);
  for (auto _ : state) {
    auto runs = Many(p, c);
    benchmark::DoNotOptimize(runs.data());
  }
  state.SetItemsProcessed(state.iterations() * c.seeds * c.T);
}

} // namespace

BENCHMARK(bm_step<dimix_step_serial>)->Name("step/serial")->Arg(20)->Arg(80)->Arg(320)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_step<dimix_step>)->Name("step/openmp")->Arg(20)->Arg(80)->Arg(320)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_seeds<run_many_serial>)->Name("seeds/serial")->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_seeds<run_many>)->Name("seeds/openmp")->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
