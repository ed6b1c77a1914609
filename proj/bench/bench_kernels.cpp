// Serial reference vs OpenMP kernels: the batched loss/gradient pass and the
// randomized bound sweep.

#include <benchmark/benchmark.h>

#include "trefree/bound_sweep.hpp"
#include "trefree/gradcheck.hpp"
#include "trefree/nn.hpp"
#include "trefree/objectives.hpp"

using namespace trefree;

namespace {

void loss_pass(benchmark::State& state, objectives::Execution execution) {
  const int batch = static_cast<int>(state.range(0));
  Rng rng = make_rng(0, 1);
  const nn::PolicyNet net = nn::PolicyNet::initialized({4, 2, 64}, rng);
  const objectives::Minibatch mb = objectives::random_minibatch(net, rng, batch, 0.1);
  objectives::LossSpec spec = objectives::loss_spec_for(objectives::ObjectiveSpec{});
  for (auto _ : state) {
    auto ev = objectives::evaluate_loss(net, mb, spec, execution);
    benchmark::DoNotOptimize(ev.loss);
  }
  state.SetItemsProcessed(state.iterations() * batch);
}

void BM_LossSerial(benchmark::State& s) { loss_pass(s, objectives::Execution::kSerial); }
void BM_LossParallel(benchmark::State& s) { loss_pass(s, objectives::Execution::kParallel); }

void sweep(benchmark::State& state, tabular::Execution execution) {
  tabular::SweepConfig c;
  c.count = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto s = tabular::run_bound_sweep(c, execution);
    benchmark::DoNotOptimize(s.instances);
  }
  state.SetItemsProcessed(state.iterations() * c.count);
}

void BM_SweepSerial(benchmark::State& s) { sweep(s, tabular::Execution::kSerial); }
void BM_SweepParallel(benchmark::State& s) { sweep(s, tabular::Execution::kParallel); }

}  // namespace

BENCHMARK(BM_LossSerial)->Arg(64)->Arg(2048)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_LossParallel)->Arg(64)->Arg(2048)->Unit(benchmark::kMicrosecond)->UseRealTime();
BENCHMARK(BM_SweepSerial)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SweepParallel)->Arg(1000)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
