#include <benchmark/benchmark.h>

#include "homlab/harness.hpp"
#include "homlab/homogenized.hpp"
#include "homlab/sde.hpp"

using namespace homlab;

namespace {

// throughput in path-steps per second
void BM_TwoScaleSteps(benchmark::State& state) {
    const TwoScaleProblem p = builtin_problem("gibbs1d");
    const double eps = 0.125;
    SimulationSpec s;
    s.x0 = Vec::Constant(1, 0.1);
    s.dt = 0.002 * eps * eps;
    s.horizon = 200 * s.dt;
    s.record_steps = 1;
    s.paths = 1000;
    for (auto _ : state) benchmark::DoNotOptimize(simulate_two_scale(p, eps, s).X.data());
    state.SetItemsProcessed(state.iterations() * 200 * 1000);
}
BENCHMARK(BM_TwoScaleSteps)->Unit(benchmark::kMillisecond);

void BM_HomogenizedSteps(benchmark::State& state) {
    const TwoScaleProblem p = builtin_problem("gibbs1d");
    const auto coeffs = HomogenizedCoefficients::constant_1d(1.24772, 0.0, 2.0, -2.0, p.domain);
    SimulationSpec s;
    s.x0 = Vec::Constant(1, 0.1);
    s.dt = 1e-5;
    s.horizon = 200 * s.dt;
    s.record_steps = 1;
    s.paths = 1000;
    for (auto _ : state) benchmark::DoNotOptimize(simulate_homogenized(coeffs, p.domain, s).X.data());
    state.SetItemsProcessed(state.iterations() * 200 * 1000);
}
BENCHMARK(BM_HomogenizedSteps)->Unit(benchmark::kMillisecond);

}  // namespace
