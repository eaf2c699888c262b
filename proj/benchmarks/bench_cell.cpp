#include <benchmark/benchmark.h>

#include "homlab/cell.hpp"
#include "homlab/harness.hpp"

using namespace homlab;

namespace {

void BM_InvariantDensity(benchmark::State& state) {
    const CompiledProblem cp(builtin_problem("gibbs1d"));
    const TorusGrid grid(1, static_cast<int>(state.range(0)));
    const Vec x = Vec::Constant(1, 0.5);
    for (auto _ : state) benchmark::DoNotOptimize(invariant_density(frozen_generator(cp, x, grid), grid).residual);
}
BENCHMARK(BM_InvariantDensity)->Arg(128)->Arg(512)->Arg(2048)->Unit(benchmark::kMicrosecond);

void BM_SolveCell(benchmark::State& state) {
    const TwoScaleProblem p = builtin_problem("gibbs1d");
    const Vec x = Vec::Constant(1, 0.5);
    CellOptions opt;
    opt.N = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(solve_cell(p, x, opt).A0_bar(0, 0));
}
BENCHMARK(BM_SolveCell)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);

}  // namespace
