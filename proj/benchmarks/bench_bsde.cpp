#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "homlab/bsde.hpp"
#include "homlab/harness.hpp"
#include "homlab/regression.hpp"

using namespace homlab;

namespace {

void BM_SliceRegression(benchmark::State& state) {
    const std::size_t paths = static_cast<std::size_t>(state.range(0));
    const TwoScaleProblem p = builtin_problem("gibbs1d");
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::vector<double> x(paths), y(paths), fitted(paths);
    for (std::size_t i = 0; i < paths; ++i) {
        x[i] = U(rng);
        y[i] = x[i] * (1 - x[i]) + 0.1 * U(rng);
    }
    RegressionBasis basis;
    basis.degree = 4;
    basis.with_psi = true;
    for (auto _ : state) {
        const SliceRegression r(x, paths, 1, basis, p.domain);
        r.fit(y, fitted);
        benchmark::DoNotOptimize(fitted.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(paths));
}
BENCHMARK(BM_SliceRegression)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_ReflectedSolve(benchmark::State& state) {
    const TwoScaleProblem p = builtin_problem("gibbs1d");
    SimulationSpec s;
    s.x0 = Vec::Constant(1, 0.1);
    s.dt = 1e-3;
    s.horizon = 0.05;
    s.record_steps = 50;
    s.paths = 10000;
    const PathBundle b = simulate_two_scale(p, 0.1, s);
    SolverOptions opt;
    opt.basis.degree = 4;
    opt.basis.with_psi = true;
    opt.keep_paths = false;
    for (auto _ : state) benchmark::DoNotOptimize(solve_reflected(b, p, opt).value);
}
BENCHMARK(BM_ReflectedSolve)->Unit(benchmark::kMillisecond);

}  // namespace
