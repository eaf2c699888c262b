#include <benchmark/benchmark.h>

#include <array>

#include "homlab/expr.hpp"

using namespace homlab::expr;

namespace {

constexpr const char* kSource = "2*pi*sin(2*pi*y1) + x1*(1-x1) - 0.05*t + max(u, 0)";

void BM_TreeEval(benchmark::State& state) {
    const Expr e = parse_expression(kSource, 1);
    Environment env{{"x1", 0.3}, {"y1", 0.7}, {"t", 0.1}, {"u", 0.2}};
    for (auto _ : state) {
        env["y1"] += 1e-9;
        benchmark::DoNotOptimize(eval(e, env));
    }
}
BENCHMARK(BM_TreeEval);

void BM_ProgramEval(benchmark::State& state) {
    const SlotLayout layout{1};
    const Program p(parse_expression(kSource, 1), layout);
    std::array<double, 4> slots{0.3, 0.7, 0.1, 0.2};
    for (auto _ : state) {
        slots[1] += 1e-9;
        benchmark::DoNotOptimize(p(slots));
    }
}
BENCHMARK(BM_ProgramEval);

void BM_Parse(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(parse_expression(kSource, 1));
}
BENCHMARK(BM_Parse);

}  // namespace
