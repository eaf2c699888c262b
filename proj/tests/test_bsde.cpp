#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include <nlohmann/json.hpp>

#include "homlab/bsde.hpp"
#include "homlab/error.hpp"
#include "homlab/harness.hpp"
#include "homlab/homogenized.hpp"
#include "homlab/pde.hpp"

using namespace homlab;
using nlohmann::json;

namespace {

json interval_problem(const std::string& sigma, const std::string& f, const std::string& g, const std::string& l,
                      const std::string& h) {
    return json{{"dim", 1},
                {"sigma", {{sigma}}},
                {"b", {"0"}},
                {"c", {"0"}},
                {"domain", {{"shape", "interval"}, {"bounds", {0.0, 1.0}}}},
                {"f", f},
                {"g", g},
                {"l", l},
                {"h", h},
                {"mu", 0.0},
                {"beta", -1.0},
                {"growth_C", 1.0},
                {"growth_p", 1.0},
                {"lambda_min", 0.01}};
}

PathBundle bundle_for(const TwoScaleProblem& p, double x0, double t, double dt, std::size_t record_steps,
                      std::size_t paths, std::uint64_t seed) {
    SimulationSpec s;
    s.x0 = Vec::Constant(1, x0);
    s.horizon = t;
    s.dt = dt;
    s.record_steps = record_steps;
    s.paths = paths;
    s.seed = seed;
    return simulate_two_scale(p, 1.0, s);
}

SolverOptions poly(int degree, bool psi) {
    SolverOptions o;
    o.basis.degree = degree;
    o.basis.with_psi = psi;
    return o;
}

// Sub-bundle of paths [first, first + count).
PathBundle slice(const PathBundle& b, std::size_t first, std::size_t count) {
    PathBundle s = b;
    s.paths = count;
    s.X.clear();
    s.dW.clear();
    s.dM.clear();
    s.dG.clear();
    s.sup_norm.assign(b.sup_norm.begin() + static_cast<std::ptrdiff_t>(first),
                      b.sup_norm.begin() + static_cast<std::ptrdiff_t>(first + count));
    for (std::size_t k = 0; k <= b.steps; ++k)
        for (std::size_t p = first; p < first + count; ++p) s.X.push_back(b.x(k, p)[0]);
    for (std::size_t k = 0; k < b.steps; ++k)
        for (std::size_t p = first; p < first + count; ++p) {
            s.dW.push_back(b.dw(k, p)[0]);
            s.dM.push_back(b.dm(k, p)[0]);
            s.dG.push_back(b.dg(k, p));
        }
    return s;
}

}  // namespace

TEST_CASE("constant terminal value is reproduced exactly") {
    const auto p = load_problem(interval_problem("1", "0", "0", "5", "-1e9"));
    const PathBundle b = bundle_for(p, 0.3, 1.0, 1e-3, 20, 2000, 1);
    const BsdeSolution s = solve_penalized(b, p, 10.0, poly(2, false));
    CHECK(std::fabs(s.value - 5.0) <= 1e-12);
    for (double k : s.K) CHECK(k == 0.0);
    const auto [v, se] = value_at_origin(s);
    CHECK(v == s.value);
    CHECK(se == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("linear driver gives the exponential ODE value") {
    const auto p = load_problem(interval_problem("1", "-u", "0", "1", "-1e9"));
    const PathBundle b = bundle_for(p, 0.5, 1.0, 1e-3, 0, 500, 2);
    const BsdeSolution s = solve_penalized(b, p, 0.0, poly(2, false));
    CHECK(std::fabs(s.value - std::exp(-1.0)) <= 5e-3);
}

TEST_CASE("boundary driver against the pathwise exponential of local time") {
    const auto p = load_problem(interval_problem("1", "0", "-u", "1", "-1e9"));
    const PathBundle b = bundle_for(p, 0.2, 0.2, 1e-4, 0, 10000, 3);
    SolverOptions opt = poly(4, false);
    opt.keep_paths = false;
    const BsdeSolution s = solve_penalized(b, p, 0.0, opt);
    std::vector<double> oracle(b.paths);
    for (std::size_t q = 0; q < b.paths; ++q) oracle[q] = std::exp(-b.total_g(q));
    const SampleStats st = sample_stats(oracle);
    CHECK(std::fabs(s.value - st.mean) <= 3.0 * st.std_error);
}

TEST_CASE("standard error of a linear problem is the cash-flow standard error") {
    const auto p = load_problem(interval_problem("1", "0", "0", "cos(pi*x1)", "-1e9"));
    const PathBundle b = bundle_for(p, 0.3, 0.05, 1e-3, 10, 20000, 13);
    const BsdeSolution s = solve_reflected(b, p, poly(3, false));
    std::vector<double> terminal(b.paths);
    for (std::size_t q = 0; q < b.paths; ++q) terminal[q] = std::cos(M_PI * b.x(b.steps, q)[0]);
    const SampleStats st = sample_stats(terminal);
    CHECK(s.value == doctest::Approx(st.mean).epsilon(1e-12));
    CHECK(s.std_error == doctest::Approx(st.std_error).epsilon(1e-9));
}

TEST_CASE("zero data gives zero solution") {
    const auto p = load_problem(interval_problem("1", "0", "0", "0", "0"));
    const PathBundle b = bundle_for(p, 0.5, 0.2, 1e-3, 10, 500, 4);
    const BsdeSolution s = solve_reflected(b, p, poly(2, false));
    for (double y : s.Y) CHECK(y == 0.0);
    for (double k : s.K) CHECK(k == 0.0);
}

TEST_CASE("inactive obstacle: reflected equals unpenalized bitwise") {
    const auto p = load_problem(interval_problem("1", "-u", "-u", "x1*(1-x1) + 0.1", "-1e9"));
    const PathBundle b = bundle_for(p, 0.4, 0.2, 1e-3, 20, 3000, 5);
    const BsdeSolution r = solve_reflected(b, p, poly(3, false));
    const BsdeSolution z = solve_penalized(b, p, 0.0, poly(3, false));
    REQUIRE(r.Y.size() == z.Y.size());
    CHECK(std::memcmp(r.Y.data(), z.Y.data(), r.Y.size() * sizeof(double)) == 0);
    CHECK(r.value == z.value);

    const PenalizationSweep sw = penalization_sweep(b, p, {1, 4, 16, 64, 256}, poly(3, false));
    for (const auto& s : sw.penalized) CHECK(s.value == r.value);
    CHECK(sw.gap == 0.0);
}

TEST_CASE("reflected obstacle problem against finite differences") {
    const auto p = load_problem_file(std::string(HOMLAB_CONFIG_DIR) + "/obstacle1d.json");
    const double t = 0.5, x0 = 0.4;
    const PathBundle b = bundle_for(p, x0, t, 1e-3, 50, 40000, 6);
    const SolverOptions opt = poly(4, true);
    const BsdeSolution r = solve_reflected(b, p, opt);

    // reflected scheme invariants
    CHECK(r.diagnostics.max_obstacle_violation == 0.0);
    CHECK(r.diagnostics.complementarity == 0.0);
    const CompiledProblem cp(p);
    for (std::size_t k = 0; k <= b.steps; ++k)
        for (std::size_t q = 0; q < b.paths; q += 97) {
            double slots[4] = {b.x(k, q)[0], 0.0, b.time(k), 0.0};
            CHECK(r.y(k, q) >= cp.h(slots));
            if (k > 0) CHECK(r.k_at(k, q) >= r.k_at(k - 1, q));
        }

    const auto coeffs = HomogenizedCoefficients::constant_1d(0.09, 0.0, 1.0, -1.0, p.domain);
    FdGrid grid;
    grid.M = 400;
    grid.dtau = 1e-4;
    grid.horizon = t;
    const FdSolution fd = solve_obstacle_pde_1d(homogenized_fd_data(p, coeffs, t), grid);
    CHECK(std::fabs(r.value - fd.at(x0)) <= std::max(3.0 * r.std_error, 0.01));

    const PenalizationSweep sw = penalization_sweep(b, p, {1, 4, 16, 64, 256}, opt);
    CHECK(sw.monotone);
    CHECK(sw.max_decrease <= 1e-12);
    for (std::size_t i = 1; i < sw.penalized.size(); ++i)
        CHECK(sw.penalized[i].value >= sw.penalized[i - 1].value - 1e-12);
    CHECK(sw.penalized.front().value < sw.penalized.back().value);
    CHECK(sw.gap <= 0.005);
    // penalized complementarity and violation shrink with n
    CHECK(sw.penalized.back().diagnostics.max_obstacle_violation <=
          sw.penalized.front().diagnostics.max_obstacle_violation);
}

TEST_CASE("split-sample and CLT scaling of the standard error") {
    const auto p = builtin_problem("gibbs1d");
    SimulationSpec s;
    s.x0 = Vec::Constant(1, 0.1);
    s.horizon = 0.1;
    s.dt = 0.002 * 0.25;
    s.record_steps = 50;
    s.paths = 16000;
    s.seed = 7;
    const PathBundle b = simulate_two_scale(p, 0.5, s);
    const SolverOptions opt = poly(4, true);
    const BsdeSolution a = solve_reflected(slice(b, 0, 8000), p, opt);
    const BsdeSolution c = solve_reflected(slice(b, 8000, 8000), p, opt);
    CHECK(std::fabs(a.value - c.value) <= 3.0 * std::hypot(a.std_error, c.std_error));

    const BsdeSolution full = solve_reflected(b, p, opt);
    const double ratio = full.std_error / a.std_error;
    CHECK(ratio == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(0.2));
}

TEST_CASE("linearity in the terminal value") {
    const auto p1 = load_problem(interval_problem("1", "-u", "-u", "x1*(1-x1) + 0.1", "-1e9"));
    const auto p3 = load_problem(interval_problem("1", "-u", "-u", "3*(x1*(1-x1) + 0.1)", "-1e9"));
    const PathBundle b = bundle_for(p1, 0.3, 0.2, 1e-3, 20, 4000, 8);
    const double v1 = solve_penalized(b, p1, 0.0, poly(3, true)).value;
    const double v3 = solve_penalized(b, p3, 0.0, poly(3, true)).value;
    CHECK(std::fabs(v3 - 3.0 * v1) <= 1e-10);
}

TEST_CASE("local basis agrees with the polynomial basis") {
    const auto p = builtin_problem("gibbs1d");
    SimulationSpec s;
    s.x0 = Vec::Constant(1, 0.1);
    s.horizon = 0.1;
    s.dt = 0.002 * 0.25;
    s.record_steps = 50;
    s.paths = 20000;
    s.seed = 12;
    const PathBundle b = simulate_two_scale(p, 0.5, s);
    SolverOptions local;
    local.basis.kind = BasisKind::Local;
    local.basis.bins = 32;
    const BsdeSolution a = solve_reflected(b, p, poly(4, true));
    const BsdeSolution c = solve_reflected(b, p, local);
    CHECK(std::fabs(a.value - c.value) <= 0.01);
}

TEST_CASE("obstacle above the terminal value is rejected") {
    const auto p = load_problem(interval_problem("1", "0", "0", "0", "1"));
    const PathBundle b = bundle_for(p, 0.5, 0.1, 1e-3, 10, 100, 9);
    CHECK_THROWS_AS(solve_reflected(b, p, poly(2, false)), Error);
}

TEST_CASE("solution JSON") {
    const auto p = load_problem(interval_problem("1", "0", "0", "5", "-1e9"));
    const PathBundle b = bundle_for(p, 0.3, 0.1, 1e-3, 10, 200, 10);
    const BsdeSolution s = solve_reflected(b, p, poly(2, false));
    const json j = to_json(s, true);
    CHECK(j.at("value").get<double>() == doctest::Approx(5.0));
    CHECK(j.at("scheme") == "reflected");
    CHECK(j.contains("diagnostics"));
}
