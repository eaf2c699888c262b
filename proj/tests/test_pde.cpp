#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <nlohmann/json.hpp>

#include "homlab/bsde.hpp"
#include "homlab/error.hpp"
#include "homlab/homogenized.hpp"
#include "homlab/pde.hpp"

using namespace homlab;
using nlohmann::json;
constexpr double kPi = std::numbers::pi;

namespace {

FdData heat_data(double a, std::function<double(double)> l, std::function<double(double, double)> h) {
    FdData d;
    d.a = [a](double) { return a; };
    d.c = [](double) { return 0.0; };
    d.gamma = [](double x) { return x < 0.5 ? 1.0 : -1.0; };
    d.f = [](double, double) { return 0.0; };
    d.g = [](double, double) { return 0.0; };
    d.l = std::move(l);
    d.h = std::move(h);
    return d;
}

double no_obstacle(double, double) { return -std::numeric_limits<double>::infinity(); }
double cos_pi(double x) { return std::cos(kPi * x); }

FdGrid grid_of(int M, double dtau, double horizon) {
    FdGrid g;
    g.M = M;
    g.dtau = dtau;
    g.horizon = horizon;
    return g;
}

// Error against the implicit-Euler-in-time exact solution, isolating the
// spatial discretization.
double spatial_error(int M) {
    const double dtau = 1e-4, t = 0.1;
    const FdSolution s = solve_obstacle_pde_1d(heat_data(1.0, cos_pi, no_obstacle), grid_of(M, dtau, t));
    const double decay = std::pow(1.0 + kPi * kPi * dtau, -static_cast<double>(s.time_steps));
    double err = 0.0;
    for (std::size_t i = 0; i < s.x.size(); ++i) err = std::max(err, std::fabs(s.u[i] - decay * cos_pi(s.x[i])));
    return err;
}

json heat_problem() {
    return json{{"dim", 1},
                {"sigma", {{"sqrt(2)"}}},
                {"b", {"0"}},
                {"c", {"0"}},
                {"domain", {{"shape", "interval"}, {"bounds", {0.0, 1.0}}}},
                {"f", "0"},
                {"g", "0"},
                {"l", "cos(pi*x1)"},
                {"h", "-1e9"},
                {"mu", 0.0},
                {"beta", -1.0},
                {"growth_C", 1.0},
                {"growth_p", 1.0},
                {"lambda_min", 1.0}};
}

}  // namespace

TEST_CASE("heat equation closed form") {
    const FdSolution s = solve_obstacle_pde_1d(heat_data(1.0, cos_pi, no_obstacle), grid_of(200, 1e-4, 0.1));
    const double decay = std::exp(-0.1 * kPi * kPi);
    CHECK(decay == doctest::Approx(0.372708).epsilon(1e-5));
    double err = 0.0;
    for (std::size_t i = 0; i < s.x.size(); ++i) err = std::max(err, std::fabs(s.u[i] - decay * cos_pi(s.x[i])));
    CHECK(err <= 1e-3);
    CHECK(std::fabs(s.u.front() - 0.37273) <= 1e-3);
    CHECK(s.time_steps == 1000);
}

TEST_CASE("second-order spatial convergence") {
    const double ratio = spatial_error(100) / spatial_error(200);
    CHECK(ratio >= 3.5);
    CHECK(ratio <= 4.5);
}

TEST_CASE("constant data stays constant") {
    const FdSolution s = solve_obstacle_pde_1d(
        heat_data(0.7, [](double) { return 2.5; }, [](double, double x) { return 2.5 - x; }), grid_of(64, 1e-3, 0.3));
    for (double u : s.u) CHECK(std::fabs(u - 2.5) <= 1e-12);
}

TEST_CASE("zero obstacle: complementarity and positivity") {
    auto zero = [](double, double) { return 0.0; };
    std::vector<FdSolution> sols;
    for (int M : {100, 200, 400}) {
        sols.push_back(solve_obstacle_pde_1d(heat_data(1.0, cos_pi, zero), grid_of(M, 1e-4, 0.1)));
        const FdSolution& s = sols.back();
        for (double u : s.u) CHECK(u >= -1e-10);
        CHECK(s.max_complementarity < 1e-8);
        CHECK(s.min_margin >= -1e-10);
    }
    // the contact set is nonempty early on
    const FdSolution early = solve_obstacle_pde_1d(heat_data(1.0, cos_pi, zero), grid_of(100, 1e-4, 1e-3));
    CHECK(std::count(early.active.begin(), early.active.end(), true) > 10);
    CHECK(early.max_complementarity < 1e-8);

    // self-convergence at the common nodes
    double d1 = 0.0, d2 = 0.0;
    for (int i = 0; i <= 100; ++i) {
        d1 = std::max(d1, std::fabs(sols[0].u[i] - sols[1].u[2 * i]));
        d2 = std::max(d2, std::fabs(sols[1].u[2 * i] - sols[2].u[4 * i]));
    }
    CHECK(d1 / d2 >= 3.5);
    CHECK(d1 / d2 <= 4.5);
}

TEST_CASE("maximum principle and symmetry") {
    auto l = [](double x) { return std::cos(2 * kPi * x) + 0.3 * std::cos(4 * kPi * x); };
    FdOptions opt;
    opt.tolerance = 1e-14;
    const FdSolution s = solve_obstacle_pde_1d(heat_data(0.4, l, no_obstacle), grid_of(128, 1e-3, 0.05), opt);
    double lo = 1e300, hi = -1e300;
    for (int i = 0; i <= 128; ++i) {
        lo = std::min(lo, l(i / 128.0));
        hi = std::max(hi, l(i / 128.0));
    }
    for (std::size_t i = 0; i < s.u.size(); ++i) {
        CHECK(s.u[i] >= lo - 1e-12);
        CHECK(s.u[i] <= hi + 1e-12);
        CHECK(std::fabs(s.u[i] - s.u[s.u.size() - 1 - i]) <= 1e-10);
    }
}

TEST_CASE("grid validation") {
    auto d = heat_data(1.0, cos_pi, no_obstacle);
    CHECK_THROWS_AS(solve_obstacle_pde_1d(d, grid_of(8, 1e-4, 0.1)), Error);
    CHECK_THROWS_AS(solve_obstacle_pde_1d(d, grid_of(100, 0.05, 0.1)), Error);
    d.gamma = [](double) { return 1.0; };
    CHECK_THROWS_AS(solve_obstacle_pde_1d(d, grid_of(100, 1e-4, 0.1)), Error);
}

TEST_CASE("nonlinear Neumann data") {
    // u_tau = u'' on (0,1), u_x = u at 0 and -u_x = u at 1 (g = -u), l = 1:
    // mass leaks through both ends, so u decreases and stays symmetric.
    FdData d = heat_data(1.0, [](double) { return 1.0; }, no_obstacle);
    d.g = [](double, double u) { return -u; };
    FdOptions opt;
    opt.tolerance = 1e-13;
    const FdSolution s = solve_obstacle_pde_1d(d, grid_of(100, 1e-4, 0.05), opt);
    for (std::size_t i = 0; i < s.u.size(); ++i) {
        CHECK(s.u[i] < 1.0);
        CHECK(s.u[i] > 0.0);
        CHECK(std::fabs(s.u[i] - s.u[s.u.size() - 1 - i]) <= 1e-10);
    }
    CHECK(s.u.front() < s.u[50]);
}

TEST_CASE("constant problem: Monte Carlo and finite differences agree exactly") {
    json j = heat_problem();
    j["l"] = "2";
    j["h"] = "1";
    const auto p = load_problem(j);
    const auto coeffs = HomogenizedCoefficients::constant_1d(2.0, 0.0, 1.0, -1.0, p.domain);
    const Discrepancy d = compare_mc_vs_pde(p, coeffs, {2.0, 0.0}, 0.1, 0.3, grid_of(64, 1e-3, 0.1));
    CHECK(d.discrepancy <= 1e-10);
    CHECK(d.fd_truncation <= 1e-10);
    const json out = to_json(d);
    CHECK(out.contains("discrepancy"));
}

TEST_CASE("heat problem: Monte Carlo and finite differences agree") {
    const auto p = load_problem(heat_problem());
    const auto coeffs = HomogenizedCoefficients::constant_1d(2.0, 0.0, 1.0, -1.0, p.domain);
    SimulationSpec s;
    // projection Euler has an O(sqrt dt) boundary bias
    s.x0 = Vec::Constant(1, 0.3);
    s.horizon = 0.05;
    s.dt = 1e-5;
    s.record_steps = 20;
    s.paths = 40000;
    s.seed = 3;
    const PathBundle b = simulate_homogenized(coeffs, p.domain, s);
    const BsdeSolution sol = solve_reflected(b, p);
    const Discrepancy d =
        compare_mc_vs_pde(p, coeffs, value_at_origin(sol), 0.05, 0.3, grid_of(200, 1e-4, 0.05));
    CHECK(d.fd_value == doctest::Approx(std::exp(-0.05 * kPi * kPi) * cos_pi(0.3)).epsilon(1e-3));
    CHECK(d.discrepancy <= 3.0 * d.mc_stderr + 1e-3);
}
