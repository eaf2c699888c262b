#include "homlab/pde.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>

#include "homlab/error.hpp"

namespace homlab {

double FdSolution::at(double xq) const {
    if (x.empty()) return 0.0;
    if (xq <= x.front()) return u.front();
    if (xq >= x.back()) return u.back();
    const double step = (x.back() - x.front()) / static_cast<double>(x.size() - 1);
    const auto i = std::min(static_cast<std::size_t>((xq - x.front()) / step), x.size() - 2);
    const double w = (xq - x[i]) / (x[i + 1] - x[i]);
    return (1.0 - w) * u[i] + w * u[i + 1];
}

namespace {

double derivative(const std::function<double(double, double)>& g, double x, double u) {
    const double h = 1e-6 * (1.0 + std::fabs(u));
    return (g(x, u + h) - g(x, u - h)) / (2.0 * h);
}

struct Tridiagonal {
    std::vector<double> lower, diag, upper, rhs;
    explicit Tridiagonal(std::size_t n) : lower(n, 0.0), diag(n, 0.0), upper(n, 0.0), rhs(n, 0.0) {}

    double residual(const std::vector<double>& u, std::size_t i) const {
        double r = diag[i] * u[i] - rhs[i];
        if (i > 0) r += lower[i] * u[i - 1];
        if (i + 1 < u.size()) r += upper[i] * u[i + 1];
        return r;
    }
};

// Projected SOR for A u = rhs, u >= h. Returns sweeps used.
std::size_t psor(const Tridiagonal& A, const std::vector<double>& h, std::vector<double>& u, const FdOptions& opt) {
    const std::size_t n = u.size();
    for (std::size_t i = 0; i < n; ++i) u[i] = std::max(u[i], h[i]);
    for (std::size_t sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
        for (std::size_t i = 0; i < n; ++i) {
            const double gs = u[i] - A.residual(u, i) / A.diag[i];
            u[i] = std::max(h[i], u[i] + opt.omega * (gs - u[i]));
        }
        double res = 0.0;
        for (std::size_t i = 0; i < n; ++i) res = std::max(res, std::fabs(std::min(u[i] - h[i], A.residual(u, i))));
        if (!std::isfinite(res)) throw Error(ErrorKind::SORDiverged, "projected SOR produced non-finite values");
        if (res < opt.tolerance) return sweep;
    }
    throw Error(ErrorKind::SORDiverged, "projected SOR did not reach the tolerance");
}

}  // namespace

FdSolution solve_obstacle_pde_1d(const FdData& data, const FdGrid& grid, const FdOptions& opt) {
    if (grid.M < 16) throw Error(ErrorKind::ConfigError, "finite-difference grid needs M >= 16");
    if (!(grid.x_hi > grid.x_lo)) throw Error(ErrorKind::ConfigError, "finite-difference interval is empty");
    if (!(grid.horizon > 0.0) || !(grid.dtau > 0.0)) throw Error(ErrorKind::ConfigError, "time grid must be positive");
    if (grid.dtau > grid.dx() * (1.0 + 1e-12)) throw Error(ErrorKind::ConfigError, "time step must not exceed dx");

    const int M = grid.M;
    const std::size_t n = static_cast<std::size_t>(M) + 1;
    const double dx = grid.dx();
    const auto steps = static_cast<std::size_t>(std::llround(std::max(1.0, std::ceil(grid.horizon / grid.dtau - 1e-9))));
    const double dtau = grid.horizon / static_cast<double>(steps);

    FdSolution sol;
    sol.x.resize(n);
    for (int i = 0; i <= M; ++i) sol.x[i] = grid.node(i);
    std::vector<double> a(n), c(n), u(n), old(n), hn(n), ustar(n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = data.a(sol.x[i]);
        c[i] = data.c(sol.x[i]);
        if (!(a[i] > 0.0)) throw Error(ErrorKind::ConfigError, "second-order coefficient must be positive");
        u[i] = data.l(sol.x[i]);
    }
    const double gamma_lo = data.gamma(grid.x_lo);
    const double gamma_hi = data.gamma(grid.x_hi);
    if (!(gamma_lo > 0.0) || !(gamma_hi < 0.0))
        throw Error(ErrorKind::ConfigError, "boundary direction must point into the interval");
    // coefficient of g in the boundary rows after eliminating the ghost node
    const double beta_lo = (2.0 * a[0] / dx - c[0]) / gamma_lo;
    const double beta_hi = -(2.0 * a[n - 1] / dx + c[n - 1]) / gamma_hi;

    if (opt.keep_slabs) sol.slabs.push_back(u);
    Tridiagonal A(n);
    for (std::size_t step = 1; step <= steps; ++step) {
        const double tau = dtau * static_cast<double>(step);
        old = u;
        ustar = u;
        for (std::size_t i = 0; i < n; ++i) hn[i] = data.h(tau, sol.x[i]);
        for (int pass = 0; pass <= opt.picard_sweeps; ++pass) {
            for (std::size_t i = 1; i + 1 < n; ++i) {
                const double diff = a[i] * dtau / (dx * dx);
                const double adv = c[i] * dtau / (2.0 * dx);
                A.lower[i] = -(diff - adv);
                A.upper[i] = -(diff + adv);
                A.diag[i] = 1.0 + 2.0 * diff;
                A.rhs[i] = old[i] + dtau * data.f(sol.x[i], ustar[i]);
            }
            auto boundary_row = [&](std::size_t i, std::size_t nb, double beta) {
                const double diff = a[i] * dtau / (dx * dx);
                const double gs = data.g(sol.x[i], ustar[i]);
                const double dg = derivative(data.g, sol.x[i], ustar[i]);
                if (!std::isfinite(gs) || !std::isfinite(dg))
                    throw Error(ErrorKind::NewtonDiverged, "boundary nonlinearity is not finite");
                A.diag[i] = 1.0 + 2.0 * diff - dtau * beta * dg;
                (nb > i ? A.upper[i] : A.lower[i]) = -2.0 * diff;
                (nb > i ? A.lower[i] : A.upper[i]) = 0.0;
                A.rhs[i] = old[i] + dtau * (beta * (gs - dg * ustar[i]) + data.f(sol.x[i], ustar[i]));
            };
            boundary_row(0, 1, beta_lo);
            boundary_row(n - 1, n - 2, beta_hi);
            sol.sor_iterations += psor(A, hn, ustar, opt);
            if (!std::isfinite(ustar.front()) || !std::isfinite(ustar.back()))
                throw Error(ErrorKind::NewtonDiverged, "boundary Newton step diverged");
        }
        u = ustar;
        for (std::size_t i = 0; i < n; ++i)
            sol.max_complementarity = std::max(sol.max_complementarity, std::fabs((u[i] - hn[i]) * A.residual(u, i)));
        if (opt.keep_slabs) sol.slabs.push_back(u);
    }
    sol.time_steps = steps;
    sol.u = u;
    sol.obstacle = hn;
    sol.active.resize(n);
    sol.min_margin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        sol.active[i] = u[i] - hn[i] <= 1e-10;
        sol.min_margin = std::min(sol.min_margin, u[i] - hn[i]);
    }
    return sol;
}

FdData homogenized_fd_data(const TwoScaleProblem& problem, const HomogenizedCoefficients& coeffs, double t) {
    if (problem.dim != 1 || coeffs.dim() != 1)
        throw Error(ErrorKind::DimensionMismatch, "the finite-difference oracle is one-dimensional");
    auto cp = std::make_shared<const CompiledProblem>(problem);
    auto slots = [](double x, double tv, double u) { return std::array<double, 4>{x, 0.0, tv, u}; };
    FdData d;
    d.a = [&coeffs](double x) { return 0.5 * coeffs.A0_bar(std::span<const double>(&x, 1))(0, 0); };
    d.c = [&coeffs](double x) {
        double out = 0.0;
        coeffs.C0_bar(std::span<const double>(&x, 1), std::span<double>(&out, 1));
        return out;
    };
    d.gamma = [&coeffs](double x) { return coeffs.gamma0(std::span<const double>(&x, 1))[0]; };
    d.f = [cp, slots](double x, double u) { return cp->f(slots(x, 0.0, u)); };
    d.g = [cp, slots](double x, double u) { return cp->g(slots(x, 0.0, u)); };
    d.l = [cp, slots, t](double x) { return cp->l(slots(x, t, 0.0)); };
    d.h = [cp, slots, t](double tau, double x) { return cp->h(slots(x, t - tau, 0.0)); };
    return d;
}

Discrepancy compare_mc_vs_pde(const TwoScaleProblem& problem, const HomogenizedCoefficients& coeffs,
                              std::pair<double, double> bsde_value, double t, double x0, const FdGrid& grid,
                              const FdOptions& options) {
    const FdData data = homogenized_fd_data(problem, coeffs, t);
    FdGrid g = grid;
    g.horizon = t;
    Discrepancy out;
    out.mc_value = bsde_value.first;
    out.mc_stderr = bsde_value.second;
    out.fd_value = solve_obstacle_pde_1d(data, g, options).at(x0);
    FdGrid coarse = g;
    coarse.M = std::max(16, g.M / 2);
    out.fd_value_coarse = solve_obstacle_pde_1d(data, coarse, options).at(x0);
    out.fd_truncation = std::fabs(out.fd_value - out.fd_value_coarse) / 3.0;
    out.discrepancy = std::fabs(out.mc_value - out.fd_value);
    return out;
}

nlohmann::json to_json(const Discrepancy& d) {
    return {{"mc_value", d.mc_value},         {"mc_stderr", d.mc_stderr},
            {"fd_value", d.fd_value},         {"fd_value_coarse", d.fd_value_coarse},
            {"fd_truncation", d.fd_truncation}, {"discrepancy", d.discrepancy}};
}

}  // namespace homlab
