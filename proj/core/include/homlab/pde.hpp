#pragma once

#include <functional>
#include <vector>

#include <nlohmann/json.hpp>

#include "homlab/homogenized.hpp"
#include "homlab/problem.hpp"

namespace homlab {

struct FdGrid {
    double x_lo = 0.0;
    double x_hi = 1.0;
    int M = 200;          // intervals; M + 1 nodes
    double dtau = 1e-4;
    double horizon = 0.1;

    double dx() const noexcept { return (x_hi - x_lo) / M; }
    double node(int i) const noexcept { return x_lo + (x_hi - x_lo) * i / M; }
};

struct FdSolution {
    std::vector<double> x;
    std::vector<double> u;         // at tau = horizon
    std::vector<double> obstacle;  // h at tau = horizon
    std::vector<bool> active;
    std::vector<std::vector<double>> slabs;  // u at every time level, when requested
    std::size_t time_steps = 0;
    std::size_t sor_iterations = 0;
    double max_complementarity = 0.0;  // max |(u - h) * residual| over nodes and levels
    double min_margin = 0.0;           // min (u - h)

    /// Linear interpolation in x.
    double at(double x) const;
};

struct FdData {
    std::function<double(double)> a;  // second-order coefficient, > 0
    std::function<double(double)> c;  // first-order coefficient
    std::function<double(double)> gamma;  // boundary direction; evaluated at x_lo and x_hi
    std::function<double(double, double)> f;  // f(x, u)
    std::function<double(double, double)> g;  // g(x, u)
    std::function<double(double)> l;          // initial value in tau
    std::function<double(double, double)> h;  // obstacle h(tau, x)
};

struct FdOptions {
    double omega = 1.5;
    double tolerance = 1e-9;
    std::size_t max_sweeps = 200000;
    int picard_sweeps = 2;
    bool keep_slabs = false;
};

/// Implicit Euler in tau = time to maturity for
///   min(u - h, u_tau - a u'' - c u' - f(x, u)) = 0,
///   gamma u_x + g(x, u) = 0 at both ends,  u(0, x) = l(x),
/// with projected SOR for the obstacle and ghost nodes at the boundary.
FdSolution solve_obstacle_pde_1d(const FdData& data, const FdGrid& grid, const FdOptions& options = {});

/// FD data of the homogenized problem: a = A0_bar / 2, c = C0_bar, gamma0,
/// and the obstacle read in time to maturity, h(t - tau, x). The returned
/// functions refer to `coeffs`, which must outlive them.
FdData homogenized_fd_data(const TwoScaleProblem& problem, const HomogenizedCoefficients& coeffs, double t);

struct Discrepancy {
    double mc_value = 0.0;
    double mc_stderr = 0.0;
    double fd_value = 0.0;
    double fd_value_coarse = 0.0;  // at half resolution
    double fd_truncation = 0.0;    // Richardson estimate |u_M - u_{M/2}| / 3
    double discrepancy = 0.0;      // |mc - fd|
};

Discrepancy compare_mc_vs_pde(const TwoScaleProblem& problem, const HomogenizedCoefficients& coeffs,
                              std::pair<double, double> bsde_value, double t, double x0, const FdGrid& grid,
                              const FdOptions& options = {});

nlohmann::json to_json(const Discrepancy& d);

}  // namespace homlab
