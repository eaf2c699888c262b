#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "homlab/cell.hpp"
#include "homlab/geometry.hpp"
#include "homlab/problem.hpp"

namespace homlab {

struct BoundarySimulation {
    double epsilon = 0.0625;
    double dt = 0.0;  // <= 0 selects 0.002 * epsilon^2
    std::size_t paths = 2000;
    double horizon = 0.02;
    std::uint64_t seed = 0;
    int threads = 1;
};

struct BoundaryTensor {
    Vec gamma0;
    Vec std_error;
    double boundary_mass = 0.0;  // mean total local time per path
    std::size_t hits = 0;
};

/// Local-time-weighted average of (I + d_y b_hat)(x_b, X/eps) grad psi(X)
/// over reflected two-scale paths started at x_boundary, with the slow
/// variable frozen at x_boundary in every coefficient.
BoundaryTensor boundary_tensor(const TwoScaleProblem& problem, const Vec& x_boundary, const CellSolution& cell,
                               const BoundarySimulation& sim);

struct HomogenizationOptions {
    CellOptions cell;
    int x_nodes = 17;  // tabulation nodes per axis when coefficients read x
    int angles = 16;   // boundary directions tabulated for d = 2
    BoundarySimulation boundary;
};

/// Effective drift C0_bar(x), diffusion A0_bar(x) (with its symmetric square
/// root) and oblique reflection field gamma0 on the boundary.
class HomogenizedCoefficients {
public:
    /// Constant tensors; gamma0 is the inward normal.
    static HomogenizedCoefficients constant(const Mat& A0_bar, const Vec& C0_bar, const ConvexDomain& domain);
    /// Constant tensors with gamma0 given at the two ends of an interval.
    static HomogenizedCoefficients constant_1d(double A0_bar, double C0_bar, double gamma_lo, double gamma_hi,
                                               const ConvexDomain& domain);
    static HomogenizedCoefficients from_problem(const TwoScaleProblem& problem,
                                                const HomogenizationOptions& options = {});

    int dim() const noexcept { return d_; }
    bool is_constant() const noexcept { return nodes_ == 1; }
    bool normal_reflection() const noexcept { return normal_; }
    const ConvexDomain& domain() const noexcept { return domain_; }

    Mat A0_bar(std::span<const double> x) const;
    /// Writes the symmetric square root of A0_bar(x), row-major, into out.
    void sqrt_A0(std::span<const double> x, std::span<double> out) const;
    void C0_bar(std::span<const double> x, std::span<double> out) const;
    /// gamma0 at a boundary point.
    Vec gamma0(std::span<const double> x_boundary) const;

    /// Tabulated values, for reporting.
    const std::vector<double>& gamma_table() const noexcept { return gamma_; }
    std::vector<CellSolution> cells;  // one per tabulation node, for reporting

private:
    explicit HomogenizedCoefficients(const ConvexDomain& domain) : domain_(domain), d_(domain.dim()) {}
    // Bilinear weights of x on the tabulation grid.
    void weights(std::span<const double> x, std::size_t idx[4], double w[4]) const;
    void set_node(std::size_t node, const Mat& A0, const Vec& C0);

    ConvexDomain domain_;
    int d_;
    std::size_t nodes_ = 1;   // per axis count is axis_n_
    int axis_n_ = 1;
    double lo_ = 0.0, step_ = 1.0;   // axis grid (same for every axis)
    double lo2_ = 0.0;
    std::vector<double> A0_;   // nodes * d * d
    std::vector<double> sqrtA_;
    std::vector<double> C0_;   // nodes * d
    bool normal_ = true;
    // d = 1: [gamma(lo), gamma(hi)]; d = 2: angles * 2 components
    std::vector<double> gamma_;
    int angles_ = 0;
};

}  // namespace homlab
