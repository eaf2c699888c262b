#pragma once

#include <cstddef>
#include <optional>

#include <Eigen/SparseCore>

#include "homlab/geometry.hpp"
#include "homlab/problem.hpp"

namespace homlab {

using SparseMat = Eigen::SparseMatrix<double>;

/// Uniform periodic grid on [0,1)^d_cell, node j at multi-index (i0, i1)
/// with j = i0 + N * i1.
class TorusGrid {
public:
    TorusGrid(int d_cell, int N);

    int d_cell() const noexcept { return d_; }
    int N() const noexcept { return n_; }
    double spacing() const noexcept { return 1.0 / n_; }
    double cell_volume() const noexcept { return d_ == 1 ? spacing() : spacing() * spacing(); }
    std::size_t nodes() const noexcept { return d_ == 1 ? std::size_t(n_) : std::size_t(n_) * n_; }

    int wrap(int i) const noexcept { return ((i % n_) + n_) % n_; }
    std::size_t index(int i0, int i1 = 0) const noexcept {
        return std::size_t(wrap(i0)) + (d_ == 2 ? std::size_t(n_) * wrap(i1) : 0);
    }
    /// Node index shifted by (s0, s1) with periodic wraparound.
    std::size_t shifted(std::size_t j, int s0, int s1 = 0) const noexcept;
    Vec point(std::size_t j) const;

    /// Periodic (bi)linear interpolation of a node field at an arbitrary y.
    double interpolate(const Eigen::Ref<const Vec>& field, std::span<const double> y) const;

private:
    int d_;
    int n_;
};

/// Discrete L_{x,y} = sum a_ij d_i d_j + sum b_i d_i with a = sigma sigma^T / 2,
/// frozen at the slow point x.
SparseMat frozen_generator(const CompiledProblem& problem, const Vec& x, const TorusGrid& grid);

struct DensityResult {
    Vec m;
    double residual = 0.0;  // max |L^T m|
};

/// Solves L^T m = 0 with sum m * cell_volume = 1 by a bordered sparse LU.
DensityResult invariant_density(const SparseMat& L, const TorusGrid& grid);

/// sum_j b(x, y_j) m_j * cell_volume, per component.
Vec check_centering(const CompiledProblem& problem, const Vec& x, const Vec& m, const TorusGrid& grid);

struct CorrectorResult {
    Mat b_hat;              // nodes x d
    double residual = 0.0;  // max |L b_hat + b|
    Vec centering;          // sum b_hat m * cell_volume
};

/// Solves L b_hat^k = -b^k with sum b_hat^k m = 0. Throws CenteringViolated
/// when the centering defect exceeds `centering_tol`.
CorrectorResult corrector(const SparseMat& L, const CompiledProblem& problem, const Vec& x, const Vec& m,
                          const TorusGrid& grid, double centering_tol = 1e-6);

struct CellOptions {
    int N = 512;
    double fd_step = 0.0;  // <= 0 selects 1e-3 * (1 + |x|)
    double centering_tol = 1e-6;
};

struct CellSolution {
    Vec x;
    int N = 0;
    int d_cell = 0;
    Vec m;
    Mat b_hat;         // nodes x d
    Mat db_hat_dy;     // nodes x (d*d), entry (k, i) at column k*d + i: d b_hat^k / d y_i
    Mat db_hat_dx;     // nodes x (d*d), entry (k, i) at column k*d + i: d b_hat^k / d x_i
    Mat d2b_hat_dxdy;  // nodes x (d*d*d), entry (k, i, j) at column (k*d + i)*d + j
    Mat S0;            // nodes x (d*d), row-major d x d per node
    Mat C0;            // nodes x d
    Mat A0_bar;
    Vec C0_bar;
    std::optional<Vec> gamma0;
    Vec centering_residual;        // integral of b against m
    double density_residual = 0.0;
    double poisson_residual = 0.0;
    double corrector_centering = 0.0;  // max_k |sum b_hat^k m| * cell_volume
    double l1_mass_defect = 0.0;       // |sum m * cell_volume - 1|
    bool x_derivatives = false;        // false when coefficients ignore x

    /// (I + d_y b_hat)(y) as a d x d matrix, interpolated on the grid.
    Mat identity_plus_dy(std::span<const double> y) const;
};

/// Full frozen-x cell computation: density, corrector, y- and x-derivatives
/// of the corrector and the effective tensors.
CellSolution solve_cell(const TwoScaleProblem& problem, const Vec& x, const CellOptions& options = {});

struct EffectiveTensors {
    Mat A0_bar;
    Vec C0_bar;
    Mat S0;
    Mat C0;
};

/// S0 = (I + d_y b_hat) sigma, A0 = S0 S0^T, C0 = d_x b_hat b + (I + d_y b_hat) c
/// + 1/2 Tr(d_xy b_hat sigma sigma^T), and their m-averages.
EffectiveTensors effective_tensors(const CompiledProblem& problem, const Vec& x, const CellSolution& cell,
                                   const TorusGrid& grid);

}  // namespace homlab
