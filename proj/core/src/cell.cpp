#include "homlab/cell.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>

#include "homlab/error.hpp"

namespace homlab {

TorusGrid::TorusGrid(int d_cell, int N) : d_(d_cell), n_(N) {
    if (d_cell != 1 && d_cell != 2) throw Error(ErrorKind::DimensionMismatch, "cell dimension must be 1 or 2");
    if (N < 8 || N % 2 != 0) throw Error(ErrorKind::SchemaError, "cell resolution must be even and at least 8");
}

std::size_t TorusGrid::shifted(std::size_t j, int s0, int s1) const noexcept {
    const int i0 = static_cast<int>(j % n_);
    const int i1 = static_cast<int>(j / n_);
    return index(i0 + s0, i1 + s1);
}

Vec TorusGrid::point(std::size_t j) const {
    Vec y(d_);
    y[0] = static_cast<double>(j % n_) * spacing();
    if (d_ == 2) y[1] = static_cast<double>(j / n_) * spacing();
    return y;
}

double TorusGrid::interpolate(const Eigen::Ref<const Vec>& field, std::span<const double> y) const {
    const double s0 = y[0] * n_;
    const double f0 = std::floor(s0);
    const double w0 = s0 - f0;
    const int i0 = static_cast<int>(f0);
    if (d_ == 1) return (1.0 - w0) * field[index(i0)] + w0 * field[index(i0 + 1)];
    const double s1 = y[1] * n_;
    const double f1 = std::floor(s1);
    const double w1 = s1 - f1;
    const int i1 = static_cast<int>(f1);
    return (1.0 - w0) * (1.0 - w1) * field[index(i0, i1)] + w0 * (1.0 - w1) * field[index(i0 + 1, i1)] +
           (1.0 - w0) * w1 * field[index(i0, i1 + 1)] + w0 * w1 * field[index(i0 + 1, i1 + 1)];
}

namespace {

void check_dims(const CompiledProblem& problem, const TorusGrid& grid) {
    if (problem.dim() != grid.d_cell())
        throw Error(ErrorKind::DimensionMismatch, "cell grid dimension differs from problem dimension");
}

std::vector<double> slots_at(const CompiledProblem& problem, const Vec& x, const Vec& y) {
    const auto& layout = problem.layout();
    std::vector<double> s(static_cast<std::size_t>(layout.size()), 0.0);
    for (int i = 0; i < problem.dim(); ++i) {
        s[layout.x(i)] = x[i];
        s[layout.y(i)] = y[i];
    }
    return s;
}

double max_abs(const Eigen::Ref<const Vec>& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

Mat central_dy(const Mat& field, const TorusGrid& grid) {
    // field: nodes x K; result: nodes x (K*d), column k*d + i = d field_k / d y_i
    const int d = grid.d_cell();
    const auto K = field.cols();
    Mat out(field.rows(), K * d);
    const double inv2h = 0.5 / grid.spacing();
    for (std::size_t j = 0; j < grid.nodes(); ++j) {
        for (int i = 0; i < d; ++i) {
            const std::size_t jp = i == 0 ? grid.shifted(j, 1, 0) : grid.shifted(j, 0, 1);
            const std::size_t jm = i == 0 ? grid.shifted(j, -1, 0) : grid.shifted(j, 0, -1);
            for (Eigen::Index k = 0; k < K; ++k) out(j, k * d + i) = (field(jp, k) - field(jm, k)) * inv2h;
        }
    }
    return out;
}

struct CellCore {
    Vec m;
    CorrectorResult corr;
    DensityResult density;
    Vec centering;
};

CellCore solve_core(const CompiledProblem& cp, const Vec& x, const TorusGrid& grid, double centering_tol) {
    const SparseMat L = frozen_generator(cp, x, grid);
    CellCore core;
    core.density = invariant_density(L, grid);
    core.m = core.density.m;
    core.centering = check_centering(cp, x, core.m, grid);
    core.corr = corrector(L, cp, x, core.m, grid, centering_tol);
    return core;
}

}  // namespace

SparseMat frozen_generator(const CompiledProblem& problem, const Vec& x, const TorusGrid& grid) {
    check_dims(problem, grid);
    const int d = grid.d_cell();
    const auto n = static_cast<Eigen::Index>(grid.nodes());
    const double h = grid.spacing();
    const double inv_h2 = 1.0 / (h * h);
    const double inv_2h = 0.5 / h;

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(n) * (d == 1 ? 3 : 9));
    const auto& layout = problem.layout();
    std::vector<double> s = slots_at(problem, x, Vec::Zero(d));
    Mat sigma(d, d);
    for (std::size_t j = 0; j < grid.nodes(); ++j) {
        const Vec y = grid.point(j);
        for (int i = 0; i < d; ++i) s[layout.y(i)] = y[i];
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c) sigma(r, c) = problem.sigma(r, c, s);
        const Mat a = 0.5 * sigma * sigma.transpose();
        const auto row = static_cast<Eigen::Index>(j);
        double off = 0.0;
        auto push = [&](std::size_t col, double v) {
            trip.emplace_back(row, static_cast<Eigen::Index>(col), v);
            off += v;
        };
        for (int i = 0; i < d; ++i) {
            const double bi = problem.b(i, s);
            const std::size_t jp = i == 0 ? grid.shifted(j, 1, 0) : grid.shifted(j, 0, 1);
            const std::size_t jm = i == 0 ? grid.shifted(j, -1, 0) : grid.shifted(j, 0, -1);
            push(jp, a(i, i) * inv_h2 + bi * inv_2h);
            push(jm, a(i, i) * inv_h2 - bi * inv_2h);
        }
        if (d == 2) {
            const double w = 2.0 * a(0, 1) * 0.25 * inv_h2;
            if (w != 0.0) {
                push(grid.shifted(j, 1, 1), w);
                push(grid.shifted(j, -1, -1), w);
                push(grid.shifted(j, 1, -1), -w);
                push(grid.shifted(j, -1, 1), -w);
            }
        }
        trip.emplace_back(row, row, -off);
    }
    SparseMat L(n, n);
    L.setFromTriplets(trip.begin(), trip.end());
    L.makeCompressed();
    return L;
}

DensityResult invariant_density(const SparseMat& L, const TorusGrid& grid) {
    const Eigen::Index n = L.rows();
    const SparseMat Lt = L.transpose();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(Lt.nonZeros() + 2 * n));
    for (Eigen::Index c = 0; c < Lt.outerSize(); ++c)
        for (SparseMat::InnerIterator it(Lt, c); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
    for (Eigen::Index j = 0; j < n; ++j) {
        trip.emplace_back(j, n, 1.0);
        trip.emplace_back(n, j, grid.cell_volume());
    }
    SparseMat B(n + 1, n + 1);
    B.setFromTriplets(trip.begin(), trip.end());
    B.makeCompressed();

    Eigen::SparseLU<SparseMat, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(B);
    if (lu.info() != Eigen::Success) throw Error(ErrorKind::SolverDiverged, "density factorisation failed");
    Vec rhs = Vec::Zero(n + 1);
    rhs[n] = 1.0;
    const Vec sol = lu.solve(rhs);
    if (lu.info() != Eigen::Success || !sol.allFinite())
        throw Error(ErrorKind::SolverDiverged, "density solve failed");

    DensityResult out;
    out.m = sol.head(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        if (out.m[j] < -1e-12) throw Error(ErrorKind::SolverDiverged, "invariant density has negative mass");
        out.m[j] = std::max(out.m[j], 0.0);
    }
    out.residual = max_abs(Lt * out.m);
    if (out.residual > 1e-8) throw Error(ErrorKind::SolverDiverged, "invariant density residual too large");
    return out;
}

Vec check_centering(const CompiledProblem& problem, const Vec& x, const Vec& m, const TorusGrid& grid) {
    check_dims(problem, grid);
    const int d = grid.d_cell();
    const auto& layout = problem.layout();
    std::vector<double> s = slots_at(problem, x, Vec::Zero(d));
    Vec out = Vec::Zero(d);
    for (std::size_t j = 0; j < grid.nodes(); ++j) {
        const Vec y = grid.point(j);
        for (int i = 0; i < d; ++i) s[layout.y(i)] = y[i];
        for (int i = 0; i < d; ++i) out[i] += problem.b(i, s) * m[static_cast<Eigen::Index>(j)];
    }
    return out * grid.cell_volume();
}

CorrectorResult corrector(const SparseMat& L, const CompiledProblem& problem, const Vec& x, const Vec& m,
                          const TorusGrid& grid, double centering_tol) {
    const Vec defect = check_centering(problem, x, m, grid);
    if (max_abs(defect) > centering_tol)
        throw Error(ErrorKind::CenteringViolated,
                    "fast drift is not centred under the invariant measure (defect " +
                        std::to_string(max_abs(defect)) + ")");

    const int d = grid.d_cell();
    const Eigen::Index n = L.rows();
    const auto& layout = problem.layout();

    Mat rhs = Mat::Zero(n + 1, d);
    std::vector<double> s = slots_at(problem, x, Vec::Zero(d));
    for (Eigen::Index j = 0; j < n; ++j) {
        const Vec y = grid.point(static_cast<std::size_t>(j));
        for (int i = 0; i < d; ++i) s[layout.y(i)] = y[i];
        for (int k = 0; k < d; ++k) rhs(j, k) = -problem.b(k, s);
    }

    CorrectorResult out;
    if (rhs.cwiseAbs().maxCoeff() == 0.0) {
        out.b_hat = Mat::Zero(n, d);
        out.centering = Vec::Zero(d);
        return out;
    }

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(L.nonZeros() + 2 * n));
    for (Eigen::Index c = 0; c < L.outerSize(); ++c)
        for (SparseMat::InnerIterator it(L, c); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
    for (Eigen::Index j = 0; j < n; ++j) {
        trip.emplace_back(j, n, 1.0);
        trip.emplace_back(n, j, m[j] * grid.cell_volume());
    }
    SparseMat B(n + 1, n + 1);
    B.setFromTriplets(trip.begin(), trip.end());
    B.makeCompressed();

    Eigen::SparseLU<SparseMat, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(B);
    if (lu.info() != Eigen::Success) throw Error(ErrorKind::SolverDiverged, "corrector factorisation failed");
    const Mat sol = lu.solve(rhs);
    if (lu.info() != Eigen::Success || !sol.allFinite())
        throw Error(ErrorKind::SolverDiverged, "corrector solve failed");

    out.b_hat = sol.topRows(n);
    const Mat res = L * out.b_hat - rhs.topRows(n);
    out.residual = res.cwiseAbs().maxCoeff();
    out.centering = (out.b_hat.transpose() * m) * grid.cell_volume();
    if (out.residual > 1e-6) throw Error(ErrorKind::SolverDiverged, "corrector residual too large");
    return out;
}

Mat CellSolution::identity_plus_dy(std::span<const double> y) const {
    const int d = d_cell;
    const TorusGrid grid(d, N);
    Mat J = Mat::Identity(d, d);
    for (int k = 0; k < d; ++k)
        for (int i = 0; i < d; ++i) J(k, i) += grid.interpolate(db_hat_dy.col(k * d + i), y);
    return J;
}

EffectiveTensors effective_tensors(const CompiledProblem& problem, const Vec& x, const CellSolution& cell,
                                   const TorusGrid& grid) {
    check_dims(problem, grid);
    const int d = grid.d_cell();
    const auto& layout = problem.layout();
    const auto n = static_cast<Eigen::Index>(grid.nodes());

    EffectiveTensors out;
    out.S0 = Mat::Zero(n, d * d);
    out.C0 = Mat::Zero(n, d);
    out.A0_bar = Mat::Zero(d, d);
    out.C0_bar = Vec::Zero(d);

    std::vector<double> s = slots_at(problem, x, Vec::Zero(d));
    Mat sigma(d, d), J(d, d);
    Vec b(d), c(d);
    for (Eigen::Index j = 0; j < n; ++j) {
        const Vec y = grid.point(static_cast<std::size_t>(j));
        for (int i = 0; i < d; ++i) s[layout.y(i)] = y[i];
        for (int r = 0; r < d; ++r) {
            b[r] = problem.b(r, s);
            c[r] = problem.c(r, s);
            for (int q = 0; q < d; ++q) {
                sigma(r, q) = problem.sigma(r, q, s);
                J(r, q) = (r == q ? 1.0 : 0.0) + cell.db_hat_dy(j, r * d + q);
            }
        }
        const Mat S0 = J * sigma;
        const Mat a2 = sigma * sigma.transpose();
        Vec C0 = J * c;
        if (cell.x_derivatives) {
            for (int k = 0; k < d; ++k) {
                for (int i = 0; i < d; ++i) {
                    C0[k] += cell.db_hat_dx(j, k * d + i) * b[i];
                    for (int l = 0; l < d; ++l) C0[k] += 0.5 * cell.d2b_hat_dxdy(j, (k * d + i) * d + l) * a2(l, i);
                }
            }
        }
        for (int r = 0; r < d; ++r)
            for (int q = 0; q < d; ++q) out.S0(j, r * d + q) = S0(r, q);
        out.C0.row(j) = C0.transpose();
        const double w = cell.m[j] * grid.cell_volume();
        out.A0_bar += w * (S0 * S0.transpose());
        out.C0_bar += w * C0;
    }
    out.A0_bar = 0.5 * (out.A0_bar + out.A0_bar.transpose()).eval();
    const double lam = Eigen::SelfAdjointEigenSolver<Mat>(out.A0_bar, Eigen::EigenvaluesOnly).eigenvalues()[0];
    if (!(lam > 0.0)) throw Error(ErrorKind::NonEllipticEffective, "effective diffusion is not positive definite");
    return out;
}

CellSolution solve_cell(const TwoScaleProblem& problem, const Vec& x, const CellOptions& options) {
    const CompiledProblem cp(problem);
    const int d = problem.dim;
    if (x.size() != d) throw Error(ErrorKind::DimensionMismatch, "frozen point has the wrong dimension");
    const TorusGrid grid(d, options.N);
    const auto n = static_cast<Eigen::Index>(grid.nodes());

    CellSolution cell;
    cell.x = x;
    cell.N = options.N;
    cell.d_cell = d;

    const CellCore core = solve_core(cp, x, grid, options.centering_tol);
    cell.m = core.m;
    cell.b_hat = core.corr.b_hat;
    cell.centering_residual = core.centering;
    cell.density_residual = core.density.residual;
    cell.poisson_residual = core.corr.residual;
    cell.corrector_centering = max_abs(core.corr.centering);
    cell.l1_mass_defect = std::fabs(cell.m.sum() * grid.cell_volume() - 1.0);
    cell.db_hat_dy = central_dy(cell.b_hat, grid);

    cell.db_hat_dx = Mat::Zero(n, d * d);
    cell.d2b_hat_dxdy = Mat::Zero(n, d * d * d);
    cell.x_derivatives = !problem.coefficients_x_independent();
    if (cell.x_derivatives) {
        const double fd = options.fd_step > 0.0 ? options.fd_step : 1e-3 * (1.0 + x.norm());
        for (int i = 0; i < d; ++i) {
            Vec xp = x, xm = x;
            xp[i] += fd;
            xm[i] -= fd;
            const Mat bp = solve_core(cp, xp, grid, options.centering_tol).corr.b_hat;
            const Mat bm = solve_core(cp, xm, grid, options.centering_tol).corr.b_hat;
            const Mat dbdxi = (bp - bm) / (2.0 * fd);  // nodes x d, column k
            for (int k = 0; k < d; ++k) cell.db_hat_dx.col(k * d + i) = dbdxi.col(k);
            const Mat dd = central_dy(dbdxi, grid);  // column k*d + l
            for (int k = 0; k < d; ++k)
                for (int l = 0; l < d; ++l) cell.d2b_hat_dxdy.col((k * d + i) * d + l) = dd.col(k * d + l);
        }
    }

    const EffectiveTensors eff = effective_tensors(cp, x, cell, grid);
    cell.S0 = eff.S0;
    cell.C0 = eff.C0;
    cell.A0_bar = eff.A0_bar;
    cell.C0_bar = eff.C0_bar;
    return cell;
}

}  // namespace homlab
