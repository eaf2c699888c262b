#include "homlab/homogenized.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "homlab/error.hpp"
#include "homlab/parallel.hpp"
#include "homlab/random.hpp"
#include "two_scale_step.hpp"

namespace homlab {

namespace {

Mat symmetric_sqrt(const Mat& A) {
    if (A.isDiagonal(0.0)) return A.diagonal().cwiseSqrt().asDiagonal();
    Eigen::SelfAdjointEigenSolver<Mat> es(A);
    if (es.eigenvalues().minCoeff() <= 0.0)
        throw Error(ErrorKind::NonEllipticEffective, "effective diffusion is not positive definite");
    return es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

BoundaryTensor boundary_tensor(const TwoScaleProblem& problem, const Vec& x_boundary, const CellSolution& cell,
                               const BoundarySimulation& sim) {
    const ConvexDomain& dom = problem.domain;
    const int d = problem.dim;
    if (x_boundary.size() != d) throw Error(ErrorKind::DimensionMismatch, "boundary point has the wrong dimension");
    if (std::fabs(dom.psi(x_boundary)) > 1e-9) throw Error(ErrorKind::ConfigError, "point is not on the boundary");
    if (!(sim.epsilon > 0.0) || !(sim.horizon > 0.0) || sim.paths == 0)
        throw Error(ErrorKind::ConfigError, "boundary simulation needs positive epsilon, horizon and paths");
    const double dt = sim.dt > 0.0 ? sim.dt : 0.002 * sim.epsilon * sim.epsilon;
    if (dt > max_two_scale_dt(sim.epsilon) * (1.0 + 1e-12))
        throw Error(ErrorKind::StepSizeTooLarge, "simulation step exceeds 0.1 epsilon^2");
    const auto steps = static_cast<std::size_t>(std::ceil(sim.horizon / dt - 1e-9));
    const double h = sim.horizon / static_cast<double>(steps);

    const CompiledProblem cp(problem);
    const std::optional<Vec> frozen = x_boundary;
    std::vector<double> num(sim.paths * d, 0.0), den(sim.paths, 0.0);
    std::vector<std::size_t> hits_per_chunk(chunk_count(sim.paths), 0);

    parallel_chunks(sim.paths, sim.threads, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        detail::TwoScaleStepper stepper(cp, dom, sim.epsilon, h, frozen, ReflectionMode::Projection, 1.0);
        std::vector<double> x(d), dw(d), dm(d), y(d), normal(d);
        for (std::size_t p = begin; p < end; ++p) {
            StreamRng rng(sim.seed, p);
            for (int i = 0; i < d; ++i) x[i] = x_boundary[i];
            for (std::size_t k = 0; k < steps; ++k) {
                const double dg = stepper.step(x, rng, dw, dm);
                if (dg <= 0.0) continue;
                ++hits_per_chunk[chunk];
                for (int i = 0; i < d; ++i) y[i] = detail::fractional(x[i] / sim.epsilon);
                const Mat J = cell.identity_plus_dy(y);
                dom.inward_normal(x, normal);
                for (int r = 0; r < d; ++r) {
                    double v = 0.0;
                    for (int c = 0; c < d; ++c) v += J(r, c) * normal[c];
                    num[p * d + r] += v * dg;
                }
                den[p] += dg;
            }
        }
    });

    BoundaryTensor out;
    for (auto n : hits_per_chunk) out.hits += n;
    const double P = static_cast<double>(sim.paths);
    double den_sum = 0.0;
    for (double v : den) den_sum += v;
    if (!(den_sum > 0.0)) throw Error(ErrorKind::NoBoundaryMass, "no local time accumulated; horizon too short");
    const double den_mean = den_sum / P;
    out.boundary_mass = den_mean;
    out.gamma0 = Vec::Zero(d);
    out.std_error = Vec::Zero(d);
    for (int r = 0; r < d; ++r) {
        double s = 0.0;
        for (std::size_t p = 0; p < sim.paths; ++p) s += num[p * d + r];
        out.gamma0[r] = s / den_sum;
        // delta method for a ratio of means
        double ss = 0.0;
        for (std::size_t p = 0; p < sim.paths; ++p) {
            const double e = num[p * d + r] - out.gamma0[r] * den[p];
            ss += e * e;
        }
        if (sim.paths > 1) out.std_error[r] = std::sqrt(ss / (P - 1.0) / P) / den_mean;
    }
    return out;
}

HomogenizedCoefficients HomogenizedCoefficients::constant(const Mat& A0_bar, const Vec& C0_bar,
                                                          const ConvexDomain& domain) {
    const int d = domain.dim();
    if (A0_bar.rows() != d || A0_bar.cols() != d || C0_bar.size() != d)
        throw Error(ErrorKind::DimensionMismatch, "effective tensors have the wrong dimension");
    HomogenizedCoefficients h(domain);
    h.nodes_ = 1;
    h.A0_.assign(static_cast<std::size_t>(d * d), 0.0);
    h.sqrtA_ = h.A0_;
    h.C0_.assign(static_cast<std::size_t>(d), 0.0);
    h.set_node(0, A0_bar, C0_bar);
    h.normal_ = true;
    return h;
}

HomogenizedCoefficients HomogenizedCoefficients::constant_1d(double A0_bar, double C0_bar, double gamma_lo,
                                                             double gamma_hi, const ConvexDomain& domain) {
    if (domain.dim() != 1) throw Error(ErrorKind::DimensionMismatch, "constant_1d needs a one-dimensional domain");
    HomogenizedCoefficients h = constant(Mat::Constant(1, 1, A0_bar), Vec::Constant(1, C0_bar), domain);
    if (!(gamma_lo > 1e-10) || !(gamma_hi < -1e-10))
        throw Error(ErrorKind::TangentialReflection, "gamma0 must point into the interval");
    h.normal_ = false;
    h.gamma_ = {gamma_lo, gamma_hi};
    return h;
}

void HomogenizedCoefficients::set_node(std::size_t node, const Mat& A0, const Vec& C0) {
    const int d = d_;
    const Mat S = symmetric_sqrt(A0);
    for (int r = 0; r < d; ++r) {
        C0_[node * d + r] = C0[r];
        for (int c = 0; c < d; ++c) {
            A0_[(node * d + r) * d + c] = A0(r, c);
            sqrtA_[(node * d + r) * d + c] = S(r, c);
        }
    }
}

HomogenizedCoefficients HomogenizedCoefficients::from_problem(const TwoScaleProblem& problem,
                                                              const HomogenizationOptions& options) {
    const ConvexDomain& dom = problem.domain;
    const int d = problem.dim;
    HomogenizedCoefficients h(dom);

    if (problem.coefficients_x_independent()) {
        h.cells.push_back(solve_cell(problem, dom.center(), options.cell));
        h.nodes_ = 1;
        h.A0_.assign(static_cast<std::size_t>(d * d), 0.0);
        h.sqrtA_ = h.A0_;
        h.C0_.assign(static_cast<std::size_t>(d), 0.0);
        h.set_node(0, h.cells[0].A0_bar, h.cells[0].C0_bar);
    } else {
        if (options.x_nodes < 2) throw Error(ErrorKind::ConfigError, "x tabulation needs at least 2 nodes");
        h.axis_n_ = options.x_nodes;
        h.lo_ = dom.center()[0] - dom.radius();
        h.lo2_ = d == 2 ? dom.center()[1] - dom.radius() : 0.0;
        h.step_ = 2.0 * dom.radius() / (h.axis_n_ - 1);
        h.nodes_ = d == 1 ? std::size_t(h.axis_n_) : std::size_t(h.axis_n_) * h.axis_n_;
        h.A0_.assign(h.nodes_ * d * d, 0.0);
        h.sqrtA_ = h.A0_;
        h.C0_.assign(h.nodes_ * d, 0.0);
        for (std::size_t node = 0; node < h.nodes_; ++node) {
            Vec x(d);
            x[0] = h.lo_ + h.step_ * static_cast<double>(node % h.axis_n_);
            if (d == 2) x[1] = h.lo2_ + h.step_ * static_cast<double>(node / h.axis_n_);
            h.cells.push_back(solve_cell(problem, x, options.cell));
            h.set_node(node, h.cells.back().A0_bar, h.cells.back().C0_bar);
        }
    }

    h.normal_ = problem.fast_drift_vanishes();
    if (h.normal_) return h;

    auto boundary_cell = [&](const Vec& xb) {
        if (problem.coefficients_x_independent()) return h.cells[0];
        return solve_cell(problem, xb, options.cell);
    };
    auto estimate = [&](const Vec& xb, std::uint64_t salt) {
        BoundarySimulation sim = options.boundary;
        sim.seed = mix_seed(options.boundary.seed, salt);
        return boundary_tensor(problem, xb, boundary_cell(xb), sim).gamma0;
    };
    if (d == 1) {
        Vec lo(1), hi(1);
        lo[0] = dom.center()[0] - dom.radius();
        hi[0] = dom.center()[0] + dom.radius();
        h.gamma_ = {estimate(lo, 0)[0], estimate(hi, 1)[0]};
    } else {
        h.angles_ = options.angles;
        if (h.angles_ < 4) throw Error(ErrorKind::ConfigError, "at least 4 boundary directions are needed");
        h.gamma_.assign(static_cast<std::size_t>(2 * h.angles_), 0.0);
        for (int a = 0; a < h.angles_; ++a) {
            const double theta = 2.0 * std::numbers::pi * a / h.angles_;
            Vec xb(2);
            xb[0] = dom.center()[0] + dom.radius() * std::cos(theta);
            xb[1] = dom.center()[1] + dom.radius() * std::sin(theta);
            const Vec g = estimate(xb, static_cast<std::uint64_t>(a));
            h.gamma_[2 * a] = g[0];
            h.gamma_[2 * a + 1] = g[1];
        }
    }
    return h;
}

void HomogenizedCoefficients::weights(std::span<const double> x, std::size_t idx[4], double w[4]) const {
    if (nodes_ == 1) {
        idx[0] = idx[1] = idx[2] = idx[3] = 0;
        w[0] = 1.0;
        w[1] = w[2] = w[3] = 0.0;
        return;
    }
    auto locate = [&](double v, double lo, int& i, double& f) {
        const double s = std::clamp((v - lo) / step_, 0.0, static_cast<double>(axis_n_ - 1));
        i = std::min(static_cast<int>(s), axis_n_ - 2);
        f = s - i;
    };
    int i0, i1 = 0;
    double f0, f1 = 0.0;
    locate(x[0], lo_, i0, f0);
    if (d_ == 2) locate(x[1], lo2_, i1, f1);
    const std::size_t n = static_cast<std::size_t>(axis_n_);
    idx[0] = i0 + n * i1;
    idx[1] = idx[0] + 1;
    idx[2] = d_ == 2 ? idx[0] + n : idx[0];
    idx[3] = d_ == 2 ? idx[1] + n : idx[1];
    w[0] = (1.0 - f0) * (1.0 - f1);
    w[1] = f0 * (1.0 - f1);
    w[2] = (1.0 - f0) * f1;
    w[3] = f0 * f1;
}

Mat HomogenizedCoefficients::A0_bar(std::span<const double> x) const {
    std::size_t idx[4];
    double w[4];
    weights(x, idx, w);
    Mat A = Mat::Zero(d_, d_);
    for (int q = 0; q < 4; ++q) {
        if (w[q] == 0.0) continue;
        for (int r = 0; r < d_; ++r)
            for (int c = 0; c < d_; ++c) A(r, c) += w[q] * A0_[(idx[q] * d_ + r) * d_ + c];
    }
    return A;
}

void HomogenizedCoefficients::sqrt_A0(std::span<const double> x, std::span<double> out) const {
    if (nodes_ == 1) {
        std::copy(sqrtA_.begin(), sqrtA_.end(), out.begin());
        return;
    }
    std::size_t idx[4];
    double w[4];
    weights(x, idx, w);
    std::fill(out.begin(), out.end(), 0.0);
    for (int q = 0; q < 4; ++q) {
        if (w[q] == 0.0) continue;
        for (int e = 0; e < d_ * d_; ++e) out[e] += w[q] * sqrtA_[idx[q] * d_ * d_ + e];
    }
}

void HomogenizedCoefficients::C0_bar(std::span<const double> x, std::span<double> out) const {
    if (nodes_ == 1) {
        std::copy(C0_.begin(), C0_.end(), out.begin());
        return;
    }
    std::size_t idx[4];
    double w[4];
    weights(x, idx, w);
    std::fill(out.begin(), out.end(), 0.0);
    for (int q = 0; q < 4; ++q) {
        if (w[q] == 0.0) continue;
        for (int e = 0; e < d_; ++e) out[e] += w[q] * C0_[idx[q] * d_ + e];
    }
}

Vec HomogenizedCoefficients::gamma0(std::span<const double> xb) const {
    Vec g(d_);
    if (normal_) {
        domain_.inward_normal(xb, std::span<double>(g.data(), static_cast<std::size_t>(d_)));
        return g;
    }
    if (d_ == 1) {
        g[0] = xb[0] < domain_.center()[0] ? gamma_[0] : gamma_[1];
        return g;
    }
    const double theta = std::atan2(xb[1] - domain_.center()[1], xb[0] - domain_.center()[0]);
    double s = theta / (2.0 * std::numbers::pi) * angles_;
    s -= std::floor(s / angles_) * angles_;
    const int a0 = std::min(static_cast<int>(s), angles_ - 1);
    const int a1 = (a0 + 1) % angles_;
    const double f = s - a0;
    g[0] = (1.0 - f) * gamma_[2 * a0] + f * gamma_[2 * a1];
    g[1] = (1.0 - f) * gamma_[2 * a0 + 1] + f * gamma_[2 * a1 + 1];
    return g;
}

}  // namespace homlab
