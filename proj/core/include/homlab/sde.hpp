#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "homlab/geometry.hpp"
#include "homlab/problem.hpp"

namespace homlab {

class HomogenizedCoefficients;

/// Simulated paths on a record grid t_k = k * dt, k = 0..steps. Each record
/// interval may contain several simulation substeps; dW, dG and dM are the
/// sums over those substeps. Storage is time-major: all paths of t_k are
/// contiguous.
struct PathBundle {
    int dim = 1;
    std::size_t paths = 0;
    std::size_t steps = 0;  // K
    double horizon = 0.0;
    double dt = 0.0;        // record interval
    double sim_dt = 0.0;    // simulation step
    std::size_t substeps = 1;
    double epsilon = 0.0;   // 0 for the homogenized bundle
    std::uint64_t seed = 0;
    std::string scheme;

    std::vector<double> X;   // (steps + 1) * paths * dim
    std::vector<double> dW;  // steps * paths * dim
    std::vector<double> dG;  // steps * paths
    std::vector<double> dM;  // steps * paths * dim
    std::vector<double> sup_norm;  // per path, sup over all simulation steps of |X|

    double time(std::size_t k) const noexcept { return static_cast<double>(k) * dt; }
    std::span<const double> x(std::size_t k, std::size_t p) const noexcept {
        return {X.data() + (k * paths + p) * dim, static_cast<std::size_t>(dim)};
    }
    std::span<const double> dw(std::size_t k, std::size_t p) const noexcept {
        return {dW.data() + (k * paths + p) * dim, static_cast<std::size_t>(dim)};
    }
    std::span<const double> dm(std::size_t k, std::size_t p) const noexcept {
        return {dM.data() + (k * paths + p) * dim, static_cast<std::size_t>(dim)};
    }
    double dg(std::size_t k, std::size_t p) const noexcept { return dG[k * paths + p]; }
    /// G at the horizon for path p.
    double total_g(std::size_t p) const noexcept;
};

enum class ReflectionMode { Projection, Penalty };

struct SimulationSpec {
    Vec x0;
    double horizon = 1.0;
    double dt = 1e-3;           // largest admissible simulation step
    std::size_t record_steps = 0;  // 0 records every simulation step
    std::size_t paths = 1000;
    std::uint64_t seed = 0;
    int threads = 1;
    ReflectionMode reflection = ReflectionMode::Projection;
    double penalty_eta = 1e-3;  // penalty mode only
    std::optional<Vec> frozen_x;  // evaluate coefficients at this slow point
};

/// Resolved time grid: record interval, simulation step and substeps.
struct TimeGrid {
    std::size_t steps = 0;
    std::size_t substeps = 1;
    double dt = 0.0;
    double sim_dt = 0.0;
};
TimeGrid resolve_time_grid(double horizon, double dt, std::size_t record_steps);

/// Largest admissible simulation step for the two-scale process.
inline double max_two_scale_dt(double epsilon) { return 0.1 * epsilon * epsilon; }

/// Euler scheme for the reflected two-scale SDE with projection onto the
/// closed domain.
PathBundle simulate_two_scale(const TwoScaleProblem& problem, double epsilon, const SimulationSpec& spec);

/// Euler scheme for the homogenized SDE with oblique reflection along gamma0.
PathBundle simulate_homogenized(const HomogenizedCoefficients& coeffs, const ConvexDomain& domain,
                                const SimulationSpec& spec);

struct MomentDiagnostics {
    double sup_moment = 0.0;  // E sup |X|^p
    double sup_moment_stderr = 0.0;
    double mean_g = 0.0;      // E G_t
    double mean_g_stderr = 0.0;
};

MomentDiagnostics moment_diagnostics(const PathBundle& bundle, double p);

/// Mean and standard error of a sample, with chunk-ordered summation.
struct SampleStats {
    double mean = 0.0;
    double std_error = 0.0;
    double variance = 0.0;
};
SampleStats sample_stats(std::span<const double> values);

}  // namespace homlab
