#pragma once

#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "homlab/problem.hpp"
#include "homlab/regression.hpp"
#include "homlab/sde.hpp"

namespace homlab {

struct BsdeDiagnostics {
    double max_obstacle_violation = 0.0;  // max (h - Y)^+ over nodes and paths
    double complementarity = 0.0;         // mean over paths of sum_k (Y_k - h_k) dK_k
    double penalization_mass = 0.0;       // mean over paths of sum_k n (Y_k - h_k)^- dt
    double mean_terminal_k = 0.0;         // E K_T
    double apriori = 0.0;  // E[sup|Y|^2 + sum |Z|^2 dt + sum |Y|^2 dG + K_T^2]
    double max_condition = 1.0;
    std::vector<double> mean_y;     // per record time
    std::vector<double> mean_k;
    std::vector<double> violation;  // max (h - Y)^+ per record time
};

struct BsdeSolution {
    std::string scheme;  // "penalized" or "reflected"
    double n_penalty = 0.0;  // infinity for the reflected scheme
    std::size_t paths = 0;
    std::size_t steps = 0;
    int dim = 1;
    // per path arrays, time-major; empty when paths were not kept
    std::vector<double> Y;  // (steps + 1) * paths
    std::vector<double> K;  // (steps + 1) * paths, K at t_0 is 0
    std::vector<double> Z;  // steps * paths * dim
    double value = 0.0;
    double std_error = 0.0;
    BsdeDiagnostics diagnostics;

    double y(std::size_t k, std::size_t p) const noexcept { return Y[k * paths + p]; }
    double k_at(std::size_t k, std::size_t p) const noexcept { return K[k * paths + p]; }
};

struct SolverOptions {
    RegressionBasis basis;
    bool keep_paths = true;
    bool explicit_penalty = false;
    bool estimate_z = true;
};

/// Penalised scheme: implicit closed-form update of
///   Y_k = E_k[Y_{k+1} + f dt + g dG] + n (Y_k - h_k)^- dt.
/// n = 0 gives the unreflected generalized BSDE.
BsdeSolution solve_penalized(const PathBundle& bundle, const TwoScaleProblem& problem, double n_penalty,
                             const SolverOptions& options = {});

/// Discrete reflection: Y_k = max(E_k[Y_{k+1} + f dt + g dG], h_k).
BsdeSolution solve_reflected(const PathBundle& bundle, const TwoScaleProblem& problem,
                             const SolverOptions& options = {});

struct PenalizationSweep {
    std::vector<BsdeSolution> penalized;  // one per n, same order as n_list
    BsdeSolution reflected;
    std::vector<double> n_list;
    bool monotone = true;
    double max_decrease = 0.0;  // largest Y0(n_i) - Y0(n_{i+1}) when positive
    double gap = 0.0;           // |Y0(n_max) - Y0(reflected)|
};

PenalizationSweep penalization_sweep(const PathBundle& bundle, const TwoScaleProblem& problem,
                                     const std::vector<double>& n_list, const SolverOptions& options = {});

/// The deterministic value at t = 0 and its cross-path standard error.
std::pair<double, double> value_at_origin(const BsdeSolution& solution);

nlohmann::json to_json(const BsdeSolution& solution, bool per_step = false);

}  // namespace homlab
