#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "homlab/problem.hpp"
#include "homlab/regression.hpp"

namespace homlab {

/// Problem shipped with the library: d = 1 Gibbs fast drift on (0, 1).
TwoScaleProblem builtin_problem(const std::string& name);
nlohmann::json builtin_problem_json(const std::string& name);

struct ExperimentConfig {
    TwoScaleProblem problem;
    std::string problem_name;  // path or built-in name, for reporting
    double t = 0.1;
    Vec x0 = Vec::Constant(1, 0.1);
    std::vector<double> epsilons;  // descending
    std::vector<double> n_list;    // ascending
    double c_dt = 0.002;           // two-scale step = c_dt * eps^2
    double homogenized_dt = 1e-5;
    std::size_t record_steps = 50;
    std::size_t paths = 10000;
    std::size_t ks_paths = 10000;
    RegressionBasis basis;
    int cell_N = 512;
    std::size_t boundary_paths = 500;
    int fd_M = 200;
    double fd_dtau = 1e-5;
    std::uint64_t seed = 1;
    int threads = 1;
    bool forward_law = true;
    std::filesystem::path output = "out";
    std::vector<std::string> formats{"csv", "json"};
    std::function<void(const std::string&)> progress;  // optional log sink
};

/// Reads an experiment document. `problem` is a built-in name, a path
/// (relative to `base`) or an inline problem object.
ExperimentConfig load_experiment(const nlohmann::json& doc, const std::filesystem::path& base = {});
ExperimentConfig load_experiment_file(const std::filesystem::path& path);

inline constexpr double kReflected = std::numeric_limits<double>::infinity();

struct ReportRow {
    double epsilon = 0.0;     // 0 for the homogenized run
    double n = kReflected;    // penalty; infinity for the reflected scheme
    double dt = 0.0;          // simulation step
    double record_dt = 0.0;   // BSDE step
    std::size_t paths = 0;
    double value = 0.0;
    double std_error = 0.0;
    double complementarity = 0.0;
    double obstacle_violation = 0.0;
    double mean_terminal_k = 0.0;
    double apriori = 0.0;
    double sup_moment = 0.0;
    double mean_g = 0.0;
    double max_condition = 0.0;
    bool failed = false;
    std::string error;
};

struct CheckResult {
    std::string name;
    bool passed = false;
    double value = 0.0;
    double threshold = 0.0;
};

struct RateFit {
    double slope = std::numeric_limits<double>::quiet_NaN();
    double slope_stderr = std::numeric_limits<double>::quiet_NaN();
    double intercept = std::numeric_limits<double>::quiet_NaN();
    std::size_t points = 0;
};

struct ForwardLawReport {
    double epsilon = 0.0;
    std::vector<double> ks;  // per component
    double mean_g_eps = 0.0;
    double mean_g_eps_stderr = 0.0;
    double mean_g_hom = 0.0;
    double mean_g_hom_stderr = 0.0;
    double mean_g_rel_diff = 0.0;
};

struct ConvergenceReport {
    std::string problem;
    double t = 0.0;
    std::vector<double> x0;
    std::uint64_t seed = 0;
    std::vector<ReportRow> rows;  // sorted by epsilon desc, then n asc
    std::optional<double> homogenized_value;
    std::optional<double> homogenized_stderr;
    std::optional<double> pde_value;
    std::optional<double> pde_truncation;
    RateFit rate;
    std::vector<ForwardLawReport> forward;
    std::vector<CheckResult> checks;

    bool passed() const;
};

/// Reflected values at every epsilon, the homogenized value (bundle BSDE and,
/// in d = 1, the finite-difference oracle) and a rate fit.
ConvergenceReport run_eps_sweep(const ExperimentConfig& config);
/// Penalized values for every (epsilon, n) on one bundle per epsilon, plus the
/// reflected value as the n = infinity column.
ConvergenceReport run_n_sweep(const ExperimentConfig& config);
/// Both sweeps on shared bundles, with forward-law comparisons when enabled.
ConvergenceReport run_sweep(const ExperimentConfig& config);

/// Marginal KS distances between X^eps_t and X_t and the local-time means, at
/// the smallest and largest epsilon of the config.
std::vector<ForwardLawReport> compare_forward_laws(const ExperimentConfig& config);

/// Two-sample Kolmogorov-Smirnov statistic.
double ks_distance(std::vector<double> a, std::vector<double> b);

/// Least-squares slope of log|value - reference| against log epsilon over the
/// reflected rows with epsilon > 0.
RateFit fit_rate(const std::vector<ReportRow>& rows, double reference);

void sort_rows(std::vector<ReportRow>& rows);

nlohmann::json to_json(const ConvergenceReport& report);
ConvergenceReport report_from_json(const nlohmann::json& doc);

std::string report_csv(const ConvergenceReport& report);
std::string report_plotdata(const ConvergenceReport& report);
std::string report_json(const ConvergenceReport& report);

/// Writes report.<ext> into `dir` for the format (csv, json or plotdata) and
/// returns the file path.
std::filesystem::path emit_report(const ConvergenceReport& report, const std::string& format,
                                  const std::filesystem::path& dir);

}  // namespace homlab
