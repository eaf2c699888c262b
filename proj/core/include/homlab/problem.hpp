#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "homlab/expr.hpp"
#include "homlab/geometry.hpp"

namespace homlab {

/// Full problem datum: two-scale coefficients sigma(x,y), b(x,y), c(x,y) on
/// the domain, nonlinear data f(x,u), g(x,u), terminal value l(x), obstacle
/// h(t,x), and the declared structural constants.
struct TwoScaleProblem {
    int dim = 1;
    std::vector<std::vector<expr::Expr>> sigma;  // dim x dim
    std::vector<expr::Expr> b;                   // fast drift, scaled by 1/epsilon
    std::vector<expr::Expr> c;                   // slow drift
    ConvexDomain domain = ConvexDomain::interval(0.0, 1.0);
    expr::Expr f;
    expr::Expr g;
    expr::Expr l;
    expr::Expr h;
    double mu = 0.0;
    double beta = -1.0;
    double growth_C = 1.0;
    double growth_p = 1.0;
    double lambda_min = 1e-6;

    /// True when none of sigma, b, c reads a slow variable x_i.
    bool coefficients_x_independent() const;
    /// True when every component of b is the constant zero.
    bool fast_drift_vanishes() const;
};

TwoScaleProblem load_problem(const nlohmann::json& config);
TwoScaleProblem load_problem_file(const std::filesystem::path& path);
nlohmann::json problem_to_json(const TwoScaleProblem& problem);

/// Compiled coefficient programs sharing one slot layout [x, y, t, u].
class CompiledProblem {
public:
    explicit CompiledProblem(const TwoScaleProblem& problem);

    int dim() const noexcept { return layout_.dim; }
    const expr::SlotLayout& layout() const noexcept { return layout_; }

    // `slots` must have layout().size() entries, filled by the caller.
    double sigma(int i, int j, std::span<const double> slots) const { return sigma_[i * dim() + j](slots); }
    double b(int i, std::span<const double> slots) const { return b_[i](slots); }
    double c(int i, std::span<const double> slots) const { return c_[i](slots); }
    double f(std::span<const double> slots) const { return f_(slots); }
    double g(std::span<const double> slots) const { return g_(slots); }
    double l(std::span<const double> slots) const { return l_(slots); }
    double h(std::span<const double> slots) const { return h_(slots); }

    bool sigma_constant() const noexcept { return sigma_constant_; }
    bool b_zero() const noexcept { return b_zero_; }
    bool c_zero() const noexcept { return c_zero_; }

    /// sigma(x, y) as a matrix.
    Mat sigma_at(const Vec& x, const Vec& y) const;
    Vec b_at(const Vec& x, const Vec& y) const;
    Vec c_at(const Vec& x, const Vec& y) const;

private:
    expr::SlotLayout layout_;
    std::vector<expr::Program> sigma_, b_, c_;
    expr::Program f_, g_, l_, h_;
    bool sigma_constant_ = true;
    bool b_zero_ = true;
    bool c_zero_ = true;
};

struct AssumptionCheck {
    std::string name;
    double value = 0.0;
    double threshold = 0.0;
    bool passed = true;
};

struct ValidationReport {
    std::size_t samples = 0;
    std::uint64_t seed = 0;
    double min_ellipticity = 0.0;        // min eigenvalue of sigma sigma^T
    double periodicity_defect = 0.0;     // max |zeta(x, y + e_i) - zeta(x, y)|
    double f_monotonicity_defect = 0.0;  // max (u-v)(f(u)-f(v)) - mu |u-v|^2
    double g_monotonicity_defect = 0.0;  // same against beta
    double f_growth_ratio = 0.0;         // max |f| / (C (|x|^p + |u|^2))
    double g_growth_ratio = 0.0;
    double obstacle_margin = 0.0;        // min l(x) - h(0, x)
    double lipschitz_x = 0.0;            // sampled difference quotients, report only
    double lipschitz_y = 0.0;
    std::size_t evaluation_errors = 0;
    std::vector<AssumptionCheck> checks;

    bool passed() const;
};

/// Randomised check of ellipticity, periodicity, monotonicity, growth and
/// obstacle compatibility. Failures are report entries, never exceptions.
ValidationReport validate_assumptions(const TwoScaleProblem& problem, std::size_t samples, std::uint64_t seed);

nlohmann::json to_json(const ValidationReport& report);

}  // namespace homlab
