#include "homlab/problem.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <Eigen/Eigenvalues>

#include "homlab/error.hpp"
#include "homlab/random.hpp"

namespace homlab {

namespace {

using nlohmann::json;

const json& require(const json& obj, const char* key) {
    if (!obj.is_object() || !obj.contains(key))
        throw Error(ErrorKind::SchemaError, std::string("missing key '") + key + "'");
    return obj.at(key);
}

double require_number(const json& obj, const char* key) {
    const json& v = require(obj, key);
    if (!v.is_number()) throw Error(ErrorKind::SchemaError, std::string("'") + key + "' must be a number");
    return v.get<double>();
}

std::string require_string(const json& v, const std::string& path) {
    if (!v.is_string()) throw Error(ErrorKind::SchemaError, "'" + path + "' must be an expression string");
    return v.get<std::string>();
}

bool allowed_in(const std::string& name, bool x, bool y, bool t, bool u) {
    if (name == "t") return t;
    if (name == "u") return u;
    if (name[0] == 'x') return x;
    if (name[0] == 'y') return y;
    return false;
}

expr::Expr parse_field(const json& v, const std::string& path, int dim, bool x, bool y, bool t, bool u) {
    const std::string source = require_string(v, path);
    expr::Expr e;
    try {
        e = expr::parse_expression(source, dim);
    } catch (const Error& err) {
        throw FieldError(ErrorKind::ParseError, path, err);
    }
    for (const auto& name : expr::variables(e)) {
        if (!allowed_in(name, x, y, t, u))
            throw FieldError(ErrorKind::ParseError, path,
                             Error(ErrorKind::UnknownVariable, "'" + name + "' is not allowed here"));
    }
    return e;
}

ConvexDomain parse_domain(const json& d, int dim) {
    if (!d.is_object()) throw Error(ErrorKind::SchemaError, "'domain' must be an object");
    const json& shape = require(d, "shape");
    if (shape == "interval") {
        const json& bounds = require(d, "bounds");
        if (!bounds.is_array() || bounds.size() != 2)
            throw Error(ErrorKind::SchemaError, "'domain.bounds' must be [lo, hi]");
        if (dim != 1) throw Error(ErrorKind::DimensionMismatch, "interval domain requires dim = 1");
        const double lo = bounds[0].get<double>();
        const double hi = bounds[1].get<double>();
        if (!(hi > lo)) throw Error(ErrorKind::SchemaError, "'domain.bounds' must satisfy lo < hi");
        return ConvexDomain::interval(lo, hi);
    }
    if (shape != "ball") throw Error(ErrorKind::SchemaError, "unsupported domain shape");
    const json& center = require(d, "center");
    if (!center.is_array()) throw Error(ErrorKind::SchemaError, "'domain.center' must be an array");
    if (static_cast<int>(center.size()) != dim)
        throw Error(ErrorKind::DimensionMismatch, "'domain.center' length differs from dim");
    Vec c(dim);
    for (int i = 0; i < dim; ++i) {
        if (!center[i].is_number()) throw Error(ErrorKind::SchemaError, "'domain.center' entries must be numbers");
        c[i] = center[i].get<double>();
    }
    return ConvexDomain(c, require_number(d, "radius"));
}

std::vector<expr::Expr> parse_vector(const json& v, const std::string& key, int dim) {
    if (!v.is_array()) throw Error(ErrorKind::SchemaError, "'" + key + "' must be an array");
    if (static_cast<int>(v.size()) != dim)
        throw Error(ErrorKind::DimensionMismatch, "'" + key + "' must have dim entries");
    std::vector<expr::Expr> out;
    for (int i = 0; i < dim; ++i)
        out.push_back(parse_field(v[i], key + "[" + std::to_string(i) + "]", dim, true, true, false, false));
    return out;
}

bool is_zero_constant(const expr::Expr& e) { return expr::is_constant(e) && expr::eval(e, {}) == 0.0; }

bool reads_x(const expr::Expr& e) {
    for (const auto& name : expr::variables(e))
        if (name[0] == 'x') return true;
    return false;
}

}  // namespace

bool TwoScaleProblem::coefficients_x_independent() const {
    for (const auto& row : sigma)
        for (const auto& e : row)
            if (reads_x(e)) return false;
    for (const auto& e : b)
        if (reads_x(e)) return false;
    for (const auto& e : c)
        if (reads_x(e)) return false;
    return true;
}

bool TwoScaleProblem::fast_drift_vanishes() const {
    return std::all_of(b.begin(), b.end(), is_zero_constant);
}

TwoScaleProblem load_problem(const json& config) {
    if (!config.is_object()) throw Error(ErrorKind::SchemaError, "problem config must be a JSON object");
    TwoScaleProblem p;
    const json& dim = require(config, "dim");
    if (!dim.is_number_integer() || dim.get<int>() < 1)
        throw Error(ErrorKind::SchemaError, "'dim' must be a positive integer");
    p.dim = dim.get<int>();
    const int d = p.dim;

    const json& sigma = require(config, "sigma");
    if (!sigma.is_array()) throw Error(ErrorKind::SchemaError, "'sigma' must be an array of arrays");
    if (static_cast<int>(sigma.size()) != d)
        throw Error(ErrorKind::DimensionMismatch, "'sigma' must have dim rows");
    for (int i = 0; i < d; ++i) {
        if (!sigma[i].is_array()) throw Error(ErrorKind::SchemaError, "'sigma' rows must be arrays");
        if (static_cast<int>(sigma[i].size()) != d)
            throw Error(ErrorKind::DimensionMismatch, "'sigma' must be dim x dim");
        std::vector<expr::Expr> row;
        for (int j = 0; j < d; ++j)
            row.push_back(parse_field(sigma[i][j], "sigma[" + std::to_string(i) + "][" + std::to_string(j) + "]",
                                      d, true, true, false, false));
        p.sigma.push_back(std::move(row));
    }
    p.b = parse_vector(require(config, "b"), "b", d);
    p.c = parse_vector(require(config, "c"), "c", d);
    p.domain = parse_domain(require(config, "domain"), d);
    p.f = parse_field(require(config, "f"), "f", d, true, false, false, true);
    p.g = parse_field(require(config, "g"), "g", d, true, false, false, true);
    p.l = parse_field(require(config, "l"), "l", d, true, false, false, false);
    p.h = parse_field(require(config, "h"), "h", d, true, false, true, false);

    p.mu = require_number(config, "mu");
    p.beta = require_number(config, "beta");
    if (!(p.beta < 0.0)) throw Error(ErrorKind::NonNegativeBeta, "beta must be strictly negative");
    p.growth_C = require_number(config, "growth_C");
    if (!(p.growth_C > 0.0)) throw Error(ErrorKind::SchemaError, "growth_C must be positive");
    p.growth_p = require_number(config, "growth_p");
    if (!(p.growth_p >= 1.0)) throw Error(ErrorKind::SchemaError, "growth_p must be at least 1");
    p.lambda_min = require_number(config, "lambda_min");
    if (!(p.lambda_min > 0.0)) throw Error(ErrorKind::SchemaError, "lambda_min must be positive");
    return p;
}

TwoScaleProblem load_problem_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::SchemaError, path.string() + ": " + e.what());
    }
    return load_problem(doc);
}

json problem_to_json(const TwoScaleProblem& p) {
    json j;
    j["dim"] = p.dim;
    json sigma = json::array();
    for (const auto& row : p.sigma) {
        json r = json::array();
        for (const auto& e : row) r.push_back(expr::to_string(e));
        sigma.push_back(r);
    }
    j["sigma"] = sigma;
    auto vec = [](const std::vector<expr::Expr>& v) {
        json a = json::array();
        for (const auto& e : v) a.push_back(expr::to_string(e));
        return a;
    };
    j["b"] = vec(p.b);
    j["c"] = vec(p.c);
    j["domain"] = {{"shape", "ball"},
                   {"center", std::vector<double>(p.domain.center().data(),
                                                  p.domain.center().data() + p.domain.center().size())},
                   {"radius", p.domain.radius()}};
    j["f"] = expr::to_string(p.f);
    j["g"] = expr::to_string(p.g);
    j["l"] = expr::to_string(p.l);
    j["h"] = expr::to_string(p.h);
    j["mu"] = p.mu;
    j["beta"] = p.beta;
    j["growth_C"] = p.growth_C;
    j["growth_p"] = p.growth_p;
    j["lambda_min"] = p.lambda_min;
    return j;
}

CompiledProblem::CompiledProblem(const TwoScaleProblem& p) : layout_{p.dim} {
    for (const auto& row : p.sigma)
        for (const auto& e : row) {
            sigma_.emplace_back(e, layout_);
            sigma_constant_ = sigma_constant_ && sigma_.back().is_constant();
        }
    for (const auto& e : p.b) {
        b_.emplace_back(e, layout_);
        b_zero_ = b_zero_ && b_.back().is_constant() && b_.back().constant_value() == 0.0;
    }
    for (const auto& e : p.c) {
        c_.emplace_back(e, layout_);
        c_zero_ = c_zero_ && c_.back().is_constant() && c_.back().constant_value() == 0.0;
    }
    f_ = expr::Program(p.f, layout_);
    g_ = expr::Program(p.g, layout_);
    l_ = expr::Program(p.l, layout_);
    h_ = expr::Program(p.h, layout_);
}

namespace {
std::vector<double> slots_for(const expr::SlotLayout& layout, const Vec& x, const Vec& y) {
    std::vector<double> s(static_cast<std::size_t>(layout.size()), 0.0);
    for (int i = 0; i < layout.dim; ++i) {
        s[layout.x(i)] = x[i];
        s[layout.y(i)] = y[i];
    }
    return s;
}
}  // namespace

Mat CompiledProblem::sigma_at(const Vec& x, const Vec& y) const {
    const auto s = slots_for(layout_, x, y);
    Mat m(dim(), dim());
    for (int i = 0; i < dim(); ++i)
        for (int j = 0; j < dim(); ++j) m(i, j) = sigma(i, j, s);
    return m;
}

Vec CompiledProblem::b_at(const Vec& x, const Vec& y) const {
    const auto s = slots_for(layout_, x, y);
    Vec v(dim());
    for (int i = 0; i < dim(); ++i) v[i] = b(i, s);
    return v;
}

Vec CompiledProblem::c_at(const Vec& x, const Vec& y) const {
    const auto s = slots_for(layout_, x, y);
    Vec v(dim());
    for (int i = 0; i < dim(); ++i) v[i] = c(i, s);
    return v;
}

bool ValidationReport::passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const AssumptionCheck& c) { return c.passed; });
}

ValidationReport validate_assumptions(const TwoScaleProblem& problem, std::size_t samples, std::uint64_t seed) {
    const CompiledProblem cp(problem);
    const int d = problem.dim;
    const auto& layout = cp.layout();
    const ConvexDomain& dom = problem.domain;
    constexpr double kSolutionRange = 10.0;
    constexpr double kLipschitzStep = 1e-4;

    ValidationReport r;
    r.samples = samples;
    r.seed = seed;
    r.min_ellipticity = std::numeric_limits<double>::infinity();
    r.f_monotonicity_defect = -std::numeric_limits<double>::infinity();
    r.g_monotonicity_defect = -std::numeric_limits<double>::infinity();
    r.obstacle_margin = std::numeric_limits<double>::infinity();

    std::vector<double> s(static_cast<std::size_t>(layout.size()), 0.0);
    std::vector<double> s2 = s;

    // All two-scale coefficients as one flat list of evaluators.
    auto coefficient_values = [&](std::span<const double> slots) {
        std::vector<double> out;
        out.reserve(static_cast<std::size_t>(d * d + 2 * d));
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) out.push_back(cp.sigma(i, j, slots));
        for (int i = 0; i < d; ++i) out.push_back(cp.b(i, slots));
        for (int i = 0; i < d; ++i) out.push_back(cp.c(i, slots));
        return out;
    };

    for (std::size_t k = 0; k < samples; ++k) {
        StreamRng rng(seed, k);
        // x uniform in the ball by rejection from the bounding box
        Vec x(d);
        for (int attempt = 0;; ++attempt) {
            for (int i = 0; i < d; ++i)
                x[i] = dom.center()[i] + dom.radius() * (2.0 * rng.uniform() - 1.0);
            if (dom.contains(x) || attempt > 64) break;
        }
        Vec y(d);
        for (int i = 0; i < d; ++i) y[i] = rng.uniform();
        const double u = kSolutionRange * (2.0 * rng.uniform() - 1.0);
        const double v = kSolutionRange * (2.0 * rng.uniform() - 1.0);

        try {
            for (int i = 0; i < d; ++i) {
                s[layout.x(i)] = x[i];
                s[layout.y(i)] = y[i];
            }
            s[layout.t()] = 0.0;
            s[layout.u()] = 0.0;

            const Mat sig = cp.sigma_at(x, y);
            const Mat a = sig * sig.transpose();
            const double lam = Eigen::SelfAdjointEigenSolver<Mat>(a, Eigen::EigenvaluesOnly).eigenvalues()[0];
            r.min_ellipticity = std::min(r.min_ellipticity, lam);

            const auto base = coefficient_values(s);
            for (int i = 0; i < d; ++i) {
                s2 = s;
                s2[layout.y(i)] += 1.0;
                const auto shifted = coefficient_values(s2);
                for (std::size_t q = 0; q < base.size(); ++q)
                    r.periodicity_defect = std::max(r.periodicity_defect, std::fabs(shifted[q] - base[q]));

                s2 = s;
                s2[layout.x(i)] += kLipschitzStep;
                const auto dx = coefficient_values(s2);
                s2 = s;
                s2[layout.y(i)] += kLipschitzStep;
                const auto dy = coefficient_values(s2);
                for (std::size_t q = 0; q < base.size(); ++q) {
                    r.lipschitz_x = std::max(r.lipschitz_x, std::fabs(dx[q] - base[q]) / kLipschitzStep);
                    r.lipschitz_y = std::max(r.lipschitz_y, std::fabs(dy[q] - base[q]) / kLipschitzStep);
                }
            }

            s[layout.u()] = u;
            const double fu = cp.f(s);
            const double gu = cp.g(s);
            s[layout.u()] = v;
            const double fv = cp.f(s);
            const double gv = cp.g(s);
            const double du = u - v;
            r.f_monotonicity_defect = std::max(r.f_monotonicity_defect, du * (fu - fv) - problem.mu * du * du);
            r.g_monotonicity_defect = std::max(r.g_monotonicity_defect, du * (gu - gv) - problem.beta * du * du);

            const double xnorm_p = std::pow(x.norm(), problem.growth_p);
            const double bound = problem.growth_C * (xnorm_p + u * u);
            if (bound > 0.0) {
                s[layout.u()] = u;
                r.f_growth_ratio = std::max(r.f_growth_ratio, std::fabs(fu) / bound);
                r.g_growth_ratio = std::max(r.g_growth_ratio, std::fabs(gu) / bound);
            }

            s[layout.u()] = 0.0;
            s[layout.t()] = 0.0;
            r.obstacle_margin = std::min(r.obstacle_margin, cp.l(s) - cp.h(s));
        } catch (const Error&) {
            ++r.evaluation_errors;
        }
    }
    if (samples == 0) {
        r.min_ellipticity = r.f_monotonicity_defect = r.g_monotonicity_defect = r.obstacle_margin = 0.0;
    }

    constexpr double kTol = 1e-9;
    r.checks = {
        {"ellipticity", r.min_ellipticity, problem.lambda_min, r.min_ellipticity >= problem.lambda_min},
        {"periodicity", r.periodicity_defect, kTol, r.periodicity_defect <= kTol},
        {"f monotonicity", r.f_monotonicity_defect, kTol, r.f_monotonicity_defect <= kTol},
        {"g monotonicity", r.g_monotonicity_defect, kTol, r.g_monotonicity_defect <= kTol},
        {"f growth", r.f_growth_ratio, 1.0, r.f_growth_ratio <= 1.0},
        {"g growth", r.g_growth_ratio, 1.0, r.g_growth_ratio <= 1.0},
        {"obstacle below terminal", r.obstacle_margin, -kTol, r.obstacle_margin >= -kTol},
        {"coefficient evaluation", static_cast<double>(r.evaluation_errors), 0.0, r.evaluation_errors == 0},
    };
    return r;
}

json to_json(const ValidationReport& r) {
    json checks = json::array();
    for (const auto& c : r.checks)
        checks.push_back({{"name", c.name}, {"value", c.value}, {"threshold", c.threshold}, {"passed", c.passed}});
    return {{"samples", r.samples},
            {"seed", r.seed},
            {"min_ellipticity", r.min_ellipticity},
            {"periodicity_defect", r.periodicity_defect},
            {"f_monotonicity_defect", r.f_monotonicity_defect},
            {"g_monotonicity_defect", r.g_monotonicity_defect},
            {"f_growth_ratio", r.f_growth_ratio},
            {"g_growth_ratio", r.g_growth_ratio},
            {"obstacle_margin", r.obstacle_margin},
            {"lipschitz_x", r.lipschitz_x},
            {"lipschitz_y", r.lipschitz_y},
            {"evaluation_errors", r.evaluation_errors},
            {"checks", checks},
            {"passed", r.passed()}};
}

}  // namespace homlab
