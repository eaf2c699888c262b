#include "homlab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "homlab/bsde.hpp"
#include "homlab/cell.hpp"
#include "homlab/error.hpp"
#include "homlab/homogenized.hpp"
#include "homlab/pde.hpp"
#include "homlab/random.hpp"
#include "homlab/sde.hpp"

namespace homlab {

using nlohmann::json;

nlohmann::json builtin_problem_json(const std::string& name) {
    if (name != "gibbs1d") throw Error(ErrorKind::ConfigError, "unknown built-in problem '" + name + "'");
    return json{
        {"dim", 1},
        {"sigma", {{"sqrt(2)"}}},
        {"b", {"2*pi*sin(2*pi*y1)"}},
        {"c", {"0"}},
        {"domain", {{"shape", "interval"}, {"bounds", {0.0, 1.0}}}},
        {"f", "-u"},
        {"g", "-u"},
        {"l", "x1*(1-x1) + 0.1"},
        {"h", "x1*(1-x1) + 0.1 - 0.05 - t"},
        {"mu", -1.0},
        {"beta", -1.0},
        {"growth_C", 50.0},
        {"growth_p", 1.0},
        {"lambda_min", 1.0},
    };
}

TwoScaleProblem builtin_problem(const std::string& name) { return load_problem(builtin_problem_json(name)); }

namespace {

template <typename T>
T get_or(const json& doc, const char* key, T fallback) {
    if (!doc.contains(key)) return fallback;
    try {
        return doc.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error(ErrorKind::ConfigError, std::string("'") + key + "' has the wrong type");
    }
}

std::string fmt(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json num_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double num_from(const json& v, double null_value) { return v.is_null() ? null_value : v.get<double>(); }

void say(const ExperimentConfig& c, const std::string& msg) {
    if (c.progress) c.progress(msg);
}

SolverOptions solver_options(const ExperimentConfig& c) {
    SolverOptions o;
    o.basis = c.basis;
    o.keep_paths = false;
    return o;
}

SimulationSpec base_spec(const ExperimentConfig& c) {
    SimulationSpec s;
    s.x0 = c.x0;
    s.horizon = c.t;
    s.record_steps = c.record_steps;
    s.paths = c.paths;
    s.threads = c.threads;
    return s;
}

std::uint64_t eps_seed(const ExperimentConfig& c, std::size_t i) { return mix_seed(c.seed, i + 1); }
std::uint64_t hom_seed(const ExperimentConfig& c) { return mix_seed(c.seed, 0); }

ReportRow row_from(const BsdeSolution& s, const PathBundle& b) {
    ReportRow r;
    r.epsilon = b.epsilon;
    r.n = s.n_penalty;
    r.dt = b.sim_dt;
    r.record_dt = b.dt;
    r.paths = b.paths;
    r.value = s.value;
    r.std_error = s.std_error;
    r.complementarity = s.diagnostics.complementarity;
    r.obstacle_violation = s.diagnostics.max_obstacle_violation;
    r.mean_terminal_k = s.diagnostics.mean_terminal_k;
    r.apriori = s.diagnostics.apriori;
    r.max_condition = s.diagnostics.max_condition;
    const MomentDiagnostics md = moment_diagnostics(b, 1.0);
    r.sup_moment = md.sup_moment;
    r.mean_g = md.mean_g;
    return r;
}

ReportRow failed_row(double eps, double n, const std::string& what) {
    ReportRow r;
    r.epsilon = eps;
    r.n = n;
    r.failed = true;
    r.error = what;
    return r;
}

std::vector<double> marginal(const PathBundle& b, int comp, std::size_t limit) {
    const std::size_t n = std::min(limit, b.paths);
    std::vector<double> out(n);
    for (std::size_t p = 0; p < n; ++p) out[p] = b.x(b.steps, p)[comp];
    return out;
}

ForwardLawReport forward_law(const PathBundle& eps_bundle, const PathBundle& hom, std::size_t ks_paths) {
    ForwardLawReport f;
    f.epsilon = eps_bundle.epsilon;
    for (int i = 0; i < eps_bundle.dim; ++i)
        f.ks.push_back(ks_distance(marginal(eps_bundle, i, ks_paths), marginal(hom, i, ks_paths)));
    const MomentDiagnostics a = moment_diagnostics(eps_bundle, 1.0);
    const MomentDiagnostics b = moment_diagnostics(hom, 1.0);
    f.mean_g_eps = a.mean_g;
    f.mean_g_eps_stderr = a.mean_g_stderr;
    f.mean_g_hom = b.mean_g;
    f.mean_g_hom_stderr = b.mean_g_stderr;
    f.mean_g_rel_diff = b.mean_g != 0.0 ? std::fabs(a.mean_g - b.mean_g) / std::fabs(b.mean_g) : 0.0;
    return f;
}

struct SweepParts {
    bool eps = true;
    bool n = true;
    bool forward = true;
};

double spread(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *lo > 0.0 ? (*hi - *lo) / *lo : std::numeric_limits<double>::infinity();
}

void add_check(ConvergenceReport& r, std::string name, bool passed, double value, double threshold) {
    r.checks.push_back({std::move(name), passed, value, threshold});
}

void eps_checks(ConvergenceReport& r) {
    std::vector<const ReportRow*> refl;
    for (const auto& row : r.rows)
        if (row.epsilon > 0.0 && std::isinf(row.n)) refl.push_back(&row);
    bool clean = true;
    for (const auto* row : refl) clean = clean && !row->failed && row->complementarity == 0.0 && row->obstacle_violation == 0.0;
    add_check(r, "reflected rows complementary and above obstacle", clean, 0.0, 0.0);
    if (!r.homogenized_value) return;
    const double u = *r.homogenized_value;
    const double su = r.homogenized_stderr.value_or(0.0);
    if (r.pde_value) {
        const double d = std::fabs(u - *r.pde_value);
        const double tol = 3.0 * su + 0.01;
        add_check(r, "homogenized bundle vs finite differences", d <= tol, d, tol);
    }
    if (refl.empty()) return;
    double worst = 0.0;
    bool mono = true;
    for (std::size_t i = 1; i < refl.size(); ++i) {
        const double prev = std::fabs(refl[i - 1]->value - u);
        const double cur = std::fabs(refl[i]->value - u);
        const double excess = cur - prev - refl[i]->std_error;
        worst = std::max(worst, excess);
        mono = mono && excess <= 0.0;
    }
    add_check(r, "gap nonincreasing in epsilon", mono, worst, 0.0);
    const ReportRow& last = *refl.back();
    const double gap = std::fabs(last.value - u);
    const double tol = std::max(3.0 * std::hypot(last.std_error, su), 0.02);
    add_check(r, "final gap to homogenized value", gap <= tol, gap, tol);
    if (r.pde_value) {
        const double gp = std::fabs(last.value - *r.pde_value);
        const double tp = std::max(3.0 * last.std_error, 0.02);
        add_check(r, "final gap to finite-difference value", gp <= tp, gp, tp);
    }
    if (refl.size() >= 2) {
        std::vector<double> sup, eg, ap;
        for (const auto* row : refl) {
            sup.push_back(row->sup_moment);
            eg.push_back(row->mean_g);
            ap.push_back(row->apriori);
        }
        const double s = std::max({spread(sup), spread(eg), spread(ap)});
        add_check(r, "moment and a-priori functionals stable across epsilon", s < 0.5, s, 0.5);
    }
}

void n_checks(ConvergenceReport& r) {
    bool mono = true;
    double envelope = 0.0, worst_drop = 0.0;
    bool any = false;
    std::vector<double> eps;
    for (const auto& row : r.rows)
        if (row.epsilon > 0.0 && std::find(eps.begin(), eps.end(), row.epsilon) == eps.end()) eps.push_back(row.epsilon);
    for (double e : eps) {
        std::vector<const ReportRow*> col;
        const ReportRow* refl = nullptr;
        for (const auto& row : r.rows) {
            if (row.epsilon != e || row.failed) continue;
            if (std::isinf(row.n)) refl = &row;
            else col.push_back(&row);
        }
        if (col.empty()) continue;
        any = true;
        for (std::size_t i = 1; i < col.size(); ++i) {
            const double drop = col[i - 1]->value - col[i]->value;
            worst_drop = std::max(worst_drop, drop);
            if (drop > 1e-12) mono = false;
        }
        if (refl) envelope = std::max(envelope, std::fabs(col.back()->value - refl->value));
    }
    if (!any) return;
    add_check(r, "penalized values nondecreasing in n", mono, worst_drop, 1e-12);
    add_check(r, "penalization gap envelope at largest n", envelope <= 0.005, envelope, 0.005);
}

void forward_checks(ConvergenceReport& r) {
    if (r.forward.empty()) return;
    const ForwardLawReport& small = r.forward.back();
    const double ks = *std::max_element(small.ks.begin(), small.ks.end());
    add_check(r, "KS distance at smallest epsilon", ks <= 0.05, ks, 0.05);
    add_check(r, "local time mean at smallest epsilon", small.mean_g_rel_diff <= 0.15, small.mean_g_rel_diff, 0.15);
    if (r.forward.size() >= 2) {
        const double big = *std::max_element(r.forward.front().ks.begin(), r.forward.front().ks.end());
        add_check(r, "KS distance not worse than at largest epsilon", ks <= big + 0.01, ks, big + 0.01);
    }
}

ConvergenceReport sweep(const ExperimentConfig& c, SweepParts parts) {
    for (std::size_t i = 1; i < c.epsilons.size(); ++i)
        if (!(c.epsilons[i] < c.epsilons[i - 1])) throw Error(ErrorKind::ConfigError, "epsilons must be descending");
    for (double e : c.epsilons)
        if (!(e > 0.0)) throw Error(ErrorKind::ConfigError, "epsilons must be positive");
    if (!std::is_sorted(c.n_list.begin(), c.n_list.end()))
        throw Error(ErrorKind::ConfigError, "n_list must be ascending");
    if (!(c.t > 0.0)) throw Error(ErrorKind::ConfigError, "probe time must be positive");
    if (c.x0.size() != c.problem.dim) throw Error(ErrorKind::DimensionMismatch, "probe point dimension");
    if (c.problem.domain.psi(c.x0) < -1e-12) throw Error(ErrorKind::ConfigError, "probe point outside the domain");

    ConvergenceReport r;
    r.problem = c.problem_name;
    r.t = c.t;
    r.x0.assign(c.x0.data(), c.x0.data() + c.x0.size());
    r.seed = c.seed;
    const SolverOptions opt = solver_options(c);

    CellOptions cell;
    cell.N = c.cell_N;
    // Raises CenteringViolated before any simulation.
    solve_cell(c.problem, c.x0, cell);

    const bool need_hom = parts.eps || (parts.forward && !c.epsilons.empty());
    std::optional<HomogenizedCoefficients> coeffs;
    std::optional<PathBundle> hom;
    if (need_hom) {
        say(c, "homogenized coefficients");
        HomogenizationOptions ho;
        ho.cell = cell;
        ho.boundary.paths = c.boundary_paths;
        ho.boundary.seed = mix_seed(c.seed, 1000);
        ho.boundary.threads = c.threads;
        coeffs = HomogenizedCoefficients::from_problem(c.problem, ho);
        SimulationSpec s = base_spec(c);
        s.dt = c.homogenized_dt;
        s.seed = hom_seed(c);
        say(c, "homogenized simulation");
        hom = simulate_homogenized(*coeffs, c.problem.domain, s);
    }
    if (parts.eps) {
        try {
            const BsdeSolution hs = solve_reflected(*hom, c.problem, opt);
            r.rows.push_back(row_from(hs, *hom));
            r.homogenized_value = hs.value;
            r.homogenized_stderr = hs.std_error;
        } catch (const Error& e) {
            r.rows.push_back(failed_row(0.0, kReflected, e.what()));
        }
        if (c.problem.dim == 1) {
            say(c, "finite-difference oracle");
            FdGrid g;
            g.x_lo = c.problem.domain.center()[0] - c.problem.domain.radius();
            g.x_hi = c.problem.domain.center()[0] + c.problem.domain.radius();
            g.M = c.fd_M;
            g.dtau = std::min(c.fd_dtau, g.dx());
            const Discrepancy d = compare_mc_vs_pde(c.problem, *coeffs, {r.homogenized_value.value_or(0.0), 0.0},
                                                    c.t, c.x0[0], g);
            r.pde_value = d.fd_value;
            r.pde_truncation = d.fd_truncation;
        }
    }

    std::vector<std::size_t> forward_idx;
    if (parts.forward && !c.epsilons.empty()) {
        forward_idx.push_back(0);
        if (c.epsilons.size() > 1) forward_idx.push_back(c.epsilons.size() - 1);
    }

    for (std::size_t i = 0; i < c.epsilons.size(); ++i) {
        const double eps = c.epsilons[i];
        say(c, "epsilon " + fmt(eps));
        try {
            SimulationSpec s = base_spec(c);
            s.dt = c.c_dt * eps * eps;
            s.seed = eps_seed(c, i);
            const PathBundle b = simulate_two_scale(c.problem, eps, s);
            if (std::find(forward_idx.begin(), forward_idx.end(), i) != forward_idx.end())
                r.forward.push_back(forward_law(b, *hom, c.ks_paths));
            r.rows.push_back(row_from(solve_reflected(b, c.problem, opt), b));
            if (parts.n) {
                for (double n : c.n_list) {
                    try {
                        r.rows.push_back(row_from(solve_penalized(b, c.problem, n, opt), b));
                    } catch (const Error& e) {
                        r.rows.push_back(failed_row(eps, n, e.what()));
                    }
                }
            }
        } catch (const Error& e) {
            r.rows.push_back(failed_row(eps, kReflected, e.what()));
        }
    }
    sort_rows(r.rows);
    if (r.homogenized_value) r.rate = fit_rate(r.rows, *r.homogenized_value);
    if (parts.eps) eps_checks(r);
    if (parts.n) n_checks(r);
    forward_checks(r);
    return r;
}

}  // namespace

ExperimentConfig load_experiment(const nlohmann::json& doc, const std::filesystem::path& base) {
    if (!doc.is_object()) throw Error(ErrorKind::ConfigError, "experiment config must be an object");
    ExperimentConfig c;
    const json& p = doc.contains("problem") ? doc.at("problem") : json("gibbs1d");
    if (p.is_object()) {
        c.problem = load_problem(p);
        c.problem_name = "inline";
    } else if (p.is_string()) {
        const std::string name = p.get<std::string>();
        c.problem_name = name;
        if (name == "gibbs1d") {
            c.problem = builtin_problem(name);
        } else {
            std::filesystem::path path(name);
            if (path.is_relative() && !base.empty()) path = base / path;
            c.problem = load_problem_file(path);
        }
    } else {
        throw Error(ErrorKind::ConfigError, "'problem' must be a name, a path or an object");
    }
    if (doc.contains("probe")) {
        const json& probe = doc.at("probe");
        c.t = get_or<double>(probe, "t", c.t);
        if (probe.contains("x0")) {
            const auto x = probe.at("x0").get<std::vector<double>>();
            c.x0 = Eigen::Map<const Vec>(x.data(), static_cast<Eigen::Index>(x.size()));
        }
    }
    if (c.x0.size() != c.problem.dim) {
        if (doc.contains("probe") && doc.at("probe").contains("x0"))
            throw Error(ErrorKind::DimensionMismatch, "probe x0 dimension differs from the problem");
        c.x0 = c.problem.domain.center();
    }
    c.epsilons = get_or(doc, "epsilons", c.epsilons);
    c.n_list = get_or(doc, "n_list", c.n_list);
    c.c_dt = get_or(doc, "c_dt", c.c_dt);
    c.homogenized_dt = get_or(doc, "homogenized_dt", c.homogenized_dt);
    c.record_steps = get_or(doc, "record_steps", c.record_steps);
    c.paths = get_or(doc, "paths", c.paths);
    c.ks_paths = get_or(doc, "ks_paths", c.ks_paths);
    if (doc.contains("basis")) c.basis = basis_from_json(doc.at("basis"));
    c.cell_N = get_or(doc, "cell_N", c.cell_N);
    c.boundary_paths = get_or(doc, "boundary_paths", c.boundary_paths);
    c.fd_M = get_or(doc, "fd_M", c.fd_M);
    c.fd_dtau = get_or(doc, "fd_dtau", c.fd_dtau);
    c.seed = get_or(doc, "seed", c.seed);
    c.threads = get_or(doc, "threads", c.threads);
    c.forward_law = get_or(doc, "forward_law", c.forward_law);
    if (doc.contains("output")) {
        std::filesystem::path out(doc.at("output").get<std::string>());
        if (out.is_relative() && !base.empty()) out = base / out;
        c.output = out;
    }
    c.formats = get_or(doc, "formats", c.formats);
    if (!(c.c_dt > 0.0) || !(c.homogenized_dt > 0.0)) throw Error(ErrorKind::ConfigError, "time steps must be positive");
    if (c.paths == 0) throw Error(ErrorKind::ConfigError, "paths must be positive");
    if (c.record_steps == 0) throw Error(ErrorKind::ConfigError, "record_steps must be positive");
    return c;
}

ExperimentConfig load_experiment_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::ConfigError, std::string("invalid JSON: ") + e.what());
    }
    return load_experiment(doc, path.parent_path());
}

bool ConvergenceReport::passed() const {
    for (const auto& row : rows)
        if (row.failed) return false;
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

ConvergenceReport run_eps_sweep(const ExperimentConfig& config) { return sweep(config, {true, false, false}); }

ConvergenceReport run_n_sweep(const ExperimentConfig& config) { return sweep(config, {false, true, false}); }

ConvergenceReport run_sweep(const ExperimentConfig& config) {
    return sweep(config, {true, !config.n_list.empty(), config.forward_law});
}

std::vector<ForwardLawReport> compare_forward_laws(const ExperimentConfig& config) {
    ExperimentConfig c = config;
    c.paths = config.ks_paths;
    c.n_list.clear();
    if (c.epsilons.size() > 2) c.epsilons = {config.epsilons.front(), config.epsilons.back()};
    // Seeds follow the position in the original list so results match run_sweep.
    CellOptions cell;
    cell.N = c.cell_N;
    HomogenizationOptions ho;
    ho.cell = cell;
    ho.boundary.paths = c.boundary_paths;
    ho.boundary.seed = mix_seed(c.seed, 1000);
    ho.boundary.threads = c.threads;
    const auto coeffs = HomogenizedCoefficients::from_problem(c.problem, ho);
    SimulationSpec s = base_spec(c);
    s.dt = c.homogenized_dt;
    s.seed = hom_seed(c);
    const PathBundle hom = simulate_homogenized(coeffs, c.problem.domain, s);
    std::vector<ForwardLawReport> out;
    for (std::size_t j = 0; j < c.epsilons.size(); ++j) {
        const std::size_t i = j == 0 ? 0 : config.epsilons.size() - 1;
        SimulationSpec se = base_spec(c);
        se.dt = c.c_dt * c.epsilons[j] * c.epsilons[j];
        se.seed = eps_seed(config, i);
        out.push_back(forward_law(simulate_two_scale(c.problem, c.epsilons[j], se), hom, c.ks_paths));
    }
    return out;
}

double ks_distance(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw Error(ErrorKind::ConfigError, "KS distance needs two non-empty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == v) ++i;
        while (j < b.size() && b[j] == v) ++j;
        d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

RateFit fit_rate(const std::vector<ReportRow>& rows, double reference) {
    std::vector<double> xs, ys;
    for (const auto& r : rows) {
        if (r.failed || !(r.epsilon > 0.0) || !std::isinf(r.n)) continue;
        const double err = std::fabs(r.value - reference);
        if (!(err > 0.0)) continue;
        xs.push_back(std::log(r.epsilon));
        ys.push_back(std::log(err));
    }
    RateFit fit;
    fit.points = xs.size();
    if (xs.size() < 2) return fit;
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    if (xs.size() > 2) {
        double rss = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double e = ys[i] - fit.intercept - fit.slope * xs[i];
            rss += e * e;
        }
        fit.slope_stderr = std::sqrt(rss / (n - 2.0) / sxx);
    }
    return fit;
}

void sort_rows(std::vector<ReportRow>& rows) {
    // homogenized rows (epsilon = 0) sort last under epsilon descending
    std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
        if (a.epsilon != b.epsilon) return a.epsilon > b.epsilon;
        return a.n < b.n;
    });
}

nlohmann::json to_json(const ConvergenceReport& r) {
    json rows = json::array();
    for (const auto& row : r.rows) {
        json j{{"epsilon", row.epsilon},
               {"n", num_or_null(row.n)},
               {"dt", row.dt},
               {"record_dt", row.record_dt},
               {"paths", row.paths},
               {"value", row.value},
               {"stderr", row.std_error},
               {"complementarity", row.complementarity},
               {"obstacle_violation", row.obstacle_violation},
               {"mean_terminal_K", row.mean_terminal_k},
               {"apriori", row.apriori},
               {"sup_moment", row.sup_moment},
               {"mean_G", row.mean_g},
               {"max_condition", row.max_condition},
               {"failed", row.failed}};
        if (row.failed) j["error"] = row.error;
        rows.push_back(std::move(j));
    }
    json forward = json::array();
    for (const auto& f : r.forward)
        forward.push_back({{"epsilon", f.epsilon},
                           {"ks", f.ks},
                           {"mean_G_eps", f.mean_g_eps},
                           {"mean_G_eps_stderr", f.mean_g_eps_stderr},
                           {"mean_G_hom", f.mean_g_hom},
                           {"mean_G_hom_stderr", f.mean_g_hom_stderr},
                           {"mean_G_rel_diff", f.mean_g_rel_diff}});
    json checks = json::array();
    for (const auto& c : r.checks)
        checks.push_back({{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"threshold", c.threshold}});
    auto opt = [](const std::optional<double>& v) { return v ? num_or_null(*v) : json(nullptr); };
    return json{{"problem", r.problem},
                {"probe", {{"t", r.t}, {"x0", r.x0}}},
                {"seed", r.seed},
                {"rows", rows},
                {"homogenized", {{"value", opt(r.homogenized_value)}, {"stderr", opt(r.homogenized_stderr)}}},
                {"pde", {{"value", opt(r.pde_value)}, {"truncation", opt(r.pde_truncation)}}},
                {"rate",
                 {{"slope", num_or_null(r.rate.slope)},
                  {"slope_stderr", num_or_null(r.rate.slope_stderr)},
                  {"intercept", num_or_null(r.rate.intercept)},
                  {"points", r.rate.points}}},
                {"forward_law", forward},
                {"checks", checks},
                {"passed", r.passed()}};
}

ConvergenceReport report_from_json(const nlohmann::json& doc) {
    ConvergenceReport r;
    try {
        r.problem = doc.at("problem").get<std::string>();
        r.t = doc.at("probe").at("t").get<double>();
        r.x0 = doc.at("probe").at("x0").get<std::vector<double>>();
        r.seed = doc.at("seed").get<std::uint64_t>();
        for (const auto& j : doc.at("rows")) {
            ReportRow row;
            row.epsilon = j.at("epsilon").get<double>();
            row.n = num_from(j.at("n"), kReflected);
            row.dt = j.at("dt").get<double>();
            row.record_dt = j.at("record_dt").get<double>();
            row.paths = j.at("paths").get<std::size_t>();
            row.value = j.at("value").get<double>();
            row.std_error = j.at("stderr").get<double>();
            row.complementarity = j.at("complementarity").get<double>();
            row.obstacle_violation = j.at("obstacle_violation").get<double>();
            row.mean_terminal_k = j.at("mean_terminal_K").get<double>();
            row.apriori = j.at("apriori").get<double>();
            row.sup_moment = j.at("sup_moment").get<double>();
            row.mean_g = j.at("mean_G").get<double>();
            row.max_condition = j.at("max_condition").get<double>();
            row.failed = j.at("failed").get<bool>();
            if (j.contains("error")) row.error = j.at("error").get<std::string>();
            r.rows.push_back(std::move(row));
        }
        auto opt = [](const json& v) -> std::optional<double> {
            if (v.is_null()) return std::nullopt;
            return v.get<double>();
        };
        r.homogenized_value = opt(doc.at("homogenized").at("value"));
        r.homogenized_stderr = opt(doc.at("homogenized").at("stderr"));
        r.pde_value = opt(doc.at("pde").at("value"));
        r.pde_truncation = opt(doc.at("pde").at("truncation"));
        const json& rate = doc.at("rate");
        const double nan = std::numeric_limits<double>::quiet_NaN();
        r.rate.slope = num_from(rate.at("slope"), nan);
        r.rate.slope_stderr = num_from(rate.at("slope_stderr"), nan);
        r.rate.intercept = num_from(rate.at("intercept"), nan);
        r.rate.points = rate.at("points").get<std::size_t>();
        for (const auto& j : doc.at("forward_law")) {
            ForwardLawReport f;
            f.epsilon = j.at("epsilon").get<double>();
            f.ks = j.at("ks").get<std::vector<double>>();
            f.mean_g_eps = j.at("mean_G_eps").get<double>();
            f.mean_g_eps_stderr = j.at("mean_G_eps_stderr").get<double>();
            f.mean_g_hom = j.at("mean_G_hom").get<double>();
            f.mean_g_hom_stderr = j.at("mean_G_hom_stderr").get<double>();
            f.mean_g_rel_diff = j.at("mean_G_rel_diff").get<double>();
            r.forward.push_back(std::move(f));
        }
        for (const auto& j : doc.at("checks"))
            r.checks.push_back({j.at("name").get<std::string>(), j.at("passed").get<bool>(),
                                j.at("value").get<double>(), j.at("threshold").get<double>()});
    } catch (const json::exception& e) {
        throw Error(ErrorKind::SchemaError, std::string("malformed report: ") + e.what());
    }
    return r;
}

std::string report_csv(const ConvergenceReport& r) {
    std::ostringstream out;
    out << "epsilon,n,dt,record_dt,paths,value,stderr,complementarity,obstacle_violation,mean_terminal_K,apriori,"
           "sup_moment,mean_G,max_condition,failed\n";
    for (const auto& row : r.rows) {
        out << fmt(row.epsilon) << ',' << fmt(row.n) << ',' << fmt(row.dt) << ',' << fmt(row.record_dt) << ','
            << row.paths << ',' << fmt(row.value) << ',' << fmt(row.std_error) << ',' << fmt(row.complementarity)
            << ',' << fmt(row.obstacle_violation) << ',' << fmt(row.mean_terminal_k) << ',' << fmt(row.apriori)
            << ',' << fmt(row.sup_moment) << ',' << fmt(row.mean_g) << ',' << fmt(row.max_condition) << ','
            << (row.failed ? 1 : 0) << '\n';
    }
    return out.str();
}

std::string report_plotdata(const ConvergenceReport& r) {
    std::ostringstream out;
    out << "# log_epsilon log_abs_error\n";
    if (!r.homogenized_value) return out.str();
    for (const auto& row : r.rows) {
        if (row.failed || !(row.epsilon > 0.0) || !std::isinf(row.n)) continue;
        const double err = std::fabs(row.value - *r.homogenized_value);
        if (!(err > 0.0)) continue;
        out << fmt(std::log(row.epsilon)) << ' ' << fmt(std::log(err)) << '\n';
    }
    return out.str();
}

std::string report_json(const ConvergenceReport& r) { return to_json(r).dump(2) + "\n"; }

std::filesystem::path emit_report(const ConvergenceReport& report, const std::string& format,
                                  const std::filesystem::path& dir) {
    std::string body;
    std::string ext = format;
    if (format == "csv") body = report_csv(report);
    else if (format == "json") body = report_json(report);
    else if (format == "plotdata") {
        body = report_plotdata(report);
        ext = "dat";
    } else {
        throw Error(ErrorKind::ConfigError, "unknown report format '" + format + "'");
    }
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());
    const auto path = dir / ("report." + ext);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out << body;
    if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
    return path;
}

}  // namespace homlab
