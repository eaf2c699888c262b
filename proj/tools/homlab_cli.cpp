#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "homlab/bsde.hpp"
#include "homlab/cell.hpp"
#include "homlab/error.hpp"
#include "homlab/harness.hpp"
#include "homlab/homogenized.hpp"
#include "homlab/pde.hpp"
#include "homlab/problem.hpp"
#include "homlab/sde.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace homlab;

namespace {

struct Common {
    std::uint64_t seed = 1;
    std::string out;
    int threads = 1;
    std::string format = "json";
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--seed", c.seed, "Random seed");
    app->add_option("--out", c.out, "Output directory (stdout when omitted)");
    app->add_option("--threads", c.threads, "Worker threads; results do not depend on it")->check(CLI::PositiveNumber);
    app->add_option("--format", c.format, "Output format")->check(CLI::IsMember({"json", "csv", "plotdata"}));
}

TwoScaleProblem problem_from(const std::string& config) {
    if (config == "gibbs1d") return builtin_problem(config);
    return load_problem_file(config);
}

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_file(const fs::path& path, const std::string& body) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out << body;
}

// JSON to stdout, or <name>.json plus an optional <name>.csv under --out.
void emit(const Common& c, const std::string& name, const json& doc, const std::string& csv = {}) {
    if (c.out.empty()) {
        if (c.format == "csv" && !csv.empty()) std::cout << csv;
        else std::cout << doc.dump(2) << '\n';
        return;
    }
    write_file(fs::path(c.out) / (name + ".json"), doc.dump(2) + "\n");
    if (!csv.empty()) write_file(fs::path(c.out) / (name + ".csv"), csv);
}

json matrix_json(const Mat& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        rows.push_back(r);
    }
    return rows;
}

json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vec parse_point(const std::vector<double>& v, int dim, const char* what) {
    if (static_cast<int>(v.size()) != dim)
        throw Error(ErrorKind::DimensionMismatch, std::string(what) + " needs " + std::to_string(dim) + " values");
    return Eigen::Map<const Vec>(v.data(), dim);
}

int run_validate(const std::string& config, std::size_t samples, const Common& c) {
    const TwoScaleProblem p = problem_from(config);
    const ValidationReport r = validate_assumptions(p, samples, c.seed);
    std::string csv = "check,value,threshold,passed\n";
    for (const auto& chk : r.checks)
        csv += chk.name + "," + num(chk.value) + "," + num(chk.threshold) + "," + (chk.passed ? "1" : "0") + "\n";
    emit(c, "validate", to_json(r), csv);
    return r.passed() ? 0 : 2;
}

int run_cell(const std::string& config, const std::vector<double>& xv, int N, std::size_t boundary_paths,
             const Common& c) {
    const TwoScaleProblem p = problem_from(config);
    const Vec x = parse_point(xv, p.dim, "--x");
    CellOptions opt;
    opt.N = N;
    CellSolution cell = solve_cell(p, x, opt);
    json gamma = nullptr;
    if (std::fabs(p.domain.psi(x)) < 1e-12) {
        BoundarySimulation bs;
        bs.paths = boundary_paths;
        bs.seed = c.seed;
        bs.threads = c.threads;
        const BoundaryTensor bt = boundary_tensor(p, x, cell, bs);
        gamma = {{"value", vec_json(bt.gamma0)}, {"stderr", vec_json(bt.std_error)}, {"hits", bt.hits}};
    }
    json doc{{"x", vec_json(x)},
             {"N", N},
             {"m", vec_json(cell.m)},
             {"b_hat", matrix_json(cell.b_hat)},
             {"A0_bar", matrix_json(cell.A0_bar)},
             {"C0_bar", vec_json(cell.C0_bar)},
             {"gamma0", gamma},
             {"diagnostics",
              {{"centering_residual", vec_json(cell.centering_residual)},
               {"density_residual", cell.density_residual},
               {"poisson_residual", cell.poisson_residual},
               {"corrector_centering", cell.corrector_centering},
               {"mass_defect", cell.l1_mass_defect}}}};
    const TorusGrid grid(cell.d_cell, N);
    std::ostringstream csv;
    csv << (cell.d_cell == 1 ? "y1" : "y1,y2") << ",m";
    for (int k = 0; k < cell.d_cell; ++k) csv << ",b_hat" << k + 1;
    csv << '\n';
    for (std::size_t j = 0; j < grid.nodes(); ++j) {
        const Vec y = grid.point(j);
        for (int i = 0; i < cell.d_cell; ++i) csv << (i ? "," : "") << num(y[i]);
        csv << ',' << num(cell.m[static_cast<Eigen::Index>(j)]);
        for (int k = 0; k < cell.d_cell; ++k) csv << ',' << num(cell.b_hat(static_cast<Eigen::Index>(j), k));
        csv << '\n';
    }
    emit(c, "cell", doc, csv.str());
    return 0;
}

struct SimArgs {
    double eps = 0.25;
    std::vector<double> x0;
    double t = 0.1;
    double dt = 0.0;
    double c_dt = 0.002;
    std::size_t steps = 50;
    std::size_t paths = 10000;
    bool homogenized = false;
    int N = 512;
};

PathBundle simulate(const TwoScaleProblem& p, const SimArgs& a, const Common& c) {
    SimulationSpec s;
    s.x0 = a.x0.empty() ? p.domain.center() : parse_point(a.x0, p.dim, "--x0");
    s.horizon = a.t;
    s.record_steps = a.steps;
    s.paths = a.paths;
    s.seed = c.seed;
    s.threads = c.threads;
    if (a.homogenized) {
        HomogenizationOptions ho;
        ho.cell.N = a.N;
        ho.boundary.seed = c.seed;
        ho.boundary.threads = c.threads;
        const auto coeffs = HomogenizedCoefficients::from_problem(p, ho);
        s.dt = a.dt > 0.0 ? a.dt : 1e-5;
        return simulate_homogenized(coeffs, p.domain, s);
    }
    s.dt = a.dt > 0.0 ? a.dt : a.c_dt * a.eps * a.eps;
    return simulate_two_scale(p, a.eps, s);
}

void add_sim_options(CLI::App* app, SimArgs& a) {
    app->add_option("--eps", a.eps, "Scale epsilon")->check(CLI::PositiveNumber);
    app->add_option("--x0", a.x0, "Start point");
    app->add_option("--t", a.t, "Horizon")->check(CLI::PositiveNumber);
    app->add_option("--dt", a.dt, "Simulation step (default c_dt * eps^2)");
    app->add_option("--c-dt", a.c_dt, "Step factor c_dt")->check(CLI::PositiveNumber);
    app->add_option("--steps", a.steps, "Record steps")->check(CLI::PositiveNumber);
    app->add_option("--paths", a.paths, "Paths")->check(CLI::PositiveNumber);
    app->add_flag("--homogenized", a.homogenized, "Simulate the homogenized SDE instead");
    app->add_option("--N", a.N, "Cell resolution for the homogenized coefficients");
}

int run_sde(const std::string& config, const SimArgs& a, double p_moment, const Common& c) {
    const TwoScaleProblem p = problem_from(config);
    const PathBundle b = simulate(p, a, c);
    const MomentDiagnostics md = moment_diagnostics(b, p_moment);
    json doc{{"epsilon", b.epsilon},
             {"dt", b.sim_dt},
             {"record_dt", b.dt},
             {"steps", b.steps},
             {"paths", b.paths},
             {"EG", md.mean_g},
             {"EG_stderr", md.mean_g_stderr},
             {"moments", {{"p", p_moment}, {"sup_moment", md.sup_moment}, {"stderr", md.sup_moment_stderr}}}};
    std::ostringstream csv;
    csv << "path,k,t";
    for (int i = 0; i < b.dim; ++i) csv << ",x" << i + 1;
    csv << ",G\n";
    for (std::size_t q = 0; q < std::min<std::size_t>(10, b.paths); ++q) {
        double g = 0.0;
        for (std::size_t k = 0; k <= b.steps; ++k) {
            if (k > 0) g += b.dg(k - 1, q);
            csv << q << ',' << k << ',' << num(b.time(k));
            for (double v : b.x(k, q)) csv << ',' << num(v);
            csv << ',' << num(g) << '\n';
        }
    }
    emit(c, "sde", doc, csv.str());
    return 0;
}

int run_solve(const std::string& config, const SimArgs& a, const std::string& scheme, double n, int degree, bool psi,
              const std::string& basis_kind, int bins, const Common& c) {
    const TwoScaleProblem p = problem_from(config);
    const PathBundle b = simulate(p, a, c);
    SolverOptions opt;
    opt.basis.kind = basis_kind == "local" ? BasisKind::Local : BasisKind::Polynomial;
    opt.basis.degree = degree;
    opt.basis.with_psi = psi;
    opt.basis.bins = bins;
    const BsdeSolution s = scheme == "reflected" ? solve_reflected(b, p, opt) : solve_penalized(b, p, n, opt);
    std::ostringstream csv;
    csv << "k,mean_Y,mean_K,violation\n";
    const auto& d = s.diagnostics;
    for (std::size_t k = 0; k < d.mean_y.size(); ++k)
        csv << k << ',' << num(d.mean_y[k]) << ',' << num(d.mean_k[k]) << ',' << num(d.violation[k]) << '\n';
    emit(c, "solve", to_json(s), csv.str());
    return 0;
}

int run_oracle(const std::string& config, double t, const std::vector<double>& x0v, int M, double dtau, int N,
               const Common& c) {
    const TwoScaleProblem p = problem_from(config);
    if (p.dim != 1) throw Error(ErrorKind::DimensionMismatch, "the finite-difference oracle is one-dimensional");
    HomogenizationOptions ho;
    ho.cell.N = N;
    ho.boundary.seed = c.seed;
    ho.boundary.threads = c.threads;
    const auto coeffs = HomogenizedCoefficients::from_problem(p, ho);
    FdGrid g;
    g.x_lo = p.domain.center()[0] - p.domain.radius();
    g.x_hi = p.domain.center()[0] + p.domain.radius();
    g.M = M;
    g.dtau = std::min(dtau, g.dx());
    g.horizon = t;
    const FdSolution sol = solve_obstacle_pde_1d(homogenized_fd_data(p, coeffs, t), g);
    json doc{{"t", t},
             {"M", M},
             {"dtau", g.dtau},
             {"time_steps", sol.time_steps},
             {"sor_iterations", sol.sor_iterations},
             {"max_complementarity", sol.max_complementarity},
             {"min_margin", sol.min_margin},
             {"A0_bar", coeffs.A0_bar(std::span<const double>(&g.x_lo, 1))(0, 0)},
             {"gamma0", coeffs.gamma_table()}};
    if (!x0v.empty()) doc["u_x0"] = {{"x0", x0v[0]}, {"u", sol.at(x0v[0])}};
    std::ostringstream csv;
    csv << "x,u,h,active\n";
    for (std::size_t i = 0; i < sol.x.size(); ++i)
        csv << num(sol.x[i]) << ',' << num(sol.u[i]) << ',' << num(sol.obstacle[i]) << ',' << (sol.active[i] ? 1 : 0)
            << '\n';
    emit(c, "oracle", doc, csv.str());
    return 0;
}

int run_sweep_cmd(const std::string& config, const Common& c, bool quiet, const std::vector<std::string>& cli_formats,
                  bool threads_set, bool seed_set) {
    ExperimentConfig e = load_experiment_file(config);
    if (threads_set) e.threads = c.threads;
    if (seed_set) e.seed = c.seed;
    if (!c.out.empty()) e.output = c.out;
    if (!cli_formats.empty()) e.formats = cli_formats;
    if (!quiet) e.progress = [](const std::string& m) { std::cerr << "[sweep] " << m << std::endl; };
    const ConvergenceReport r = run_sweep(e);
    for (const auto& f : e.formats) {
        const fs::path path = emit_report(r, f, e.output);
        if (!quiet) std::cerr << "[sweep] wrote " << path.string() << std::endl;
    }
    for (const auto& chk : r.checks)
        std::cout << (chk.passed ? "PASS " : "FAIL ") << chk.name << " value=" << num(chk.value)
                  << " threshold=" << num(chk.threshold) << '\n';
    return 0;
}

int run_report(const std::string& in_path, const Common& c) {
    std::ifstream in(in_path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + in_path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::SchemaError, std::string("invalid JSON: ") + e.what());
    }
    const ConvergenceReport r = report_from_json(doc);
    if (!c.out.empty()) {
        std::cout << emit_report(r, c.format, c.out).string() << '\n';
        return 0;
    }
    if (c.format == "csv") std::cout << report_csv(r);
    else if (c.format == "plotdata") std::cout << report_plotdata(r);
    else std::cout << report_json(r);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Homogenization laboratory for reflected two-scale diffusions and reflected BSDEs"};
    app.require_subcommand(1);
    Common common;

    std::string config;
    auto* validate = app.add_subcommand("validate", "Check the structural assumptions of a problem");
    std::size_t samples = 10000;
    validate->add_option("--config", config, "Problem JSON or built-in name")->required();
    validate->add_option("--samples", samples, "Random samples")->check(CLI::PositiveNumber);
    add_common(validate, common);

    auto* cell = app.add_subcommand("cell", "Solve the cell problem at a frozen point");
    std::vector<double> xv;
    int N = 512;
    std::size_t boundary_paths = 2000;
    cell->add_option("--config", config, "Problem JSON or built-in name")->required();
    cell->add_option("--x", xv, "Frozen slow point")->required();
    cell->add_option("--N", N, "Grid resolution per axis");
    cell->add_option("--boundary-paths", boundary_paths, "Paths for the boundary tensor at boundary points");
    add_common(cell, common);

    SimArgs sim;
    double p_moment = 1.0;
    auto* sde = app.add_subcommand("sde", "Simulate the reflected two-scale or homogenized SDE");
    sde->add_option("--config", config, "Problem JSON or built-in name")->required();
    add_sim_options(sde, sim);
    sde->add_option("--p", p_moment, "Moment order")->check(CLI::PositiveNumber);
    add_common(sde, common);

    auto* solve = app.add_subcommand("solve", "Solve the reflected or penalized BSDE on a fresh bundle");
    std::string scheme = "reflected", basis_kind = "polynomial";
    double n = 64.0;
    int degree = 4, bins = 32;
    bool psi = true;
    solve->add_option("--config", config, "Problem JSON or built-in name")->required();
    solve->add_option("--scheme", scheme, "Backward scheme")->check(CLI::IsMember({"reflected", "penalized"}));
    solve->add_option("--n", n, "Penalty parameter")->check(CLI::NonNegativeNumber);
    solve->add_option("--basis", basis_kind, "Regression basis")->check(CLI::IsMember({"polynomial", "local"}));
    solve->add_option("--degree", degree, "Polynomial degree");
    solve->add_option("--psi", psi, "Add the psi column");
    solve->add_option("--bins", bins, "Bins of the local basis");
    add_sim_options(solve, sim);
    add_common(solve, common);

    auto* sweep = app.add_subcommand("sweep", "Run an epsilon/n sweep from an experiment config");
    bool quiet = false;
    std::vector<std::string> formats;
    sweep->add_option("--config", config, "Experiment JSON")->required();
    sweep->add_flag("--quiet", quiet, "No progress output");
    add_common(sweep, common);
    sweep->add_option("--formats", formats, "Report formats to write")
        ->check(CLI::IsMember({"json", "csv", "plotdata"}));

    auto* oracle = app.add_subcommand("oracle", "Finite-difference solution of the homogenized obstacle problem");
    double ot = 0.1, dtau = 1e-5;
    int M = 200;
    std::vector<double> ox;
    oracle->add_option("--config", config, "Problem JSON or built-in name")->required();
    oracle->add_option("--t", ot, "Horizon")->check(CLI::PositiveNumber);
    oracle->add_option("--x0", ox, "Probe point for the summary");
    oracle->add_option("--M", M, "Intervals");
    oracle->add_option("--dtau", dtau, "Time step")->check(CLI::PositiveNumber);
    oracle->add_option("--N", N, "Cell resolution");
    add_common(oracle, common);

    auto* report = app.add_subcommand("report", "Re-emit a JSON report in another format");
    std::string in_path;
    report->add_option("--in", in_path, "Report JSON")->required();
    add_common(report, common);

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) return run_validate(config, samples, common);
        if (cell->parsed()) return run_cell(config, xv, N, boundary_paths, common);
        if (sde->parsed()) return run_sde(config, sim, p_moment, common);
        if (solve->parsed()) return run_solve(config, sim, scheme, n, degree, psi, basis_kind, bins, common);
        if (sweep->parsed())
            return run_sweep_cmd(config, common, quiet, formats, sweep->count("--threads") > 0,
                                 sweep->count("--seed") > 0);
        if (oracle->parsed()) return run_oracle(config, ot, ox, M, dtau, N, common);
        if (report->parsed()) return run_report(in_path, common);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return is_validation_error(e.kind()) ? 2 : 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
