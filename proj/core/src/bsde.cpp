#include "homlab/bsde.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "homlab/error.hpp"

namespace homlab {

namespace {

enum class Scheme { Penalized, Reflected };

bool shared_start(const PathBundle& b) {
    for (std::size_t p = 1; p < b.paths; ++p)
        for (int i = 0; i < b.dim; ++i)
            if (b.x(0, p)[i] != b.x(0, 0)[i]) return false;
    return true;
}

BsdeSolution solve(const PathBundle& bundle, const TwoScaleProblem& problem, Scheme scheme, double n,
                   const SolverOptions& opt) {
    if (bundle.dim != problem.dim) throw Error(ErrorKind::DimensionMismatch, "bundle and problem dimensions differ");
    if (bundle.paths == 0 || bundle.steps == 0) throw Error(ErrorKind::ConfigError, "empty path bundle");
    if (scheme == Scheme::Penalized && !(n >= 0.0))
        throw Error(ErrorKind::ConfigError, "penalty parameter must be non-negative");

    const std::size_t P = bundle.paths;
    const std::size_t K = bundle.steps;
    const int d = bundle.dim;
    const double dt = bundle.dt;
    const CompiledProblem cp(problem);
    const auto& layout = cp.layout();
    std::vector<double> slots(static_cast<std::size_t>(layout.size()), 0.0);
    auto load_x = [&](std::span<const double> x) {
        for (int i = 0; i < d; ++i) slots[layout.x(i)] = x[i];
    };

    BsdeSolution sol;
    sol.scheme = scheme == Scheme::Reflected ? "reflected" : "penalized";
    sol.n_penalty = scheme == Scheme::Reflected ? std::numeric_limits<double>::infinity() : n;
    sol.paths = P;
    sol.steps = K;
    sol.dim = d;
    if (opt.keep_paths) {
        sol.Y.assign((K + 1) * P, 0.0);
        sol.K.assign((K + 1) * P, 0.0);
        if (opt.estimate_z) sol.Z.assign(K * P * d, 0.0);
    }
    auto& diag = sol.diagnostics;
    diag.mean_y.assign(K + 1, 0.0);
    diag.mean_k.assign(K + 1, 0.0);
    diag.violation.assign(K + 1, 0.0);

    std::vector<double> next(P), cur(P), target(P), fitted(P), hk(P);
    std::vector<double> sup_y2(P), sum_z2(P, 0.0), sum_yg(P, 0.0), k_total(P, 0.0), comp(P, 0.0);
    // Pathwise cash flow l + sum(f dt + g dG + dK). With a constant in the basis its
    // mean is Y0 exactly, and its spread gives the standard error.
    std::vector<double> cash(P);
    std::vector<double> mean_dk(K, 0.0);
    std::vector<double> dk_store;
    if (opt.keep_paths) dk_store.assign(K * P, 0.0);

    // terminal condition
    slots[layout.t()] = bundle.horizon;
    for (std::size_t p = 0; p < P; ++p) {
        load_x(bundle.x(K, p));
        next[p] = cp.l(slots);
        const double h = cp.h(slots);
        if (h > next[p] + 1e-12)
            throw Error(ErrorKind::ObstacleInconsistent, "obstacle exceeds the terminal value at the horizon");
        sup_y2[p] = next[p] * next[p];
        cash[p] = next[p];
    }
    if (opt.keep_paths) std::copy(next.begin(), next.end(), sol.Y.begin() + static_cast<std::ptrdiff_t>(K * P));
    {
        double s = 0.0;
        for (double v : next) s += v;
        diag.mean_y[K] = s / static_cast<double>(P);
    }

    const bool shared0 = shared_start(bundle);
    const double ndt = n * dt;
    std::vector<double> zt(P), zd(P * d * d), zn(P * d);
    std::array<double, 3> mean_dm{0.0, 0.0, 0.0};

    for (std::size_t kk = K; kk-- > 0;) {
        const double tk = bundle.time(kk);
        for (std::size_t p = 0; p < P; ++p) {
            const auto xk = bundle.x(kk, p);
            load_x(xk);
            slots[layout.t()] = tk;
            slots[layout.u()] = next[p];
            hk[p] = cp.h(slots);
            double v = next[p] + cp.f(slots) * dt;
            const double dg = bundle.dg(kk, p);
            if (dg != 0.0) {
                load_x(bundle.x(kk + 1, p));
                v += cp.g(slots) * dg;
            }
            if (scheme == Scheme::Penalized && opt.explicit_penalty) v += ndt * std::max(hk[p] - next[p], 0.0);
            target[p] = v;
        }

        const std::span<const double> states(bundle.X.data() + kk * P * d, P * d);
        const bool plain_mean = kk == 0 && shared0;
        std::optional<SliceRegression> reg;
        if (!plain_mean) {
            reg.emplace(states, P, d, opt.basis, problem.domain);
            diag.max_condition = std::max(diag.max_condition, reg->condition());
            reg->fit(target, fitted);
        } else {
            double s = 0.0;
            for (double v : target) s += v;
            std::fill(fitted.begin(), fitted.end(), s / static_cast<double>(P));
        }

        double floor_eig = 0.0;
        if (opt.estimate_z) {
            // Z = E_k[dM dM^T]^{-1} E_k[Y_{k+1} dM]; fitted second moments below half
            // the smallest unconditional eigenvalue fall back to the unconditional one.
            double m00 = 0.0, m01 = 0.0, m11 = 0.0;
            for (std::size_t p = 0; p < P; ++p) {
                const auto dm = bundle.dm(kk, p);
                m00 += dm[0] * dm[0];
                if (d == 2) {
                    m01 += dm[0] * dm[1];
                    m11 += dm[1] * dm[1];
                }
            }
            m00 /= static_cast<double>(P);
            m01 /= static_cast<double>(P);
            m11 /= static_cast<double>(P);
            floor_eig = d == 1 ? m00 : 0.5 * (m00 + m11) - std::hypot(0.5 * (m00 - m11), m01);
            mean_dm = {m00, m01, m11};
            for (int i = 0; i < d; ++i) {
                for (std::size_t p = 0; p < P; ++p) zt[p] = next[p] * bundle.dm(kk, p)[i];
                if (reg) reg->fit(zt, zt);
                else std::fill(zt.begin(), zt.end(), sample_stats(zt).mean);
                for (std::size_t p = 0; p < P; ++p) zn[p * d + i] = zt[p];
                for (int j = 0; j <= i; ++j) {
                    for (std::size_t p = 0; p < P; ++p) zt[p] = bundle.dm(kk, p)[i] * bundle.dm(kk, p)[j];
                    if (reg) reg->fit(zt, zt);
                    else std::fill(zt.begin(), zt.end(), sample_stats(zt).mean);
                    for (std::size_t p = 0; p < P; ++p) zd[(p * d + i) * d + j] = zd[(p * d + j) * d + i] = zt[p];
                }
            }
        }

        double sum_y = 0.0, sum_dk = 0.0, viol = 0.0;
        for (std::size_t p = 0; p < P; ++p) {
            const double e = fitted[p];
            double y = e, dk = 0.0;
            if (scheme == Scheme::Reflected) {
                y = std::max(e, hk[p]);
                dk = y - e;
            } else if (opt.explicit_penalty) {
                dk = ndt * std::max(hk[p] - next[p], 0.0);
            } else if (e < hk[p] && ndt > 0.0) {
                y = (e + ndt * hk[p]) / (1.0 + ndt);
                dk = y - e;
            }
            cur[p] = y;
            cash[p] += target[p] - next[p] + (opt.explicit_penalty && scheme == Scheme::Penalized ? 0.0 : dk);
            comp[p] += (y - hk[p]) * dk;
            k_total[p] += dk;
            sup_y2[p] = std::max(sup_y2[p], y * y);
            sum_yg[p] += y * y * bundle.dg(kk, p);
            viol = std::max(viol, hk[p] - y);
            sum_y += y;
            sum_dk += dk;
            if (opt.keep_paths) dk_store[kk * P + p] = dk;

            if (opt.estimate_z) {
                double z[2] = {0.0, 0.0};
                if (d == 1) {
                    double den = zd[p];
                    if (!(den >= 0.5 * floor_eig)) den = mean_dm[0];
                    z[0] = den > 1e-300 ? zn[p] / den : 0.0;
                } else {
                    double a = zd[p * 4], b = zd[p * 4 + 1], c = zd[p * 4 + 3];
                    const double lo = 0.5 * (a + c) - std::hypot(0.5 * (a - c), b);
                    if (!(lo >= 0.5 * floor_eig)) {
                        a = mean_dm[0];
                        b = mean_dm[1];
                        c = mean_dm[2];
                    }
                    const double det = a * c - b * b;
                    if (det > 1e-300 && a > 0.0) {
                        z[0] = (c * zn[p * 2] - b * zn[p * 2 + 1]) / det;
                        z[1] = (a * zn[p * 2 + 1] - b * zn[p * 2]) / det;
                    }
                }
                for (int i = 0; i < d; ++i) {
                    sum_z2[p] += z[i] * z[i] * dt;
                    if (opt.keep_paths) sol.Z[(kk * P + p) * d + i] = z[i];
                }
            }
        }
        diag.violation[kk] = std::max(viol, 0.0);
        diag.mean_y[kk] = sum_y / static_cast<double>(P);
        mean_dk[kk] = sum_dk / static_cast<double>(P);
        if (opt.keep_paths) std::copy(cur.begin(), cur.end(), sol.Y.begin() + static_cast<std::ptrdiff_t>(kk * P));

        if (kk == 0) {
            sol.value = plain_mean ? cur[0] : sample_stats(cur).mean;
            sol.std_error = sample_stats(cash).std_error;
        }
        std::swap(next, cur);
    }

    for (std::size_t k = 0; k < K; ++k) diag.mean_k[k + 1] = diag.mean_k[k] + mean_dk[k];
    if (opt.keep_paths)
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t p = 0; p < P; ++p) sol.K[(k + 1) * P + p] = sol.K[k * P + p] + dk_store[k * P + p];

    double comp_sum = 0.0, k_sum = 0.0, apriori = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
        comp_sum += comp[p];
        k_sum += k_total[p];
        apriori += sup_y2[p] + sum_z2[p] + sum_yg[p] + k_total[p] * k_total[p];
    }
    diag.complementarity = comp_sum / static_cast<double>(P);
    diag.mean_terminal_k = k_sum / static_cast<double>(P);
    diag.penalization_mass = diag.mean_terminal_k;
    diag.apriori = apriori / static_cast<double>(P);
    diag.max_obstacle_violation = *std::max_element(diag.violation.begin(), diag.violation.end());
    return sol;
}

}  // namespace

BsdeSolution solve_penalized(const PathBundle& bundle, const TwoScaleProblem& problem, double n_penalty,
                             const SolverOptions& options) {
    return solve(bundle, problem, Scheme::Penalized, n_penalty, options);
}

BsdeSolution solve_reflected(const PathBundle& bundle, const TwoScaleProblem& problem,
                             const SolverOptions& options) {
    return solve(bundle, problem, Scheme::Reflected, 0.0, options);
}

PenalizationSweep penalization_sweep(const PathBundle& bundle, const TwoScaleProblem& problem,
                                     const std::vector<double>& n_list, const SolverOptions& options) {
    if (!std::is_sorted(n_list.begin(), n_list.end()))
        throw Error(ErrorKind::ConfigError, "penalty list must be ascending");
    PenalizationSweep out;
    out.n_list = n_list;
    for (double n : n_list) out.penalized.push_back(solve_penalized(bundle, problem, n, options));
    out.reflected = solve_reflected(bundle, problem, options);
    for (std::size_t i = 1; i < out.penalized.size(); ++i) {
        const double drop = out.penalized[i - 1].value - out.penalized[i].value;
        out.max_decrease = std::max(out.max_decrease, drop);
        if (drop > 1e-12) out.monotone = false;
    }
    if (!out.penalized.empty()) out.gap = std::fabs(out.penalized.back().value - out.reflected.value);
    return out;
}

std::pair<double, double> value_at_origin(const BsdeSolution& solution) {
    return {solution.value, solution.std_error};
}

nlohmann::json to_json(const BsdeSolution& s, bool per_step) {
    const auto& d = s.diagnostics;
    nlohmann::json j{
        {"scheme", s.scheme},
        {"n_penalty", std::isfinite(s.n_penalty) ? nlohmann::json(s.n_penalty) : nlohmann::json(nullptr)},
        {"paths", s.paths},
        {"steps", s.steps},
        {"value", s.value},
        {"stderr", s.std_error},
        {"diagnostics",
         {{"max_obstacle_violation", d.max_obstacle_violation},
          {"complementarity", d.complementarity},
          {"penalization_mass", d.penalization_mass},
          {"mean_terminal_K", d.mean_terminal_k},
          {"apriori", d.apriori},
          {"max_condition", d.max_condition}}},
    };
    if (per_step) {
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t k = 0; k < d.mean_y.size(); ++k)
            rows.push_back({{"k", k}, {"mean_Y", d.mean_y[k]}, {"mean_K", d.mean_k[k]}, {"violation", d.violation[k]}});
        j["per_step"] = rows;
    }
    return j;
}

}  // namespace homlab
