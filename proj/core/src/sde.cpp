#include "homlab/sde.hpp"

#include <algorithm>
#include <cmath>

#include "homlab/error.hpp"
#include "homlab/homogenized.hpp"
#include "homlab/parallel.hpp"
#include "homlab/random.hpp"
#include "two_scale_step.hpp"

namespace homlab {

double PathBundle::total_g(std::size_t p) const noexcept {
    double g = 0.0;
    for (std::size_t k = 0; k < steps; ++k) g += dG[k * paths + p];
    return g;
}

TimeGrid resolve_time_grid(double horizon, double dt, std::size_t record_steps) {
    if (!(horizon > 0.0)) throw Error(ErrorKind::ConfigError, "horizon must be positive");
    if (!(dt > 0.0)) throw Error(ErrorKind::ConfigError, "time step must be positive");
    TimeGrid g;
    if (record_steps == 0) {
        g.steps = static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
        g.steps = std::max<std::size_t>(g.steps, 1);
        g.substeps = 1;
    } else {
        g.steps = record_steps;
        g.substeps = static_cast<std::size_t>(std::ceil(horizon / static_cast<double>(record_steps) / dt - 1e-9));
        g.substeps = std::max<std::size_t>(g.substeps, 1);
    }
    g.dt = horizon / static_cast<double>(g.steps);
    g.sim_dt = horizon / static_cast<double>(g.steps * g.substeps);
    return g;
}

namespace {

void check_start(const ConvexDomain& domain, const Vec& x0) {
    if (x0.size() != domain.dim()) throw Error(ErrorKind::DimensionMismatch, "x0 has the wrong dimension");
    if (domain.psi(x0) < -1e-12) throw Error(ErrorKind::ConfigError, "x0 lies outside the domain");
}

PathBundle allocate(int d, const SimulationSpec& spec, const TimeGrid& g) {
    PathBundle b;
    b.dim = d;
    b.paths = spec.paths;
    b.steps = g.steps;
    b.horizon = spec.horizon;
    b.dt = g.dt;
    b.sim_dt = g.sim_dt;
    b.substeps = g.substeps;
    b.seed = spec.seed;
    const std::size_t pd = spec.paths * static_cast<std::size_t>(d);
    b.X.assign((g.steps + 1) * pd, 0.0);
    b.dW.assign(g.steps * pd, 0.0);
    b.dM.assign(g.steps * pd, 0.0);
    b.dG.assign(g.steps * spec.paths, 0.0);
    b.sup_norm.assign(spec.paths, 0.0);
    return b;
}

double norm_of(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::sqrt(s);
}

// Drives `step(x, rng, dw, dm) -> dG` over every path and records the bundle.
template <typename MakeStepper>
void run_paths(PathBundle& bundle, const SimulationSpec& spec, MakeStepper&& make_stepper) {
    const int d = bundle.dim;
    const std::size_t P = bundle.paths;
    parallel_chunks(P, spec.threads, [&](std::size_t, std::size_t begin, std::size_t end) {
        auto stepper = make_stepper();
        std::vector<double> x(static_cast<std::size_t>(d)), dw(x.size()), dm(x.size());
        std::vector<double> acc_w(x.size()), acc_m(x.size());
        for (std::size_t p = begin; p < end; ++p) {
            StreamRng rng(spec.seed, p);
            for (int i = 0; i < d; ++i) x[i] = spec.x0[i];
            double sup = norm_of(x);
            std::copy(x.begin(), x.end(), bundle.X.begin() + static_cast<std::ptrdiff_t>(p * d));
            for (std::size_t k = 0; k < bundle.steps; ++k) {
                std::fill(acc_w.begin(), acc_w.end(), 0.0);
                std::fill(acc_m.begin(), acc_m.end(), 0.0);
                double acc_g = 0.0;
                for (std::size_t s = 0; s < bundle.substeps; ++s) {
                    acc_g += stepper.step(x, rng, dw, dm);
                    for (int i = 0; i < d; ++i) {
                        acc_w[i] += dw[i];
                        acc_m[i] += dm[i];
                    }
                    sup = std::max(sup, norm_of(x));
                }
                const std::size_t rec = (k * P + p) * d;
                std::copy(acc_w.begin(), acc_w.end(), bundle.dW.begin() + static_cast<std::ptrdiff_t>(rec));
                std::copy(acc_m.begin(), acc_m.end(), bundle.dM.begin() + static_cast<std::ptrdiff_t>(rec));
                bundle.dG[k * P + p] = acc_g;
                const std::size_t next = ((k + 1) * P + p) * d;
                std::copy(x.begin(), x.end(), bundle.X.begin() + static_cast<std::ptrdiff_t>(next));
            }
            bundle.sup_norm[p] = sup;
        }
    });
}

class HomogenizedStepper {
public:
    HomogenizedStepper(const HomogenizedCoefficients& coeffs, double dt)
        : h_(coeffs), dom_(coeffs.domain()), d_(coeffs.dim()), dt_(dt), sqrt_dt_(std::sqrt(dt)),
          S_(static_cast<std::size_t>(d_ * d_)), c_(static_cast<std::size_t>(d_)),
          proj_(static_cast<std::size_t>(d_)), normal_(static_cast<std::size_t>(d_)) {
        if (h_.is_constant()) {
            h_.sqrt_A0(proj_, S_);
            h_.C0_bar(proj_, c_);
        }
    }

    double step(std::span<double> x, StreamRng& rng, std::span<double> dw, std::span<double> dm) {
        if (!h_.is_constant()) {
            h_.sqrt_A0(x, S_);
            h_.C0_bar(x, c_);
        }
        for (int j = 0; j < d_; ++j) dw[j] = sqrt_dt_ * rng.normal();
        for (int i = 0; i < d_; ++i) {
            double noise = 0.0;
            for (int j = 0; j < d_; ++j) noise += S_[i * d_ + j] * dw[j];
            dm[i] = noise;
            x[i] += c_[i] * dt_ + noise;
            if (!std::isfinite(x[i])) throw Error(ErrorKind::NonFiniteState, "homogenized state is not finite");
        }
        if (dom_.psi(std::span<const double>(x.data(), x.size())) >= 0.0) return 0.0;
        if (h_.normal_reflection()) return dom_.project_in_place(x);
        return oblique(x);
    }

private:
    double oblique(std::span<double> x) {
        std::copy(x.begin(), x.end(), proj_.begin());
        dom_.project_in_place(proj_);
        const Vec gamma = h_.gamma0(proj_);
        dom_.inward_normal(proj_, normal_);
        double gn = 0.0, A = 0.0, B = 0.0, C = 0.0;
        for (int i = 0; i < d_; ++i) {
            const double v = x[i] - dom_.center()[i];
            gn += gamma[i] * normal_[i];
            A += gamma[i] * gamma[i];
            B += v * gamma[i];
        }
        if (gn <= 1e-10) throw Error(ErrorKind::TangentialReflection, "gamma0 is tangential to the boundary");
        const double r = dom_.distance_from_center(x);
        C = (r - dom_.radius()) * (r + dom_.radius());
        const double disc = B * B - A * C;
        if (disc < 0.0 || B >= 0.0)
            throw Error(ErrorKind::TangentialReflection, "reflection ray along gamma0 misses the domain");
        // smaller root of A l^2 + 2 B l + C = 0, in the cancellation-free form
        const double lambda = C / (-B + std::sqrt(disc));
        for (int i = 0; i < d_; ++i) x[i] += lambda * gamma[i];
        if (d_ == 1) x[0] = proj_[0];  // the ray lands on the endpoint
        dom_.project_in_place(x);
        return lambda;
    }

    const HomogenizedCoefficients& h_;
    const ConvexDomain& dom_;
    int d_;
    double dt_;
    double sqrt_dt_;
    std::vector<double> S_;
    std::vector<double> c_;
    std::vector<double> proj_;
    std::vector<double> normal_;
};

}  // namespace

PathBundle simulate_two_scale(const TwoScaleProblem& problem, double epsilon, const SimulationSpec& spec) {
    if (!(epsilon > 0.0)) throw Error(ErrorKind::ConfigError, "epsilon must be positive");
    check_start(problem.domain, spec.x0);
    if (spec.frozen_x && spec.frozen_x->size() != problem.dim)
        throw Error(ErrorKind::DimensionMismatch, "frozen point has the wrong dimension");
    const TimeGrid g = resolve_time_grid(spec.horizon, spec.dt, spec.record_steps);
    if (spec.dt > max_two_scale_dt(epsilon) * (1.0 + 1e-12))
        throw Error(ErrorKind::StepSizeTooLarge, "simulation step exceeds 0.1 epsilon^2");

    const CompiledProblem cp(problem);
    PathBundle bundle = allocate(problem.dim, spec, g);
    bundle.epsilon = epsilon;
    bundle.scheme = spec.reflection == ReflectionMode::Projection ? "two-scale euler, projection"
                                                                  : "two-scale euler, penalty";
    run_paths(bundle, spec, [&] {
        return detail::TwoScaleStepper(cp, problem.domain, epsilon, g.sim_dt, spec.frozen_x, spec.reflection,
                                       spec.penalty_eta);
    });
    return bundle;
}

PathBundle simulate_homogenized(const HomogenizedCoefficients& coeffs, const ConvexDomain& domain,
                                const SimulationSpec& spec) {
    if (coeffs.dim() != domain.dim()) throw Error(ErrorKind::DimensionMismatch, "coefficient dimension mismatch");
    check_start(domain, spec.x0);
    const TimeGrid g = resolve_time_grid(spec.horizon, spec.dt, spec.record_steps);
    PathBundle bundle = allocate(domain.dim(), spec, g);
    bundle.epsilon = 0.0;
    bundle.scheme = coeffs.normal_reflection() ? "homogenized euler, projection" : "homogenized euler, oblique";
    run_paths(bundle, spec, [&] { return HomogenizedStepper(coeffs, g.sim_dt); });
    return bundle;
}

SampleStats sample_stats(std::span<const double> values) {
    SampleStats s;
    const std::size_t n = values.size();
    if (n == 0) return s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(n);
    if (n > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.variance = ss / static_cast<double>(n - 1);
        s.std_error = std::sqrt(s.variance / static_cast<double>(n));
    }
    return s;
}

MomentDiagnostics moment_diagnostics(const PathBundle& bundle, double p) {
    std::vector<double> sup(bundle.paths), g(bundle.paths);
    for (std::size_t i = 0; i < bundle.paths; ++i) {
        sup[i] = std::pow(bundle.sup_norm[i], p);
        g[i] = bundle.total_g(i);
    }
    const SampleStats s = sample_stats(sup);
    const SampleStats gs = sample_stats(g);
    return {s.mean, s.std_error, gs.mean, gs.std_error};
}

}  // namespace homlab
