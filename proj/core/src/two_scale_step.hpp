#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "homlab/error.hpp"
#include "homlab/geometry.hpp"
#include "homlab/problem.hpp"
#include "homlab/random.hpp"
#include "homlab/sde.hpp"

namespace homlab::detail {

inline double fractional(double v) noexcept { return v - std::floor(v); }

/// One Euler step of the reflected two-scale SDE. Holds scratch space, so
/// each worker needs its own instance.
class TwoScaleStepper {
public:
    TwoScaleStepper(const CompiledProblem& problem, const ConvexDomain& domain, double epsilon, double dt,
                    const std::optional<Vec>& frozen_x, ReflectionMode mode, double eta)
        : p_(problem), domain_(domain), d_(problem.dim()), inv_eps_(1.0 / epsilon), dt_(dt),
          sqrt_dt_(std::sqrt(dt)), mode_(mode), inv_eta_(1.0 / eta),
          slots_(static_cast<std::size_t>(problem.layout().size()), 0.0),
          sigma_(static_cast<std::size_t>(d_ * d_), 0.0), drift_(static_cast<std::size_t>(d_), 0.0),
          frozen_(frozen_x.has_value()) {
        const auto& layout = p_.layout();
        if (frozen_)
            for (int i = 0; i < d_; ++i) slots_[layout.x(i)] = (*frozen_x)[i];
        if (p_.sigma_constant())
            for (int i = 0; i < d_; ++i)
                for (int j = 0; j < d_; ++j) sigma_[i * d_ + j] = p_.sigma(i, j, slots_);
    }

    /// Advances x in place. Writes the Brownian and martingale increments and
    /// returns the local-time increment.
    double step(std::span<double> x, StreamRng& rng, std::span<double> dw, std::span<double> dm) {
        const auto& layout = p_.layout();
        for (int i = 0; i < d_; ++i) {
            if (!frozen_) slots_[layout.x(i)] = x[i];
            slots_[layout.y(i)] = fractional(x[i] * inv_eps_);
        }
        if (!p_.sigma_constant())
            for (int i = 0; i < d_; ++i)
                for (int j = 0; j < d_; ++j) sigma_[i * d_ + j] = p_.sigma(i, j, slots_);
        for (int i = 0; i < d_; ++i) {
            const double b = p_.b_zero() ? 0.0 : p_.b(i, slots_);
            const double c = p_.c_zero() ? 0.0 : p_.c(i, slots_);
            drift_[i] = b * inv_eps_ + c;
        }
        for (int j = 0; j < d_; ++j) dw[j] = sqrt_dt_ * rng.normal();

        double dg = 0.0;
        if (mode_ == ReflectionMode::Penalty) dg = penalty_push(x);
        for (int i = 0; i < d_; ++i) {
            double noise = 0.0;
            for (int j = 0; j < d_; ++j) noise += sigma_[i * d_ + j] * dw[j];
            dm[i] = noise;
            x[i] += drift_[i] * dt_ + noise;
            if (!std::isfinite(x[i])) throw Error(ErrorKind::NonFiniteState, "two-scale state is not finite");
        }
        if (mode_ == ReflectionMode::Projection) dg = domain_.project_in_place(x);
        return dg;
    }

private:
    // Penalised reflection: push along grad psi with rate 2 dist / eta.
    double penalty_push(std::span<double> x) {
        const double r = domain_.distance_from_center(x);
        const double excess = r - domain_.radius();
        if (excess <= 0.0) return 0.0;
        const double dg = 2.0 * excess * inv_eta_ * dt_;
        for (int i = 0; i < d_; ++i) x[i] -= dg * (x[i] - domain_.center()[i]) / r;
        return dg;
    }

    const CompiledProblem& p_;
    const ConvexDomain& domain_;
    int d_;
    double inv_eps_;
    double dt_;
    double sqrt_dt_;
    ReflectionMode mode_;
    double inv_eta_;
    std::vector<double> slots_;
    std::vector<double> sigma_;
    std::vector<double> drift_;
    bool frozen_;
};

}  // namespace homlab::detail
