#pragma once

#include <array>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace homlab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Closed Euclidean ball in R^d. In one dimension this is the interval
/// [center - radius, center + radius].
///
///   psi(x)   = radius - |x - center|        (positive inside)
///   rho(x)   = dist(x, ball)^2
///   delta(x) = grad rho(x)
class ConvexDomain {
public:
    ConvexDomain(Vec center, double radius);

    static ConvexDomain interval(double lo, double hi);

    int dim() const noexcept { return static_cast<int>(center_.size()); }
    const Vec& center() const noexcept { return center_; }
    double radius() const noexcept { return radius_; }

    double psi(const Vec& x) const;
    /// Inward unit normal direction; throws DegeneratePoint at the center.
    Vec grad_psi(const Vec& x) const;
    double rho(const Vec& x) const;
    Vec delta(const Vec& x) const;
    /// Euclidean projection onto the closed ball and the distance moved.
    std::pair<Vec, double> project(const Vec& x) const;
    bool contains(const Vec& x) const { return psi(x) >= 0.0; }

    // Span overloads used by the path simulators; `x` has dim() entries.
    double distance_from_center(std::span<const double> x) const noexcept {
        double s = 0.0;
        for (int i = 0; i < dim(); ++i) {
            const double dx = x[i] - c_[i];
            s += dx * dx;
        }
        return std::sqrt(s);
    }
    double psi(std::span<const double> x) const noexcept { return radius_ - distance_from_center(x); }
    /// Projects in place; returns the distance moved (0 when already inside).
    double project_in_place(std::span<double> x) const noexcept {
        const double r = distance_from_center(x);
        if (r <= radius_) return 0.0;
        if (dim() == 1) {
            x[0] = x[0] > c_[0] ? c_[0] + radius_ : c_[0] - radius_;
            return r - radius_;
        }
        double scale = radius_ / r;
        std::array<double, 2> v{};
        for (int i = 0; i < dim(); ++i) v[i] = x[i] - c_[i];
        for (;;) {
            for (int i = 0; i < dim(); ++i) x[i] = c_[i] + v[i] * scale;
            if (distance_from_center(x) <= radius_) break;
            scale = std::nextafter(scale, 0.0);
        }
        return r - radius_;
    }
    /// Writes the inward unit normal at x into `out`; x must not be the center.
    void inward_normal(std::span<const double> x, std::span<double> out) const noexcept {
        const double r = distance_from_center(x);
        for (int i = 0; i < dim(); ++i) out[i] = -(x[i] - c_[i]) / r;
    }

private:
    Vec center_;
    std::vector<double> c_;
    double radius_;
};

}  // namespace homlab
