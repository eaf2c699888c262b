#include "homlab/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "homlab/error.hpp"

namespace homlab {

ConvexDomain::ConvexDomain(Vec center, double radius)
    : center_(std::move(center)), c_(center_.data(), center_.data() + center_.size()), radius_(radius) {
    if (!(radius_ > 0.0)) throw Error(ErrorKind::SchemaError, "domain radius must be positive");
    if (center_.size() == 0) throw Error(ErrorKind::SchemaError, "domain center must be non-empty");
}

ConvexDomain ConvexDomain::interval(double lo, double hi) {
    Vec c(1);
    c[0] = 0.5 * (lo + hi);
    return ConvexDomain(c, 0.5 * (hi - lo));
}

double ConvexDomain::psi(const Vec& x) const { return radius_ - (x - center_).norm(); }

Vec ConvexDomain::grad_psi(const Vec& x) const {
    const Vec v = x - center_;
    const double r = v.norm();
    if (r < 1e-12) throw Error(ErrorKind::DegeneratePoint, "grad psi is undefined at the center");
    return -v / r;
}

double ConvexDomain::rho(const Vec& x) const {
    const double excess = std::max((x - center_).norm() - radius_, 0.0);
    return excess * excess;
}

Vec ConvexDomain::delta(const Vec& x) const {
    const Vec v = x - center_;
    const double r = v.norm();
    const double excess = r - radius_;
    if (excess <= 0.0) return Vec::Zero(x.size());
    return 2.0 * excess * v / r;
}

std::pair<Vec, double> ConvexDomain::project(const Vec& x) const {
    const Vec v = x - center_;
    const double r = v.norm();
    if (r <= radius_) return {x, 0.0};
    if (dim() == 1) {
        Vec p(1);
        p[0] = x[0] > center_[0] ? center_[0] + radius_ : center_[0] - radius_;
        return {p, r - radius_};
    }
    double scale = radius_ / r;
    Vec p = center_ + v * scale;
    // rounding can leave the image an ulp outside; pull it back so projection is idempotent
    while ((p - center_).norm() > radius_) {
        scale = std::nextafter(scale, 0.0);
        p = center_ + v * scale;
    }
    return {p, r - radius_};
}

}  // namespace homlab
