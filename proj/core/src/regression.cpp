#include "homlab/regression.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "homlab/error.hpp"

namespace homlab {

RegressionBasis basis_from_json(const nlohmann::json& j) {
    RegressionBasis b;
    if (j.is_null()) return b;
    if (!j.is_object()) throw Error(ErrorKind::ConfigError, "basis must be an object");
    const std::string kind = j.value("kind", std::string("polynomial"));
    if (kind == "polynomial")
        b.kind = BasisKind::Polynomial;
    else if (kind == "local")
        b.kind = BasisKind::Local;
    else
        throw Error(ErrorKind::ConfigError, "unknown basis kind '" + kind + "'");
    b.degree = j.value("degree", b.degree);
    b.with_psi = j.value("psi", b.with_psi);
    b.bins = j.value("bins", b.bins);
    if (b.degree < 0 || b.degree > 12) throw Error(ErrorKind::ConfigError, "basis degree must be in [0, 12]");
    if (b.bins < 1) throw Error(ErrorKind::ConfigError, "basis bins must be positive");
    return b;
}

nlohmann::json to_json(const RegressionBasis& b) {
    if (b.kind == BasisKind::Local) return {{"kind", "local"}, {"bins", b.bins}};
    return {{"kind", "polynomial"}, {"degree", b.degree}, {"psi", b.with_psi}};
}

std::string describe(const RegressionBasis& b) {
    if (b.kind == BasisKind::Local) return "local(" + std::to_string(b.bins) + ")";
    return "poly(" + std::to_string(b.degree) + (b.with_psi ? ",psi)" : ")");
}

namespace {

// Exponent tuples of total degree <= deg in `vars` variables, graded order.
std::vector<std::vector<int>> monomials(int vars, int deg) {
    std::vector<std::vector<int>> out;
    std::vector<int> e(static_cast<std::size_t>(vars), 0);
    for (int total = 0; total <= deg; ++total) {
        if (vars == 0) {
            if (total == 0) out.push_back({});
            continue;
        }
        // enumerate compositions of `total` into `vars` parts
        std::fill(e.begin(), e.end(), 0);
        e[0] = total;
        while (true) {
            out.push_back(e);
            int i = vars - 2;
            // find rightmost movable unit
            while (i >= 0 && e[i] == 0) --i;
            if (i < 0) break;
            --e[i];
            const int rest = std::accumulate(e.begin() + i + 1, e.end(), 0) + 1;
            std::fill(e.begin() + i + 1, e.end(), 0);
            e[i + 1] = rest;
        }
    }
    return out;
}

}  // namespace

SliceRegression::SliceRegression(std::span<const double> states, std::size_t paths, int dim,
                                 const RegressionBasis& basis, const ConvexDomain& domain)
    : kind_(basis.kind), paths_(paths) {
    if (paths == 0) throw Error(ErrorKind::SingularRegression, "no paths to regress on");

    if (kind_ == BasisKind::Local) {
        bin_of_.assign(paths, 0);
        const int per_axis = dim == 1 ? basis.bins : static_cast<int>(std::ceil(std::sqrt(double(basis.bins))));
        // Equal-count bins along one coordinate of the paths in [first, last);
        // equal values never straddle a bin boundary.
        auto split = [&](std::vector<std::size_t>& order, std::size_t first, std::size_t last, int coord,
                         int count, auto&& emit) {
            std::sort(order.begin() + first, order.begin() + last, [&](std::size_t a, std::size_t b) {
                const double va = states[a * dim + coord], vb = states[b * dim + coord];
                return va < vb || (va == vb && a < b);
            });
            const std::size_t n = last - first;
            const std::size_t target = std::max<std::size_t>(1, (n + count - 1) / count);
            std::size_t start = first;
            for (std::size_t i = first + 1; i <= last; ++i) {
                const bool end = i == last;
                if (end || (i - start >= target &&
                            states[order[i] * dim + coord] != states[order[i - 1] * dim + coord])) {
                    emit(start, i);
                    start = i;
                }
            }
        };
        std::vector<std::size_t> order(paths);
        std::iota(order.begin(), order.end(), 0);
        std::size_t bins = 0;
        auto leaf = [&](std::size_t a, std::size_t b) {
            for (std::size_t i = a; i < b; ++i) bin_of_[order[i]] = bins;
            bin_size_.push_back(b - a);
            ++bins;
        };
        if (dim == 1) {
            split(order, 0, paths, 0, per_axis, leaf);
        } else {
            split(order, 0, paths, 0, per_axis, [&](std::size_t a, std::size_t b) {
                split(order, a, b, 1, per_axis, leaf);
            });
        }
        columns_ = bins;
        return;
    }

    // Polynomial: standardise each coordinate, drop constant ones.
    std::vector<std::vector<double>> features;
    auto add_standardised = [&](std::vector<double> v) -> bool {
        double mean = 0.0;
        for (double a : v) mean += a;
        mean /= static_cast<double>(paths);
        double var = 0.0;
        for (double a : v) var += (a - mean) * (a - mean);
        var /= static_cast<double>(paths);
        if (!(var > 1e-24 * (1.0 + mean * mean))) return false;
        const double inv = 1.0 / std::sqrt(var);
        for (double& a : v) a = (a - mean) * inv;
        features.push_back(std::move(v));
        return true;
    };
    for (int i = 0; i < dim; ++i) {
        std::vector<double> v(paths);
        for (std::size_t p = 0; p < paths; ++p) v[p] = states[p * dim + i];
        add_standardised(std::move(v));
    }
    bool psi_kept = false;
    if (basis.with_psi) {
        std::vector<double> v(paths);
        for (std::size_t p = 0; p < paths; ++p)
            v[p] = domain.psi(std::span<const double>(states.data() + p * dim, static_cast<std::size_t>(dim)));
        psi_kept = add_standardised(std::move(v));
    }
    const int vars = static_cast<int>(features.size());
    // psi enters linearly only; the polynomial part uses the coordinates.
    const int coord_vars = static_cast<int>(features.size()) - (psi_kept ? 1 : 0);
    const bool psi_column = psi_kept;
    const auto exps = monomials(coord_vars, vars == 0 ? 0 : basis.degree);
    columns_ = exps.size() + (psi_column ? 1 : 0);

    design_.resize(static_cast<Eigen::Index>(paths), static_cast<Eigen::Index>(columns_));
    for (std::size_t c = 0; c < exps.size(); ++c) {
        for (std::size_t p = 0; p < paths; ++p) {
            double v = 1.0;
            for (int i = 0; i < coord_vars; ++i)
                for (int e = 0; e < exps[c][i]; ++e) v *= features[i][p];
            design_(p, c) = v;
        }
    }
    if (psi_column)
        for (std::size_t p = 0; p < paths; ++p) design_(p, columns_ - 1) = features.back()[p];

    // Column normalisation makes the Gram matrix unit-diagonal.
    for (Eigen::Index c = 0; c < design_.cols(); ++c) {
        const double n = design_.col(c).norm();
        if (n > 0.0) design_.col(c) /= n;
    }
    if (psi_column) {
        // psi may lie in the polynomial span (balls are quadratic); drop it then.
        const auto k = static_cast<Eigen::Index>(exps.size());
        const Mat poly = design_.leftCols(k);
        const Vec last = design_.col(k);
        const Vec proj = poly * (poly.transpose() * poly).ldlt().solve(poly.transpose() * last);
        if ((last - proj).norm() < 1e-6) {
            design_.conservativeResize(Eigen::NoChange, k);
            columns_ = exps.size();
        }
    }
    const Mat gram = design_.transpose() * design_;
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Mat>(gram, Eigen::EigenvaluesOnly).eigenvalues();
    const double lo = ev.minCoeff(), hi = ev.maxCoeff();
    condition_ = lo > 0.0 ? std::sqrt(hi / lo) : std::numeric_limits<double>::infinity();
    if (!(condition_ <= kMaxCondition))
        throw Error(ErrorKind::SingularRegression, "regression design is numerically singular (condition " +
                                                       std::to_string(condition_) + ")");
    gram_.compute(gram);
}

void SliceRegression::fit(std::span<const double> target, std::span<double> fitted) const {
    if (kind_ == BasisKind::Local) {
        std::vector<double> sum(bin_size_.size(), 0.0);
        for (std::size_t p = 0; p < paths_; ++p) sum[bin_of_[p]] += target[p];
        for (std::size_t b = 0; b < sum.size(); ++b) sum[b] /= static_cast<double>(bin_size_[b]);
        for (std::size_t p = 0; p < paths_; ++p) fitted[p] = sum[bin_of_[p]];
        return;
    }
    const Eigen::Map<const Vec> t(target.data(), static_cast<Eigen::Index>(paths_));
    const Vec coef = gram_.solve(design_.transpose() * t);
    const Vec out = design_ * coef;
    std::copy(out.data(), out.data() + out.size(), fitted.begin());
}

}  // namespace homlab
