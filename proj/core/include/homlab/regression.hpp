#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <nlohmann/json.hpp>

#include "homlab/geometry.hpp"

namespace homlab {

enum class BasisKind {
    Polynomial,  // monomials of total degree <= degree, optionally with psi(x)
    Local,       // piecewise constant on equal-count bins (order preserving)
};

struct RegressionBasis {
    BasisKind kind = BasisKind::Polynomial;
    int degree = 2;
    bool with_psi = false;
    int bins = 32;  // Local only; per axis count is ceil(sqrt(bins)) in d = 2
};

RegressionBasis basis_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RegressionBasis& basis);
std::string describe(const RegressionBasis& basis);

/// Least-squares projection onto the basis evaluated at one time slice of
/// states. Built once per slice and reused for several targets.
class SliceRegression {
public:
    /// `states` holds paths * dim values, path-major.
    SliceRegression(std::span<const double> states, std::size_t paths, int dim, const RegressionBasis& basis,
                    const ConvexDomain& domain);

    /// Writes the fitted values of `target` into `fitted` (may alias).
    void fit(std::span<const double> target, std::span<double> fitted) const;

    /// Condition number of the column-normalised design (1 for Local).
    double condition() const noexcept { return condition_; }
    std::size_t columns() const noexcept { return columns_; }

private:
    BasisKind kind_;
    std::size_t paths_;
    std::size_t columns_ = 1;
    double condition_ = 1.0;
    // polynomial
    Mat design_;  // paths x columns, column normalised
    Eigen::LDLT<Mat> gram_;
    // local
    std::vector<std::size_t> bin_of_;
    std::vector<std::size_t> bin_size_;
};

/// Rejection threshold for the normalised design condition number.
inline constexpr double kMaxCondition = 1e12;

}  // namespace homlab
