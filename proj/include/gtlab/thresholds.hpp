#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "gtlab/designs.hpp"
#include "gtlab/numerics.hpp"

namespace gtlab {

namespace detail {
inline constexpr double ln2 = 0.6931471805599453;
inline constexpr double ln2_sq = ln2 * ln2;
}  // namespace detail

/// Statistical recovery threshold 1/ln 2.
inline double c_inf() { return 1.0 / detail::ln2; }

/// Best known polynomial-time recovery threshold 1/ln^2 2.
inline double c_alg() { return 1.0 / detail::ln2_sq; }

/// Constant-column detection threshold curve.
inline double c_ld_cc(double theta) {
    if (!(theta > 0.0 && theta < 1.0)) throw std::invalid_argument("c_ld_cc: theta outside (0,1)");
    if (theta >= 2.0 / 3.0) return 0.0;
    return (1.0 - theta / (2.0 * (1.0 - theta))) / detail::ln2_sq;
}

/// Bernoulli detection threshold curve (principal Lambert branch below the
/// interior breakpoint).
inline double c_ld_bern(double theta) {
    if (!(theta > 0.0 && theta < 1.0)) throw std::invalid_argument("c_ld_bern: theta outside (0,1)");
    if (theta >= 0.5) return 0.0;
    const double theta_star = 0.5 * (1.0 - 1.0 / (4.0 * detail::ln2 - 1.0));
    if (theta >= theta_star) return (1.0 - 2.0 * theta) / (1.0 - theta) / detail::ln2;
    double arg = -std::exp(-theta / (1.0 - theta) * detail::ln2 - 1.0);
    return -lambert_w0(arg) / detail::ln2_sq;
}

inline double c_ld(Design design, double theta) {
    return design == Design::constant_column ? c_ld_cc(theta) : c_ld_bern(theta);
}

/// Dual form of the Bernoulli threshold: c > c_ld_bern(theta) iff
/// tau(c) < theta/(1-theta). Continuous and nonincreasing.
inline double tau(double c) {
    if (!(c > 0.0)) throw std::invalid_argument("tau: c must be > 0");
    if (c <= 1.0 / (2.0 * detail::ln2_sq)) return 1.0 - c * detail::ln2;
    if (c < 1.0 / detail::ln2_sq)
        return c * detail::ln2 - (1.0 + std::log(c * detail::ln2_sq)) / detail::ln2;
    return 0.0;
}

enum class Region { I, II, III, IV, easy };

inline const char* region_name(Region r) {
    switch (r) {
        case Region::I: return "I";
        case Region::II: return "II";
        case Region::III: return "III";
        case Region::IV: return "IV";
        default: return "easy";
    }
}

/// Phase classification. Ties at machine-representable boundary values fall
/// to the region listed second in each comparison below.
inline Region classify_region(double theta, double c, Design design) {
    double cld = c_ld(design, theta);
    if (c > c_alg()) return Region::easy;
    if (c > c_inf()) return c < cld ? Region::I : Region::II;
    return c >= cld ? Region::III : Region::IV;
}

inline bool ld_equivalence_check(double theta, double c) {
    bool above_curve = c > c_ld_bern(theta);
    bool dual = tau(c) < theta / (1.0 - theta);
    return above_curve == dual;
}

struct PhaseRow {
    double theta = 0.0;
    double c = 0.0;
    double c_inf = 0.0;
    double c_alg = 0.0;
    double c_ld = 0.0;
    Region region = Region::IV;
};

inline std::vector<PhaseRow> phase_diagram(Design design, std::span<const double> theta_grid,
                                           std::span<const double> c_grid) {
    if (theta_grid.empty() || c_grid.empty())
        throw std::invalid_argument("phase_diagram: empty grid");
    std::vector<PhaseRow> rows;
    rows.reserve(theta_grid.size() * c_grid.size());
    for (double theta : theta_grid) {
        double cld = c_ld(design, theta);
        for (double c : c_grid) {
            PhaseRow row;
            row.theta = theta;
            row.c = c;
            row.c_inf = c_inf();
            row.c_alg = c_alg();
            row.c_ld = cld;
            row.region = classify_region(theta, c, design);
            rows.push_back(row);
        }
    }
    return rows;
}

}  // namespace gtlab
