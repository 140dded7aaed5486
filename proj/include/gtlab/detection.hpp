#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "gtlab/designs.hpp"
#include "gtlab/numerics.hpp"

namespace gtlab {

struct DetectionOutcome {
    double statistic_value = 0.0;
    bool planted = false;
    double threshold_used = 0.0;
    int planted_side = +1;  // +1: planted lies above the threshold
};

struct CalibrationReport {
    double mean_null = 0.0;
    double var_null = 0.0;
    double mean_planted = 0.0;
    double var_planted = 0.0;
    double separation_ratio = 0.0;  // |mean gap| / sqrt(max variance)
};

/// Empirical variance of the test degrees: sum over tests of
/// (Gamma_j - N Delta / M)^2. Degree-2 in the edge indicators.
inline double cc_degree_variance(const BipartiteGraph& g, std::uint64_t delta) {
    double mu = static_cast<double>(g.num_individuals) * static_cast<double>(delta) /
                static_cast<double>(g.num_tests);
    double out = 0.0;
    for (std::uint32_t d : g.test_degrees) {
        double x = static_cast<double>(d) - mu;
        out += x * x;
    }
    return out;
}

// Same statistic shifted by its exact null mean N Delta (1 - Delta/M); the
// shift is a constant for given dimensions, so thresholding it is equivalent
// under fixed dimensions and comparable across dimension-matched samples.
inline double cc_degree_variance_centered(const BipartiteGraph& g, std::uint64_t delta) {
    double nd = static_cast<double>(g.num_individuals) * static_cast<double>(delta);
    double base = nd * (1.0 - static_cast<double>(delta) / static_cast<double>(g.num_tests));
    return cc_degree_variance(g, delta) - base;
}

/// Degree-threshold constant for the Bernoulli count statistic.
inline double choose_t(double /*theta*/, double c, double epsilon = 0.05) {
    const double ln2 = 0.6931471805599453;
    if (c <= 1.0 / (2.0 * ln2 * ln2)) return 2.0;
    if (c < 1.0 / (ln2 * ln2)) return 1.0 / (c * ln2 * ln2);
    return 1.0 + epsilon;
}

/// Number of individuals of degree at least ceil(2 t q M).
inline std::uint64_t bern_high_degree_count(const BipartiteGraph& g, double q, double t) {
    double d_real = 2.0 * t * q * static_cast<double>(g.num_tests);
    auto d = static_cast<std::int64_t>(std::ceil(d_real));
    if (d <= 0) return g.num_individuals;
    std::uint64_t count = 0;
    for (std::uint32_t i = 0; i < g.num_individuals; ++i)
        if (static_cast<std::int64_t>(g.degree(i)) >= d) ++count;
    return count;
}

/// Lagrange interpolation of the step 1{x >= d} through the points
/// {0,...,b-1}; exact on that range, degree b-1. Evaluated with
/// log-magnitude/sign accumulation.
inline double poly_indicator(double x, double d, std::uint64_t b) {
    auto a = static_cast<std::uint64_t>(std::ceil(d));
    if (b <= a) throw std::invalid_argument("poly_indicator: need b > ceil(d)");
    double xr = std::round(x);
    if (std::abs(x - xr) == 0.0 && xr >= 0.0 && xr < static_cast<double>(b))
        return xr >= static_cast<double>(a) ? 1.0 : 0.0;

    double max_log = -std::numeric_limits<double>::infinity();
    std::vector<double> logs(b - a);
    std::vector<int> signs(b - a);
    for (std::uint64_t j = a; j < b; ++j) {
        double lg = 0.0;
        int sign = 1;
        for (std::uint64_t l = 0; l < b; ++l) {
            if (l == j) continue;
            double num = x - static_cast<double>(l);
            if (num < 0) sign = -sign;
            lg += std::log(std::abs(num));
        }
        lg -= std::lgamma(static_cast<double>(j) + 1.0) +
              std::lgamma(static_cast<double>(b - j));  // |prod (j-l)| = j! (b-1-j)!
        if ((b - 1 - j) % 2 == 1) sign = -sign;
        logs[j - a] = lg;
        signs[j - a] = sign;
        max_log = std::max(max_log, lg);
    }
    if (!std::isfinite(max_log)) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < logs.size(); ++i)
        acc += signs[i] * std::exp(logs[i] - max_log);
    return acc * std::exp(max_log);
}

inline std::uint64_t first_odd_above(double x) {
    auto b = static_cast<std::uint64_t>(std::floor(x)) + 1;
    if (b % 2 == 0) ++b;
    return b;
}

/// Polynomial surrogate of the high-degree count: sum of poly_indicator over
/// all individual degrees, with interpolation range b the first odd integer
/// above B ln N.
inline double bern_poly_statistic(const BipartiteGraph& g, double q, double t, double b_const) {
    if (!(b_const > 0.0)) throw std::invalid_argument("bern_poly_statistic: B must be > 0");
    double d_real = 2.0 * t * q * static_cast<double>(g.num_tests);
    auto a = static_cast<std::uint64_t>(std::ceil(std::max(d_real, 0.0)));
    std::uint64_t b = first_odd_above(b_const * std::log(std::max<double>(g.num_individuals, 3)));
    while (b <= a) b += 2;
    double out = 0.0;
    for (std::uint32_t i = 0; i < g.num_individuals; ++i)
        out += poly_indicator(g.degree(i), d_real, b);
    return out;
}

/// Midpoint threshold between the two empirical means, plus first and second
/// moments of both sides.
inline CalibrationReport calibrate(std::span<const double> samples_null,
                                   std::span<const double> samples_planted, double& threshold,
                                   int& planted_side) {
    if (samples_null.size() < 2 || samples_planted.size() < 2)
        throw std::invalid_argument("calibrate: need at least 2 samples per side");
    auto moments = [](std::span<const double> xs, double& mean, double& var) {
        double s = 0.0;
        for (double x : xs) s += x;
        mean = s / static_cast<double>(xs.size());
        double ss = 0.0;
        for (double x : xs) ss += (x - mean) * (x - mean);
        var = ss / static_cast<double>(xs.size() - 1);
    };
    CalibrationReport rep;
    moments(samples_null, rep.mean_null, rep.var_null);
    moments(samples_planted, rep.mean_planted, rep.var_planted);
    double gap = rep.mean_planted - rep.mean_null;
    if (gap == 0.0) throw std::invalid_argument("calibrate: degenerate (equal means)");
    double vmax = std::max(rep.var_null, rep.var_planted);
    rep.separation_ratio = vmax > 0.0 ? std::abs(gap) / std::sqrt(vmax) : 1e300;
    threshold = 0.5 * (rep.mean_null + rep.mean_planted);
    planted_side = gap > 0 ? +1 : -1;
    return rep;
}

inline DetectionOutcome decide(double statistic, double threshold, int planted_side) {
    DetectionOutcome out;
    out.statistic_value = statistic;
    out.threshold_used = threshold;
    out.planted_side = planted_side;
    out.planted = planted_side > 0 ? statistic > threshold : statistic < threshold;
    return out;
}

/// Turn a recovery output into a detection decision: planted iff the estimate
/// is a small set covering almost all tests. The slack parameter must satisfy
/// the design-specific admissibility condition.
inline DetectionOutcome detect_from_recovery(const BipartiteGraph& g,
                                             std::span<const std::uint8_t> tau, Design design,
                                             double c, std::uint64_t k, double slack) {
    if (!(slack > 0.0 && slack < 1.0)) throw std::invalid_argument("detect_from_recovery: slack outside (0,1)");
    const double ln2 = 0.6931471805599453;
    if (design == Design::bernoulli) {
        double cond = c * kl_bernoulli(slack, std::pow(2.0, -(1.0 + slack))) / (1.0 + slack);
        if (!(cond > 1.0))
            throw std::invalid_argument("detect_from_recovery: delta fails c D(delta||2^-(1+delta))/(1+delta) > 1");
    } else {
        if (!(slack > 1.0 / (2.0 * c * ln2 * ln2)))
            throw std::invalid_argument("detect_from_recovery: eta fails eta > 1/(2 c ln^2 2)");
    }
    std::uint64_t size = 0;
    std::vector<std::uint8_t> covered(g.num_tests, 0);
    for (std::uint32_t i = 0; i < g.num_individuals; ++i) {
        if (!tau[i]) continue;
        ++size;
        for (std::uint32_t t : g.tests_of(i)) covered[t] = 1;
    }
    std::uint64_t ncov = 0;
    for (std::uint8_t b : covered) ncov += b;
    double need = (1.0 - slack) * static_cast<double>(g.num_tests);
    DetectionOutcome out;
    out.statistic_value = static_cast<double>(ncov);
    out.threshold_used = need;
    out.planted_side = +1;
    out.planted = static_cast<double>(size) <= (1.0 + slack) * static_cast<double>(k) &&
                  static_cast<double>(ncov) >= need;
    return out;
}

inline DetectionOutcome detect_from_recovery(const ReducedInstance& red,
                                             std::span<const std::uint8_t> tau, Design design,
                                             double c, std::uint64_t k, double slack) {
    return detect_from_recovery(red.graph, tau, design, c, k, slack);
}

}  // namespace gtlab
