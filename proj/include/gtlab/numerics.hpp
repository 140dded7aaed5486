#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gtlab {

struct NonConvergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RealBracket {
    double lo;
    double hi;
    double tol = 1e-12;  // absolute
    int max_iter = 200;
};

inline double log_sum_exp(std::span<const double> logs) {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : logs) m = std::max(m, v);
    if (!std::isfinite(m)) return m;
    double acc = 0.0;
    for (double v : logs) acc += std::exp(v - m);
    return m + std::log(acc);
}

/// Bracketed scalar root finding: bisection with secant acceleration.
/// Returns x with |f(x)| <= tol or bracket width <= tol.
inline double solve_root(const std::function<double(double)>& f, RealBracket bracket) {
    if (!(bracket.lo < bracket.hi) || !(bracket.tol > 0) || bracket.max_iter < 1)
        throw std::invalid_argument("solve_root: bad bracket");
    double a = bracket.lo, b = bracket.hi;
    double fa = f(a), fb = f(b);
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    if ((fa > 0) == (fb > 0)) throw std::invalid_argument("solve_root: no sign change on bracket");
    for (int it = 0; it < bracket.max_iter; ++it) {
        double w = b - a;
        double x = 0.5 * (a + b);
        if (it % 2 == 0 && fb != fa) {
            // secant step on even iterations; bisection keeps the bracket
            // shrinking geometrically regardless
            double s = b - fb * (b - a) / (fb - fa);
            if (s > a + 1e-3 * w && s < b - 1e-3 * w) x = s;
        }
        double fx = f(x);
        if (std::abs(fx) <= bracket.tol || w <= bracket.tol) return x;
        if ((fx > 0) == (fa > 0)) {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
    }
    if (b - a <= bracket.tol * 16) return 0.5 * (a + b);
    throw NonConvergenceError("solve_root: no convergence after max_iter");
}

/// Principal Lambert branch: the unique y >= -1 with y*e^y = x, for x >= -1/e.
inline double lambert_w0(double x) {
    const double branch = -std::exp(-1.0);
    if (x < branch - 1e-15) throw std::domain_error("lambert_w0: x < -1/e");
    if (x <= branch) return -1.0;

    double w;
    double p2 = 2.0 * (std::exp(1.0) * x + 1.0);
    if (p2 < 0) p2 = 0;
    if (p2 < 0.4) {
        // series around the branch point, p = sqrt(2(e x + 1))
        double p = std::sqrt(p2);
        w = -1.0 + p - p2 / 3.0 + 11.0 / 72.0 * p * p2 - 43.0 / 540.0 * p2 * p2;
    } else if (x < std::exp(1.0)) {
        w = x / (1.0 + x);
        if (!std::isfinite(w) || w < -1.0) w = 0.0;
    } else {
        double l1 = std::log(x), l2 = std::log(l1);
        w = l1 - l2 + l2 / l1;
    }

    const double target = 0.5e-12 * std::max(1.0, std::abs(x));
    for (int it = 0; it < 60; ++it) {
        double ew = std::exp(w);
        double f = w * ew - x;
        if (std::abs(f) <= target) return w;
        double d1 = ew * (w + 1.0);
        if (d1 == 0.0) break;
        double halley = d1 - f * (w + 2.0) / (2.0 * (w + 1.0));
        double step = std::isfinite(halley) && halley != 0.0 ? f / halley : f / d1;
        w -= step;
        if (w < -1.0) w = -1.0 + 1e-16;
    }
    double ew = std::exp(w);
    if (std::abs(w * ew - x) <= 1e-12 * std::max(1.0, std::abs(x))) return w;
    // safeguarded fallback: y e^y is increasing on [-1, inf)
    double hi = std::max(2.0, std::log(std::max(x, 1.0)) + 2.0);
    return solve_root([x](double y) { return y * std::exp(y) - x; },
                      RealBracket{-1.0, hi, 1e-15, 300});
}

/// D(a||p) for Bernoulli distributions, in nats. Endpoints are rejected;
/// callers needing the a in {0,1} limits use kl_bernoulli_limit.
inline double kl_bernoulli(double a, double p) {
    if (!(a > 0.0 && a < 1.0 && p > 0.0 && p < 1.0))
        throw std::domain_error("kl_bernoulli: arguments must lie in (0,1)");
    return a * std::log(a / p) + (1.0 - a) * std::log((1.0 - a) / (1.0 - p));
}

// D(a||p) extended by continuity to a in [0,1]
inline double kl_bernoulli_limit(double a, double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("kl_bernoulli_limit: p must lie in (0,1)");
    if (a <= 0.0) return -std::log1p(-p);
    if (a >= 1.0) return -std::log(p);
    return kl_bernoulli(a, p);
}

inline double log_binomial(std::uint64_t n, std::uint64_t k) {
    if (k > n) throw std::invalid_argument("log_binomial: k > n");
    return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
           std::lgamma(static_cast<double>(n - k) + 1.0);
}

inline double log_multinomial(std::uint64_t n, std::span<const std::uint64_t> parts) {
    std::uint64_t used = 0;
    double out = std::lgamma(static_cast<double>(n) + 1.0);
    for (std::uint64_t p : parts) {
        used += p;
        out -= std::lgamma(static_cast<double>(p) + 1.0);
    }
    if (used > n) throw std::invalid_argument("log_multinomial: parts exceed n");
    out -= std::lgamma(static_cast<double>(n - used) + 1.0);  // implicit remainder
    return out;
}

enum class TailSide { lower, upper };
enum class TailMode { exact, chernoff_upper, chernoff_lower };

/// log P(Binom(n,p) <= k) resp. log P(Binom(n,p) >= k), summed term by term
/// in log space.
inline double log_binom_tail_exact(std::uint64_t n, double p, std::uint64_t k, TailSide side) {
    if (k > n) throw std::invalid_argument("binom_tail: k > n");
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("binom_tail: p outside [0,1]");
    if (p == 0.0) return (side == TailSide::lower || k == 0) ? 0.0 : -std::numeric_limits<double>::infinity();
    if (p == 1.0) return (side == TailSide::upper || k == n) ? 0.0 : -std::numeric_limits<double>::infinity();
    std::uint64_t jlo = (side == TailSide::lower) ? 0 : k;
    std::uint64_t jhi = (side == TailSide::lower) ? k : n;
    double lp = std::log(p), lq = std::log1p(-p);
    std::vector<double> terms;
    terms.reserve(jhi - jlo + 1);
    for (std::uint64_t j = jlo; j <= jhi; ++j)
        terms.push_back(log_binomial(n, j) + static_cast<double>(j) * lp +
                        static_cast<double>(n - j) * lq);
    double out = log_sum_exp(terms);
    return std::min(out, 0.0);
}

/// Binomial tail probability. exact sums the pmf; the chernoff modes return
/// the entropy bound exp(-n D(k/n || p)) and its square-root-prefactor lower
/// counterpart, and require k/n strictly on the requested side of p.
inline double binom_tail(std::uint64_t n, double p, std::uint64_t k, TailSide side, TailMode mode) {
    if (mode == TailMode::exact) return std::exp(log_binom_tail_exact(n, p, k, side));
    if (k > n) throw std::invalid_argument("binom_tail: k > n");
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("binom_tail: p outside (0,1)");
    double a = static_cast<double>(k) / static_cast<double>(n);
    bool ok = (side == TailSide::upper) ? (a > p) : (a < p);
    if (!ok) throw std::invalid_argument("binom_tail: chernoff mode with k/n on the wrong side of p");
    double d = kl_bernoulli_limit(a, p);
    double bound = std::exp(-static_cast<double>(n) * d);
    if (mode == TailMode::chernoff_upper) return bound;
    if (k == 0 || k == n)
        throw std::invalid_argument("binom_tail: chernoff_lower needs 0 < k < n");
    return bound / std::sqrt(8.0 * static_cast<double>(k) * (1.0 - a));
}

}  // namespace gtlab
