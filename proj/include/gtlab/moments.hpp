#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "gtlab/designs.hpp"
#include "gtlab/numerics.hpp"
#include "gtlab/recovery.hpp"
#include "gtlab/rng.hpp"

namespace gtlab {

namespace mdetail {
inline constexpr double ln2 = 0.6931471805599453;
}

struct FirstMomentSolution {
    double q_hat = 0.0;
    double residual = 0.0;
    double exponent_per_kDelta = 0.0;  // (1/(k Delta)) log of the expected solution count
};

/// Solve q / (1 - (1-q)^Gamma) = Delta k / (Gamma M) on (0,1) and evaluate the
/// per-(k Delta) log of the expected solution count of the test-regular null
/// model at the solution.
inline FirstMomentSolution solve_first_moment(std::uint64_t N, std::uint64_t M, std::uint64_t k,
                                              std::uint64_t delta, std::uint64_t Gamma) {
    if (delta * k >= Gamma * M) throw std::invalid_argument("solve_first_moment: need Delta k < Gamma M");
    double rhs = static_cast<double>(delta) * static_cast<double>(k) /
                 (static_cast<double>(Gamma) * static_cast<double>(M));
    double g = static_cast<double>(Gamma);
    auto lhs = [g](double q) { return q / (1.0 - std::pow(1.0 - q, g)); };
    if (1.0 / g >= rhs) throw std::invalid_argument("solve_first_moment: no root in (0,1)");
    double q_hat = solve_root([&](double q) { return lhs(q) - rhs; },
                              RealBracket{1e-15, 1.0 - 1e-15, 1e-15, 400});
    FirstMomentSolution sol;
    sol.q_hat = q_hat;
    sol.residual = std::abs(lhs(q_hat) - rhs);
    double kd = static_cast<double>(k) * static_cast<double>(delta);
    double gm = static_cast<double>(Gamma) * static_cast<double>(M);
    double log_ez = log_binomial(N, k) +
                    static_cast<double>(M) * std::log(1.0 - std::pow(1.0 - q_hat, g)) -
                    log_binomial(Gamma * M, delta * k) - kd * std::log(q_hat) -
                    (gm - kd) * std::log1p(-q_hat);
    sol.exponent_per_kDelta = log_ez / kd;
    return sol;
}

// ---------------------------------------------------------------------------
// Overlap (second-moment) system in the rescaled variables (x0, x1), using
// the aggregate coverage function
//   W(x0,x1) = 1 - 2 exp(-2 ln2 (x0+x1)) + exp(-2 ln2 (2 x0 + x1)).
// ---------------------------------------------------------------------------

inline double coverage_w(double x0, double x1) {
    const double L = 2.0 * mdetail::ln2;
    return 1.0 - 2.0 * std::exp(-L * (x0 + x1)) + std::exp(-L * (2.0 * x0 + x1));
}

struct OverlapMomentSolution {
    double alpha = 0.0;
    double q00 = 0.0, q01 = 0.0, q10 = 0.0, q11 = 0.0;
    double x0 = 0.0, x1 = 0.0;
    std::array<double, 2> residuals{0.0, 0.0};
    double F_value = std::numeric_limits<double>::quiet_NaN();
    bool converged = false;
};

namespace mdetail {

inline std::array<double, 2> overlap_system(double x0, double x1, double alpha) {
    const double L = 2.0 * ln2;
    double e1 = std::exp(-L * (x0 + x1));
    double w = coverage_w(x0, x1);
    return {x1 / w - alpha, x0 * (1.0 - e1) / w - (1.0 - alpha)};
}

// one damped Newton step with analytic Jacobian; returns false when the
// Jacobian is unusable (caller falls back to nested bisection)
inline bool newton_step(double& x0, double& x1, double alpha, double& resid) {
    const double L = 2.0 * ln2;
    double e1 = std::exp(-L * (x0 + x1));
    double e2 = std::exp(-L * (2.0 * x0 + x1));
    double w = coverage_w(x0, x1);
    double wx0 = 2.0 * L * e1 - 2.0 * L * e2;
    double wx1 = 2.0 * L * e1 - L * e2;
    auto f = overlap_system(x0, x1, alpha);
    double j00 = -x1 * wx0 / (w * w);
    double j01 = 1.0 / w - x1 * wx1 / (w * w);
    double j10 = ((1.0 - e1) + x0 * L * e1) / w - x0 * (1.0 - e1) * wx0 / (w * w);
    double j11 = x0 * L * e1 / w - x0 * (1.0 - e1) * wx1 / (w * w);
    double det = j00 * j11 - j01 * j10;
    double scale = std::max({std::abs(j00), std::abs(j01), std::abs(j10), std::abs(j11)});
    if (!(std::abs(det) > 1e-12 * scale * scale)) return false;
    double dx0 = (f[0] * j11 - f[1] * j01) / det;
    double dx1 = (j00 * f[1] - j10 * f[0]) / det;
    double norm0 = std::abs(f[0]) + std::abs(f[1]);
    double damp = 1.0;
    for (int reduce = 0; reduce < 40; ++reduce) {
        double nx0 = std::max(x0 - damp * dx0, 0.0);
        double nx1 = std::max(x1 - damp * dx1, 1e-14);
        auto fn = overlap_system(nx0, nx1, alpha);
        double norm1 = std::abs(fn[0]) + std::abs(fn[1]);
        if (norm1 < norm0 || norm1 < 1e-13) {
            x0 = nx0;
            x1 = nx1;
            resid = norm1;
            return true;
        }
        damp *= 0.5;
    }
    resid = norm0;
    return false;
}

inline bool bisection_fallback(double alpha, double& x0, double& x1) {
    // inner: x1 / W(x0, x1) is not onto (0,1) for every x0 (its x1 -> 0 limit
    // is 1/(2 ln2) when x0 is tiny), so bracket validity is checked first
    auto inner_x1 = [alpha](double x0v, double& x1v) -> bool {
        auto f = [&](double t) { return t / coverage_w(x0v, t) - alpha; };
        const double lo = 1e-12, hi = 8.0;
        if (!(f(lo) < 0.0 && f(hi) > 0.0)) return false;
        x1v = solve_root(f, RealBracket{lo, hi, 1e-14, 300});
        return true;
    };
    auto outer = [&](double x0v, double& g) -> bool {
        double x1v;
        if (!inner_x1(x0v, x1v)) return false;
        const double L = 2.0 * ln2;
        double e1 = std::exp(-L * (x0v + x1v));
        g = x0v * (1.0 - e1) / coverage_w(x0v, x1v) - (1.0 - alpha);
        return true;
    };
    // scan for an outer sign change over feasible x0, then bisect
    const int grid = 200;
    double prev_x0 = 0.0, prev_g = 0.0;
    bool have_prev = false, bracketed = false;
    double a = 0.0, b = 0.0, ga = 0.0;
    for (int i = 0; i <= grid; ++i) {
        double x0v = 1e-6 * std::pow(8.0e6, static_cast<double>(i) / grid);
        double g;
        if (!outer(x0v, g)) {
            have_prev = false;
            continue;
        }
        if (have_prev && (g > 0) != (prev_g > 0)) {
            a = prev_x0;
            b = x0v;
            ga = prev_g;
            bracketed = true;
            break;
        }
        have_prev = true;
        prev_x0 = x0v;
        prev_g = g;
    }
    if (!bracketed) return false;
    for (int it = 0; it < 200 && b - a > 1e-14; ++it) {
        double mid = 0.5 * (a + b), g;
        if (!outer(mid, g)) return false;
        if ((g > 0) == (ga > 0)) {
            a = mid;
            ga = g;
        } else {
            b = mid;
        }
    }
    x0 = 0.5 * (a + b);
    return inner_x1(x0, x1);
}

}  // namespace mdetail

struct OverlapXs {
    double x0 = 0.0;
    double x1 = 0.5;
    std::array<double, 2> residuals{0.0, 0.0};
    bool converged = true;
};

/// Dimension-free core: solve the reduced two-equation overlap system for
/// (x0, x1) by damped Newton with continuation from alpha = 1 (where x0 = 0,
/// x1 = 1/2). Non-convergence is reported, not thrown.
inline OverlapXs solve_overlap_xs(double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0))
        throw std::invalid_argument("solve_overlap_xs: alpha outside (0,1]");
    OverlapXs out;
    double x0 = 0.0, x1 = 0.5;
    if (alpha < 1.0) {
        double a = 1.0;
        x0 = 1e-8;
        const double step = 0.01;
        bool newton_ok = true;
        while (a > alpha + 1e-15) {
            a = std::max(a - step, alpha);
            double resid = 1.0;
            bool ok = false;
            for (int it = 0; it < 60; ++it) {
                if (!mdetail::newton_step(x0, x1, a, resid)) break;
                if (resid <= 1e-13) {
                    ok = true;
                    break;
                }
            }
            if (!ok && resid > 1e-11) {
                newton_ok = false;
                break;
            }
        }
        if (!newton_ok) mdetail::bisection_fallback(alpha, x0, x1);
    }
    auto f = mdetail::overlap_system(x0, x1, alpha);
    out.x0 = x0;
    out.x1 = x1;
    out.residuals = {std::abs(f[0]), std::abs(f[1])};
    out.converged = out.residuals[0] <= 1e-10 && out.residuals[1] <= 1e-10;
    return out;
}

double F_alpha(double alpha, double c, double x0, double x1);

/// Same solve, reported in the joint-probability parameterization of the
/// given dimensions (q01 = q10 = x0 k/N, q11 = x1 k/N). M, delta and Gamma do
/// not enter the rescaled equations; they are part of the call signature for
/// symmetry with solve_first_moment. A finite c also fills in the rate value
/// at the solution.
inline OverlapMomentSolution solve_overlap_system(
    double alpha, std::uint64_t N, std::uint64_t /*M*/, std::uint64_t k, std::uint64_t /*delta*/,
    std::uint64_t /*Gamma*/, double c = std::numeric_limits<double>::quiet_NaN()) {
    OverlapXs xs = solve_overlap_xs(alpha);
    OverlapMomentSolution sol;
    sol.alpha = alpha;
    sol.x0 = xs.x0;
    sol.x1 = xs.x1;
    sol.residuals = xs.residuals;
    sol.converged = xs.converged;
    double scale = static_cast<double>(k) / static_cast<double>(N);
    sol.q01 = sol.q10 = xs.x0 * scale;
    sol.q11 = xs.x1 * scale;
    sol.q00 = 1.0 - 2.0 * sol.q01 - sol.q11;
    if (std::isfinite(c)) sol.F_value = F_alpha(alpha, c, xs.x0, xs.x1);
    return sol;
}

/// The printed piecewise-linear surrogate for (x0, x1); evaluated exactly as
/// stated. On [0.85, 1) the x1 component is negative, so consumers use the
/// solved system there.
inline std::pair<double, double> piecewise_x(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("piecewise_x: alpha outside (0,1)");
    if (alpha <= 0.25) return {-0.6 * alpha + 0.5, alpha / 5.0};
    if (alpha < 0.85) return {0.5 - 0.3 / mdetail::ln2 * alpha, alpha / (5.0 * mdetail::ln2)};
    return {1.0 - alpha, -(16.0 * alpha - 11.0) / 10.0};
}

/// Rate function of the overlap-alpha second moment, per k Delta. Any
/// feasible (x0, x1) yields an upper bound on the true rate at that alpha.
inline double F_alpha(double alpha, double c, double x0, double x1) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("F_alpha: alpha outside (0,1]");
    if (!(x1 > 0.0) || x0 < 0.0 || (alpha < 1.0 && !(x0 > 0.0)))
        throw std::domain_error("F_alpha: need x0, x1 > 0");
    double w = coverage_w(x0, x1);
    if (!(w > 0.0)) throw std::domain_error("F_alpha: coverage term W <= 0");
    double out = alpha * std::log(alpha / x1) + (2.0 - alpha) * (1.0 - c * mdetail::ln2 * mdetail::ln2) /
                                                    (c * mdetail::ln2);
    if (alpha < 1.0) out += 2.0 * (1.0 - alpha) * std::log((1.0 - alpha) / x0);
    out += std::log(w) / (2.0 * mdetail::ln2) + (2.0 * x0 + x1) - (2.0 - alpha);
    return out;
}

/// Minimum over the grid of [2 (1 - c ln2)/(c ln2) - F(alpha)], with F at the
/// solved (x0,x1) on [0.85,1) and at the piecewise surrogate elsewhere.
/// Positive margin certifies the second-moment dominance on the grid. After
/// the density rescaling the rate function does not depend on theta; the
/// parameter is kept for interface symmetry and validated only.
inline double second_moment_margin(double c, double theta, std::span<const double> alpha_grid) {
    if (alpha_grid.empty()) throw std::invalid_argument("second_moment_margin: empty grid");
    if (!(theta > 0.0 && theta < 1.0)) throw std::invalid_argument("second_moment_margin: theta outside (0,1)");
    if (!(c > 0.0 && c < 1.0 / mdetail::ln2)) throw std::invalid_argument("second_moment_margin: need c < 1/ln 2");
    double bound = 2.0 * (1.0 - c * mdetail::ln2) / (c * mdetail::ln2);
    double margin = std::numeric_limits<double>::infinity();
    for (double alpha : alpha_grid) {
        double x0, x1;
        if (alpha >= 0.85) {
            auto xs = solve_overlap_xs(alpha);
            x0 = xs.x0;
            x1 = xs.x1;
        } else {
            std::tie(x0, x1) = piecewise_x(alpha);
        }
        margin = std::min(margin, bound - F_alpha(alpha, c, x0, x1));
    }
    return margin;
}

/// Hypergeometric overlap pmf in log space: the chance two independent
/// k-subsets of [N] share exactly ell elements.
inline double overlap_prob(std::uint64_t ell, std::uint64_t k, std::uint64_t N) {
    if (ell > k || k > N) throw std::invalid_argument("overlap_prob: need ell <= k <= N");
    if (k - ell > N - k) return -std::numeric_limits<double>::infinity();
    return log_binomial(k, ell) + log_binomial(N - k, k - ell) - log_binomial(N, k);
}

// ---------------------------------------------------------------------------
// Overlap-resolved second-moment ledger for the Bernoulli testing pair.
// ---------------------------------------------------------------------------

struct ChiSqLedger {
    double theta = 0.0, c = 0.0, t = 0.0, epsilon = 0.0;
    std::uint64_t n = 0;
    std::uint64_t k = 0, N = 0, M = 0, d = 0;
    double q = 0.0;
    std::vector<double> log_terms;       // index ell = 0..k
    double log_T_low = 0.0;              // log-sum-exp over ell <= floor(eps k)
    double log_T_high = 0.0;             // log-sum-exp over the rest
    double p_good_union = 1.0;           // union-bound estimate of the degree-cap event
    double p_good_mc = 1.0;              // Monte Carlo estimate of the same

    double total_low() const { return std::exp(log_T_low); }
    double total() const {
        return std::exp(log_sum_exp(std::array{log_T_low, log_T_high}));
    }
};

/// Per-overlap terms of the (optionally degree-capped) second moment at
/// finite n: term(ell) = Pr(ell) * 2^{M ell/k} * P(Binom(M, r) <= ell d),
/// with r = 4 * 2^{-ell/k} (1 - 2^{-ell/k}). t = infinity drops the cap.
inline ChiSqLedger bern_chi_sq(double theta, double c, double t, double epsilon, std::uint64_t n,
                               std::uint64_t mc_samples = 200,
                               std::uint64_t mc_seed = 0x5eedULL) {
    if (!(theta > 0.0 && theta < 1.0) || !(c > 0.0)) throw std::invalid_argument("bern_chi_sq: bad (theta, c)");
    if (!(t > 1.0)) throw std::invalid_argument("bern_chi_sq: need t > 1 (or infinity)");
    if (!(epsilon > 0.0 && epsilon <= 1.0)) throw std::invalid_argument("bern_chi_sq: epsilon outside (0,1]");
    ChiSqLedger led;
    led.theta = theta;
    led.c = c;
    led.t = t;
    led.epsilon = epsilon;
    led.n = n;
    double nd = static_cast<double>(n);
    led.k = round_half_up(std::pow(nd, theta));
    led.N = round_half_up(std::pow(nd, 1.0 - (1.0 - theta) * (c / 2.0) * mdetail::ln2));
    double lnnk = std::log(nd / static_cast<double>(led.k));
    led.M = round_half_up((c / 2.0) * static_cast<double>(led.k) * lnnk);
    if (led.N < 2 * led.k) throw std::invalid_argument("bern_chi_sq: dimensions leave k too dense");
    double k_real = static_cast<double>(led.k);
    double nu = solve_root(
        [k_real](double v) { return std::pow(1.0 - v / k_real, k_real) - 0.5; },
        RealBracket{1e-9, k_real * (1.0 - 1e-12), 1e-15, 300});
    led.q = nu / k_real;

    const bool capped = std::isfinite(t);
    double log_pa = 0.0;
    if (capped) {
        led.d = static_cast<std::uint64_t>(
            std::ceil(2.0 * t * led.q * static_cast<double>(led.M)));
        double bad = static_cast<double>(led.k) *
                     binom_tail(led.M, 2.0 * led.q, led.d, TailSide::upper, TailMode::exact);
        led.p_good_union = 1.0 - bad;
        Rng rng(mc_seed);
        std::uint64_t good = 0;
        std::vector<std::uint32_t> deg(led.k);
        for (std::uint64_t s = 0; s < mc_samples; ++s) {
            std::fill(deg.begin(), deg.end(), 0);
            for (std::uint64_t a = 0; a < led.M; ++a) {
                std::uint32_t ones =
                    detail::truncated_binomial(static_cast<std::uint32_t>(led.k), led.q, rng);
                for (std::uint32_t slot : rng.distinct(static_cast<std::uint32_t>(led.k), ones))
                    ++deg[slot];
            }
            bool ok = true;
            for (std::uint32_t dv : deg)
                if (dv >= led.d) {
                    ok = false;
                    break;
                }
            good += ok;
        }
        led.p_good_mc = static_cast<double>(good) / static_cast<double>(mc_samples);
        double pa = led.p_good_union > 0.0 ? led.p_good_union : led.p_good_mc;
        if (!(pa > 0.0)) throw std::invalid_argument("bern_chi_sq: degree-cap event has zero estimated mass");
        log_pa = std::log(pa);
    }

    led.log_terms.resize(led.k + 1);
    for (std::uint64_t ell = 0; ell <= led.k; ++ell) {
        double lt = overlap_prob(ell, led.k, led.N) +
                    static_cast<double>(led.M) * (static_cast<double>(ell) / k_real) * mdetail::ln2;
        if (capped) {
            double x = std::pow(2.0, -static_cast<double>(ell) / k_real);
            double r = std::min(std::max(4.0 * x * (1.0 - x), 0.0), 1.0);
            std::uint64_t cap = std::min(ell * led.d, led.M);
            lt += log_binom_tail_exact(led.M, r, cap, TailSide::lower) - 2.0 * log_pa;
        }
        led.log_terms[ell] = lt;
    }
    auto cut = static_cast<std::uint64_t>(std::floor(epsilon * k_real));
    cut = std::min(cut, led.k);
    led.log_T_low = log_sum_exp(std::span(led.log_terms).subspan(0, cut + 1));
    led.log_T_high = (cut + 1 <= led.k)
                         ? log_sum_exp(std::span(led.log_terms).subspan(cut + 1))
                         : -std::numeric_limits<double>::infinity();
    return led;
}

/// Analytic overlap-sum for the Bernoulli pair at arbitrary q (no reliance on
/// (1-q)^k = 1/2): chi^2 + 1 = sum_ell Pr(ell) J(ell)^M / (1-(1-q)^k)^{2M}
/// with per-test joint coverage J(ell) = 1 - 2(1-q)^k + (1-q)^{2k-ell}.
inline double bern_chi_sq_exact_ellsum(std::uint32_t N, std::uint32_t M, std::uint32_t k,
                                       double q) {
    if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("bern_chi_sq_exact_ellsum: q outside (0,1]");
    double cov = 1.0 - std::pow(1.0 - q, static_cast<double>(k));
    double sum = 0.0;
    for (std::uint32_t ell = 0; ell <= k; ++ell) {
        double pr = std::exp(overlap_prob(ell, k, N));
        double joint = 1.0 - 2.0 * std::pow(1.0 - q, static_cast<double>(k)) +
                       std::pow(1.0 - q, static_cast<double>(2 * k - ell));
        sum += pr * std::pow(joint / (cov * cov), static_cast<double>(M));
    }
    return sum - 1.0;
}

/// chi^2(P || Q) by full enumeration of the sample space (tiny dimensions
/// only). Bernoulli enumerates all 2^{NM} graphs; the constant-column variant
/// walks all C(M,Delta)^N adjacency tuples and is gated behind its flag.
inline double exact_chi_sq_oracle(Design design, std::uint32_t N, std::uint32_t M, std::uint32_t k,
                                  double q_or_delta, bool enable_cc = false) {
    if (k > N) throw std::invalid_argument("exact_chi_sq_oracle: k > N");
    if (design == Design::bernoulli) {
        if (static_cast<std::uint64_t>(N) * M > 20)
            throw std::invalid_argument("exact_chi_sq_oracle: N*M > 20");
        double q = q_or_delta;
        if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("exact_chi_sq_oracle: q outside (0,1]");
        double cov = 1.0 - std::pow(1.0 - q, static_cast<double>(k));
        if (!(cov > 0.0)) throw std::invalid_argument("exact_chi_sq_oracle: coverage event has zero mass");
        std::vector<std::uint64_t> usets;
        detail::for_each_ksubset(N, k, [&](std::uint64_t u) { usets.push_back(u); });
        const std::uint32_t bits = N * M;
        double acc = 0.0;
        for (std::uint64_t x = 0; x < (1ULL << bits); ++x) {
            int e = std::popcount(x);
            double qx = std::pow(q, e) * std::pow(1.0 - q, static_cast<double>(bits - e));
            if (qx == 0.0) continue;
            // test a covered by u iff some individual i in u has edge (i,a)
            std::uint64_t cover_cnt = 0;
            for (std::uint64_t u : usets) {
                bool all = true;
                for (std::uint32_t a = 0; a < M; ++a) {
                    bool hit = false;
                    for (std::uint32_t i = 0; i < N && !hit; ++i)
                        if ((u >> i) & 1) hit = (x >> (i * M + a)) & 1;
                    if (!hit) {
                        all = false;
                        break;
                    }
                }
                cover_cnt += all;
            }
            double frac = static_cast<double>(cover_cnt) / static_cast<double>(usets.size());
            acc += qx * frac * frac;
        }
        return acc / std::pow(cov, 2.0 * M) - 1.0;
    }

    if (!enable_cc) throw std::invalid_argument("exact_chi_sq_oracle: constant-column enumeration is gated; pass enable_cc");
    auto delta = static_cast<std::uint32_t>(q_or_delta);
    if (delta > M) throw std::invalid_argument("exact_chi_sq_oracle: delta > M");
    if (M >= 32) throw std::invalid_argument("exact_chi_sq_oracle: M >= 32");
    std::vector<std::uint32_t> choice_masks;  // all Delta-subsets of [M] as test bitmasks
    detail::for_each_ksubset(M, delta, [&](std::uint64_t mask) {
        choice_masks.push_back(static_cast<std::uint32_t>(mask));
    });
    const double nchoice = static_cast<double>(choice_masks.size());
    double total = std::pow(nchoice, static_cast<double>(N));
    if (total > 1e7) throw std::invalid_argument("exact_chi_sq_oracle: C(M,Delta)^N > 1e7");
    std::vector<std::uint64_t> usets;
    detail::for_each_ksubset(N, k, [&](std::uint64_t u) { usets.push_back(u); });
    const std::uint32_t full = (M >= 32) ? 0xffffffffu : ((1u << M) - 1);

    // coverage probability of a fixed k-set under the null
    double cov_hits = 0.0;
    {
        std::vector<std::uint32_t> idx(k, 0);
        std::vector<std::uint32_t> unions(k + 1, 0);
        std::uint64_t tuples = 1;
        for (std::uint32_t j = 0; j < k; ++j) tuples *= choice_masks.size();
        for (std::uint64_t code = 0; code < tuples; ++code) {
            std::uint64_t c2 = code;
            std::uint32_t un = 0;
            for (std::uint32_t j = 0; j < k; ++j) {
                un |= choice_masks[c2 % choice_masks.size()];
                c2 /= choice_masks.size();
            }
            cov_hits += (un == full);
        }
        cov_hits /= static_cast<double>(tuples);
    }
    if (!(cov_hits > 0.0)) throw std::invalid_argument("exact_chi_sq_oracle: coverage event has zero mass");

    double acc = 0.0;
    std::vector<std::uint32_t> pick(N, 0);
    auto tuples_total = static_cast<std::uint64_t>(total);
    for (std::uint64_t code = 0; code < tuples_total; ++code) {
        std::uint64_t c2 = code;
        for (std::uint32_t i = 0; i < N; ++i) {
            pick[i] = choice_masks[c2 % choice_masks.size()];
            c2 /= choice_masks.size();
        }
        std::uint64_t cover_cnt = 0;
        for (std::uint64_t u : usets) {
            std::uint32_t un = 0;
            for (std::uint32_t i = 0; i < N; ++i)
                if ((u >> i) & 1) un |= pick[i];
            cover_cnt += (un == full);
        }
        double frac = static_cast<double>(cover_cnt) / static_cast<double>(usets.size());
        acc += frac * frac;
    }
    acc /= total;
    return acc / (cov_hits * cov_hits) - 1.0;
}

}  // namespace gtlab
