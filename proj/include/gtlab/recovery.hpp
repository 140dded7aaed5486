#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "gtlab/designs.hpp"
#include "gtlab/rng.hpp"

namespace gtlab {

struct RecoveryResult {
    std::vector<std::uint8_t> estimate;
    double overlap_norm = 0.0;        // <tau, sigma> / (||tau|| ||sigma||)
    std::uint64_t overlap_raw = 0;    // <tau, sigma>
    std::uint64_t false_pos = 0;
    std::uint64_t false_neg = 0;
};

inline RecoveryResult make_recovery_result(std::vector<std::uint8_t> estimate,
                                           std::span<const std::uint8_t> truth) {
    RecoveryResult r;
    std::uint64_t tp = 0, fp = 0, fn = 0, ntau = 0, nsig = 0;
    for (std::size_t i = 0; i < estimate.size(); ++i) {
        bool e = estimate[i], s = truth[i];
        ntau += e;
        nsig += s;
        if (e && s) ++tp;
        if (e && !s) ++fp;
        if (!e && s) ++fn;
    }
    r.estimate = std::move(estimate);
    r.overlap_raw = tp;
    r.false_pos = fp;
    r.false_neg = fn;
    r.overlap_norm = (ntau && nsig)
                         ? static_cast<double>(tp) /
                               std::sqrt(static_cast<double>(ntau) * static_cast<double>(nsig))
                         : 0.0;
    return r;
}

/// COMP: report every individual that appears in no negative test.
/// Never produces a false negative.
inline RecoveryResult comp_recover(const Instance& inst) {
    const auto& g = inst.graph;
    std::vector<std::uint8_t> tau(g.num_individuals, 0);
    for (std::uint32_t i = 0; i < g.num_individuals; ++i) {
        bool survives = true;
        for (std::uint32_t t : g.tests_of(i))
            if (!inst.outcomes[t]) {
                survives = false;
                break;
            }
        tau[i] = survives;
    }
    std::vector<std::uint8_t> truth(g.num_individuals, 0);
    for (std::uint32_t i : inst.infected) truth[i] = 1;
    return make_recovery_result(std::move(tau), truth);
}

/// COMP survivors filtered by a minimum count of positive-test participations
/// (a survivor's tests are all positive, so the count is its degree).
inline RecoveryResult separate_decoding(const Instance& inst, std::uint64_t pos_threshold) {
    const auto& g = inst.graph;
    std::vector<std::uint8_t> tau(g.num_individuals, 0);
    for (std::uint32_t i = 0; i < g.num_individuals; ++i) {
        bool survives = true;
        std::uint64_t pos = 0;
        for (std::uint32_t t : g.tests_of(i)) {
            if (!inst.outcomes[t]) {
                survives = false;
                break;
            }
            ++pos;
        }
        tau[i] = survives && pos >= pos_threshold;
    }
    std::vector<std::uint8_t> truth(g.num_individuals, 0);
    for (std::uint32_t i : inst.infected) truth[i] = 1;
    return make_recovery_result(std::move(tau), truth);
}

// ---------------------------------------------------------------------------
// Exhaustive solution-set machinery on small reduced instances. A solution is
// a k-subset of the individuals meeting every (positive) test. Tests are
// bitmasks over individuals, so instances are limited to 64 individuals and
// C(N,k) <= 1e8 subsets.
// ---------------------------------------------------------------------------

struct OverlapSpectrum {
    std::uint32_t k = 0;
    std::vector<std::uint64_t> counts;  // index ell = 0..k
    std::uint64_t total = 0;            // pairs mode: number of ordered pairs
    std::uint64_t z = 0;                // |S(G)|
};

enum class SpectrumMode { vs_truth, pairs };

struct SolutionSet {
    std::uint32_t num_individuals = 0;
    std::uint32_t k = 0;
    std::uint64_t sigma_mask = 0;
    std::vector<std::uint64_t> masks;
};

namespace detail {

inline double binomial_count(std::uint32_t n, std::uint32_t k) {
    if (k > n) return 0.0;
    double out = 1.0;
    for (std::uint32_t j = 0; j < k; ++j) out *= static_cast<double>(n - j) / (j + 1);
    return out;
}

template <class Fn>
void for_each_ksubset(std::uint32_t n, std::uint32_t k, Fn&& fn) {
    if (k == 0) {
        fn(std::uint64_t{0});
        return;
    }
    std::vector<std::uint32_t> idx(k);
    std::iota(idx.begin(), idx.end(), 0);
    while (true) {
        std::uint64_t mask = 0;
        for (std::uint32_t i : idx) mask |= std::uint64_t{1} << i;
        fn(mask);
        // next combination in lexicographic order
        std::int64_t j = k - 1;
        while (j >= 0 && idx[j] == n - k + j) --j;
        if (j < 0) break;
        ++idx[j];
        for (std::uint32_t l = j + 1; l < k; ++l) idx[l] = idx[l - 1] + 1;
    }
}

inline std::vector<std::uint64_t> test_masks(const BipartiteGraph& g) {
    std::vector<std::uint64_t> tm(g.num_tests, 0);
    for (std::uint32_t i = 0; i < g.num_individuals; ++i)
        for (std::uint32_t t : g.tests_of(i)) tm[t] |= std::uint64_t{1} << i;
    return tm;
}

inline void check_enumerable(const BipartiteGraph& g, std::uint32_t k) {
    if (g.num_individuals > 64)
        throw std::invalid_argument("solution enumeration: more than 64 individuals");
    if (binomial_count(g.num_individuals, k) > 1e8)
        throw std::invalid_argument("solution enumeration: C(N,k) > 1e8");
}

}  // namespace detail

inline SolutionSet list_solutions(const ReducedInstance& red, std::uint32_t k) {
    detail::check_enumerable(red.graph, k);
    SolutionSet out;
    out.num_individuals = red.graph.num_individuals;
    out.k = k;
    for (std::uint32_t i = 0; i < red.sigma_prime.size(); ++i)
        if (red.sigma_prime[i]) out.sigma_mask |= std::uint64_t{1} << i;
    auto tm = detail::test_masks(red.graph);
    detail::for_each_ksubset(out.num_individuals, k, [&](std::uint64_t mask) {
        for (std::uint64_t t : tm)
            if (!(t & mask)) return;
        out.masks.push_back(mask);
    });
    return out;
}

inline OverlapSpectrum enumerate_solutions(const ReducedInstance& red, std::uint32_t k,
                                           SpectrumMode mode) {
    SolutionSet sols = list_solutions(red, k);
    OverlapSpectrum spec;
    spec.k = k;
    spec.counts.assign(k + 1, 0);
    spec.z = sols.masks.size();
    if (mode == SpectrumMode::vs_truth) {
        for (std::uint64_t m : sols.masks)
            ++spec.counts[std::popcount(m & sols.sigma_mask)];
        spec.total = spec.z;
    } else {
        double work = static_cast<double>(spec.z) * static_cast<double>(spec.z);
        if (work > 1e8) throw std::invalid_argument("enumerate_solutions: too many solution pairs");
        for (std::uint64_t a : sols.masks)
            for (std::uint64_t b : sols.masks) ++spec.counts[std::popcount(a & b)];
        spec.total = spec.z * spec.z;
    }
    return spec;
}

inline std::vector<std::uint8_t> mask_to_vector(std::uint64_t mask, std::uint32_t n) {
    std::vector<std::uint8_t> out(n, 0);
    for (std::uint32_t i = 0; i < n; ++i) out[i] = (mask >> i) & 1;
    return out;
}

inline std::uint64_t sample_uniform_solution_mask(const SolutionSet& sols, Rng& rng) {
    if (sols.masks.empty()) throw std::invalid_argument("sample_uniform_solution: empty solution set");
    return sols.masks[rng.below(sols.masks.size())];
}

inline std::vector<std::uint8_t> sample_uniform_solution(const ReducedInstance& red,
                                                         std::uint32_t k, Rng& rng) {
    SolutionSet sols = list_solutions(red, k);
    return mask_to_vector(sample_uniform_solution_mask(sols, rng), sols.num_individuals);
}

/// First lexicographic element of the solution set; the optimal-reference
/// decoder at enumerable scale.
inline RecoveryResult brute_force_map(const ReducedInstance& red, std::uint32_t k) {
    detail::check_enumerable(red.graph, k);
    auto tm = detail::test_masks(red.graph);
    std::uint64_t found = 0;
    bool have = false;
    detail::for_each_ksubset(red.graph.num_individuals, k, [&](std::uint64_t mask) {
        if (have) return;
        for (std::uint64_t t : tm)
            if (!(t & mask)) return;
        found = mask;
        have = true;
    });
    if (!have) throw std::invalid_argument("brute_force_map: empty solution set");
    return make_recovery_result(mask_to_vector(found, red.graph.num_individuals), red.sigma_prime);
}

struct AonRow {
    double c = 0.0;
    std::uint64_t trial = 0;
    double overlap_norm = 0.0;
    std::uint64_t overlap_raw = 0;
    double z = 0.0;
};

/// One reduction + uniform-solution draw at (theta, c, n); the RNG stream is
/// keyed by stream_index so sweeps parallelize deterministically.
inline AonRow aon_experiment_single(double theta, double c, std::uint64_t n, std::uint64_t trial,
                                    std::uint64_t master_seed, std::uint64_t stream_index) {
    Rng rng = Rng::stream(master_seed, stream_index);
    auto params = DesignParams::make(n, theta, c, Design::constant_column, master_seed);
    ReducedInstance red = gen_planted_via_comp(params, rng);
    SolutionSet sols = list_solutions(red, static_cast<std::uint32_t>(params.k));
    std::uint64_t tau = sample_uniform_solution_mask(sols, rng);
    std::uint64_t raw = std::popcount(tau & sols.sigma_mask);
    AonRow row;
    row.c = c;
    row.trial = trial;
    row.overlap_raw = raw;
    row.overlap_norm = static_cast<double>(raw) / static_cast<double>(params.k);
    row.z = static_cast<double>(sols.masks.size());
    return row;
}

/// Sweep c at fixed (theta, n): per trial, reduce a fresh constant-column
/// instance and record the overlap of a uniformly random solution with the
/// surviving ground truth.
inline std::vector<AonRow> aon_experiment(double theta, std::span<const double> c_grid,
                                          std::uint64_t n, std::uint64_t trials,
                                          std::uint64_t master_seed) {
    std::vector<AonRow> rows;
    rows.reserve(c_grid.size() * trials);
    for (std::size_t ci = 0; ci < c_grid.size(); ++ci)
        for (std::uint64_t t = 0; t < trials; ++t)
            rows.push_back(aon_experiment_single(theta, c_grid[ci], n, t, master_seed,
                                                 ci * trials + t));
    return rows;
}

}  // namespace gtlab
