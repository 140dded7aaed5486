#pragma once

#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "gtlab/designs.hpp"
#include "gtlab/detection.hpp"
#include "gtlab/moments.hpp"
#include "gtlab/recovery.hpp"
#include "gtlab/thresholds.hpp"
#include "gtlab/version.hpp"

namespace gtlab {

inline std::string fmt_g(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

/// "lo:hi:step" (inclusive) or a comma-separated list.
inline std::vector<double> parse_grid(const std::string& spec) {
    std::vector<double> out;
    if (spec.find(':') != std::string::npos) {
        double lo, hi, step;
        if (std::sscanf(spec.c_str(), "%lf:%lf:%lf", &lo, &hi, &step) != 3 || step <= 0)
            throw std::invalid_argument("bad grid spec: " + spec);
        for (double v = lo; v <= hi + step * 0.5; v += step) out.push_back(v);
        return out;
    }
    std::istringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) out.push_back(std::stod(tok));
    }
    if (out.empty()) throw std::invalid_argument("empty grid spec: " + spec);
    return out;
}

/// Run fn(0..trials-1) on a small worker pool. Work is keyed by trial index,
/// so outputs must be written into per-index slots; results are then
/// independent of scheduling.
template <class Fn>
void parallel_trials(std::uint64_t trials, unsigned workers, Fn&& fn) {
    if (workers <= 1 || trials <= 1) {
        for (std::uint64_t i = 0; i < trials; ++i) fn(i);
        return;
    }
    std::atomic<std::uint64_t> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    auto work = [&] {
        while (true) {
            std::uint64_t i = next.fetch_add(1);
            if (i >= trials) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(err_mu);
                if (!err) err = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    unsigned nthreads = std::min<std::uint64_t>(workers, trials);
    pool.reserve(nthreads);
    for (unsigned w = 0; w < nthreads; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

// key=value metadata block; worker count is deliberately not part of it so
// outputs are byte-identical across worker counts
class MetaBlock {
  public:
    void add(const std::string& key, const std::string& value) { kv_.emplace_back(key, value); }
    void add(const std::string& key, double value) { kv_.emplace_back(key, fmt_g(value)); }
    void add(const std::string& key, std::uint64_t value) { kv_.emplace_back(key, std::to_string(value)); }
    void write(std::ostream& os) const {
        os << "# tool=gt_lab\n# version=" << version << '\n';
        for (const auto& [k, v] : kv_) os << "# " << k << '=' << v << '\n';
    }

  private:
    std::vector<std::pair<std::string, std::string>> kv_;
};

// ---------------------------------------------------------------------------
// detect
// ---------------------------------------------------------------------------

struct DetectRow {
    std::uint64_t trial = 0;
    bool planted_truth = false;
    double statistic = 0.0;
    bool planted_decision = false;
};

struct DetectResult {
    std::string statistic_name;
    std::vector<DetectRow> rows;  // trial-major, null sample then planted sample
    CalibrationReport report;
    double threshold = 0.0;
    int planted_side = +1;
    double accuracy = 0.0;  // held-out (second half of the trials)
    double t_used = 0.0;
};

inline std::string resolve_statistic(Design design, const std::string& name) {
    if (name.empty() || name == "auto")
        return design == Design::constant_column ? "cc_degree_variance_centered" : "bern_high_degree";
    return name;
}

/// Matched null/planted detection experiment: Bernoulli samples at the fixed
/// center dimensions via the exact sampler, constant-column samples through
/// the full reduction with a dimension-matched null per trial. Calibrates on
/// the first half of the trials and reports held-out accuracy on the rest.
inline DetectResult run_detection_experiment(Design design, double theta, double c,
                                             std::uint64_t n, const std::string& statistic,
                                             std::uint64_t trials, std::uint64_t seed,
                                             unsigned workers = 1) {
    if (trials < 4) throw std::invalid_argument("run_detection_experiment: need at least 4 trials");
    DetectResult res;
    res.statistic_name = resolve_statistic(design, statistic);
    auto params = DesignParams::make(n, theta, c, design, seed);
    double t = choose_t(theta, c);
    res.t_used = t;

    std::uint32_t bern_N = 0, bern_M = 0;
    if (design == Design::bernoulli) {
        double nd = static_cast<double>(n);
        bern_N = static_cast<std::uint32_t>(
            round_half_up(std::pow(nd, 1.0 - (1.0 - theta) * (c / 2.0) * mdetail::ln2)));
        bern_M = static_cast<std::uint32_t>(round_half_up(
            (c / 2.0) * static_cast<double>(params.k) * std::log(nd / static_cast<double>(params.k))));
        if (bern_N <= params.k) throw std::invalid_argument("run_detection_experiment: N <= k at these parameters");
    }

    auto eval = [&](const BipartiteGraph& g) -> double {
        if (res.statistic_name == "cc_degree_variance") return cc_degree_variance(g, params.delta);
        if (res.statistic_name == "cc_degree_variance_centered")
            return cc_degree_variance_centered(g, params.delta);
        if (res.statistic_name == "bern_high_degree")
            return static_cast<double>(bern_high_degree_count(g, params.q, t));
        if (res.statistic_name == "bern_poly") return bern_poly_statistic(g, params.q, t, 8.0);
        throw std::invalid_argument("unknown statistic: " + res.statistic_name);
    };

    std::vector<double> stat_null(trials), stat_planted(trials);
    parallel_trials(trials, workers, [&](std::uint64_t i) {
        Rng rng_p = Rng::stream(seed, 2 * i);
        Rng rng_q = Rng::stream(seed, 2 * i + 1);
        if (design == Design::constant_column) {
            ReducedInstance red = gen_planted_via_comp(params, rng_p);
            stat_planted[i] = eval(red.graph);
            BipartiteGraph null_g =
                gen_null_test(design, red.graph.num_individuals, red.graph.num_tests,
                              static_cast<double>(params.delta), rng_q);
            stat_null[i] = eval(null_g);
        } else {
            PlantedSample ps = gen_planted_exact_bern(bern_N, bern_M,
                                                      static_cast<std::uint32_t>(params.k),
                                                      params.q, rng_p);
            stat_planted[i] = eval(ps.graph);
            BipartiteGraph null_g = gen_null_test(design, bern_N, bern_M, params.q, rng_q);
            stat_null[i] = eval(null_g);
        }
    });

    std::uint64_t calib = (trials + 1) / 2;
    res.report = calibrate(std::span(stat_null).subspan(0, calib),
                           std::span(stat_planted).subspan(0, calib), res.threshold,
                           res.planted_side);
    std::uint64_t correct = 0, held = 0;
    for (std::uint64_t i = 0; i < trials; ++i) {
        bool dn = decide(stat_null[i], res.threshold, res.planted_side).planted;
        bool dp = decide(stat_planted[i], res.threshold, res.planted_side).planted;
        res.rows.push_back({i, false, stat_null[i], dn});
        res.rows.push_back({i, true, stat_planted[i], dp});
        if (i >= calib) {
            held += 2;
            correct += !dn;
            correct += dp;
        }
    }
    res.accuracy = static_cast<double>(correct) / static_cast<double>(held);
    return res;
}

inline std::string detect_csv(Design design, double theta, double c, std::uint64_t n,
                              std::uint64_t trials, std::uint64_t seed, const DetectResult& res) {
    std::ostringstream os;
    MetaBlock meta;
    meta.add("command", "detect");
    meta.add("design", design_name(design));
    meta.add("theta", theta);
    meta.add("c", c);
    meta.add("n", n);
    meta.add("trials", trials);
    meta.add("seed", seed);
    meta.add("statistic", res.statistic_name);
    meta.add("t", res.t_used);
    meta.write(os);
    os << "design,theta,c,n,trial,label,statistic,decision\n";
    for (const auto& row : res.rows)
        os << design_name(design) << ',' << fmt_g(theta) << ',' << fmt_g(c) << ',' << n << ','
           << row.trial << ',' << (row.planted_truth ? "planted" : "null") << ','
           << fmt_g(row.statistic) << ',' << (row.planted_decision ? "planted" : "null") << '\n';
    os << "# accuracy=" << fmt_g(res.accuracy) << '\n'
       << "# separation_ratio=" << fmt_g(res.report.separation_ratio) << '\n'
       << "# threshold=" << fmt_g(res.threshold) << '\n'
       << "# mean_null=" << fmt_g(res.report.mean_null) << '\n'
       << "# mean_planted=" << fmt_g(res.report.mean_planted) << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// thresholds / phase diagram
// ---------------------------------------------------------------------------

inline std::string thresholds_csv(Design design, std::span<const double> theta_grid, double c,
                                  std::uint64_t seed) {
    std::ostringstream os;
    MetaBlock meta;
    meta.add("command", "thresholds");
    meta.add("design", design_name(design));
    meta.add("c", c);
    meta.add("seed", seed);
    meta.add("region_tie_rule", "boundary values fall to the second-listed region");
    meta.write(os);
    os << "theta,c_inf,c_alg,c_ld,region\n";
    for (double theta : theta_grid) {
        double cld = c_ld(design, theta);
        os << fmt_g(theta) << ',' << fmt_g(c_inf()) << ',' << fmt_g(c_alg()) << ',' << fmt_g(cld)
           << ',' << region_name(classify_region(theta, c, design)) << '\n';
    }
    return os.str();
}

inline std::string phase_csv(Design design, std::span<const double> theta_grid,
                             std::span<const double> c_grid, std::uint64_t seed) {
    std::ostringstream os;
    MetaBlock meta;
    meta.add("command", "phase-diagram");
    meta.add("design", design_name(design));
    meta.add("seed", seed);
    meta.add("region_tie_rule", "boundary values fall to the second-listed region");
    meta.write(os);
    os << "theta,c,c_inf,c_alg,c_ld,region\n";
    for (const auto& row : phase_diagram(design, theta_grid, c_grid))
        os << fmt_g(row.theta) << ',' << fmt_g(row.c) << ',' << fmt_g(row.c_inf) << ','
           << fmt_g(row.c_alg) << ',' << fmt_g(row.c_ld) << ',' << region_name(row.region) << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// aon
// ---------------------------------------------------------------------------

inline std::string aon_csv(double theta, std::span<const double> c_grid, std::uint64_t n,
                           std::uint64_t trials, std::uint64_t seed, unsigned workers = 1) {
    // parallelized over (c, trial) pairs with index-keyed streams
    std::vector<AonRow> rows(c_grid.size() * trials);
    parallel_trials(rows.size(), workers, [&](std::uint64_t j) {
        std::size_t ci = j / trials;
        std::uint64_t t = j % trials;
        auto one = aon_experiment_single(theta, c_grid[ci], n, t, seed, ci * trials + t);
        rows[j] = one;
    });
    std::ostringstream os;
    MetaBlock meta;
    meta.add("command", "aon");
    meta.add("theta", theta);
    meta.add("n", n);
    meta.add("trials", trials);
    meta.add("seed", seed);
    {
        std::ostringstream g;
        for (std::size_t i = 0; i < c_grid.size(); ++i) g << (i ? "," : "") << fmt_g(c_grid[i]);
        meta.add("c_grid", g.str());
    }
    meta.write(os);
    os << "c,trial,overlap_norm,overlap_raw,Z\n";
    for (const auto& r : rows)
        os << fmt_g(r.c) << ',' << r.trial << ',' << fmt_g(r.overlap_norm) << ',' << r.overlap_raw
           << ',' << fmt_g(r.z) << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// moments / chi2
// ---------------------------------------------------------------------------

inline std::string moments_csv(double c, std::span<const double> alpha_grid, std::uint64_t seed) {
    std::ostringstream os;
    MetaBlock meta;
    meta.add("command", "moments");
    meta.add("c", c);
    meta.add("seed", seed);
    meta.write(os);
    os << "alpha,x0,x1,F,bound,margin\n";
    double bound = 2.0 * (1.0 - c * mdetail::ln2) / (c * mdetail::ln2);
    for (double alpha : alpha_grid) {
        double x0, x1;
        if (alpha >= 0.85) {
            auto xs = solve_overlap_xs(alpha);
            x0 = xs.x0;
            x1 = xs.x1;
        } else {
            std::tie(x0, x1) = piecewise_x(alpha);
        }
        double f = F_alpha(alpha, c, x0, x1);
        os << fmt_g(alpha) << ',' << fmt_g(x0) << ',' << fmt_g(x1) << ',' << fmt_g(f) << ','
           << fmt_g(bound) << ',' << fmt_g(bound - f) << '\n';
    }
    return os.str();
}

inline std::string chi2_csv(double theta, double c, double t, double epsilon, std::uint64_t n,
                            std::uint64_t seed) {
    ChiSqLedger led = bern_chi_sq(theta, c, t, epsilon, n, 200, seed);
    std::ostringstream os;
    MetaBlock meta;
    meta.add("command", "chi2");
    meta.add("theta", theta);
    meta.add("c", c);
    meta.add("t", t);
    meta.add("epsilon", epsilon);
    meta.add("n", n);
    meta.add("seed", seed);
    meta.add("k", led.k);
    meta.add("N", led.N);
    meta.add("M", led.M);
    meta.add("q", led.q);
    meta.write(os);
    os << "ell,log_term\n";
    for (std::size_t ell = 0; ell < led.log_terms.size(); ++ell)
        os << ell << ',' << fmt_g(led.log_terms[ell]) << '\n';
    os << "# log_T_low=" << fmt_g(led.log_T_low) << '\n'
       << "# log_T_high=" << fmt_g(led.log_T_high) << '\n'
       << "# T_low=" << fmt_g(led.total_low()) << '\n'
       << "# total=" << fmt_g(led.total()) << '\n'
       << "# p_good_union=" << fmt_g(led.p_good_union) << '\n'
       << "# p_good_mc=" << fmt_g(led.p_good_mc) << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// recover
// ---------------------------------------------------------------------------

inline std::string recover_csv(Design design, double theta, double c, std::uint64_t n,
                               const std::string& algo, double threshold_factor,
                               std::uint64_t trials, std::uint64_t seed, unsigned workers = 1) {
    auto params = DesignParams::make(n, theta, c, design, seed);
    struct Line {
        double overlap_norm;
        std::uint64_t overlap_raw, false_pos, false_neg;
    };
    std::vector<Line> lines(trials);
    parallel_trials(trials, workers, [&](std::uint64_t i) {
        Rng rng = Rng::stream(seed, i);
        Instance inst = gen_instance(params, rng);
        RecoveryResult r;
        if (algo == "comp") {
            r = comp_recover(inst);
        } else if (algo == "separate") {
            std::uint64_t m_pos = 0;
            for (auto b : inst.outcomes) m_pos += b;
            auto thr = static_cast<std::uint64_t>(
                std::ceil(threshold_factor * params.q * static_cast<double>(m_pos)));
            r = separate_decoding(inst, thr);
        } else if (algo == "brute") {
            ReducedInstance red = comp_reduce(inst);
            r = brute_force_map(red, static_cast<std::uint32_t>(params.k));
        } else {
            throw std::invalid_argument("unknown recovery algorithm: " + algo);
        }
        lines[i] = {r.overlap_norm, r.overlap_raw, r.false_pos, r.false_neg};
    });
    std::ostringstream os;
    MetaBlock meta;
    meta.add("command", "recover");
    meta.add("design", design_name(design));
    meta.add("algo", algo);
    meta.add("theta", theta);
    meta.add("c", c);
    meta.add("n", n);
    meta.add("threshold_factor", threshold_factor);
    meta.add("trials", trials);
    meta.add("seed", seed);
    meta.write(os);
    os << "trial,overlap_norm,overlap_raw,false_pos,false_neg\n";
    for (std::uint64_t i = 0; i < trials; ++i)
        os << i << ',' << fmt_g(lines[i].overlap_norm) << ',' << lines[i].overlap_raw << ','
           << lines[i].false_pos << ',' << lines[i].false_neg << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

inline std::string gen_output(Design design, double theta, double c, std::uint64_t n,
                              std::uint64_t seed) {
    auto params = DesignParams::make(n, theta, c, design, seed);
    Rng rng = Rng::stream(seed, 0);
    Instance inst = gen_instance(params, rng);
    std::ostringstream os;
    write_instance(os, inst);
    return os.str();
}

}  // namespace gtlab
