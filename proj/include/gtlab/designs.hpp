#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gtlab/numerics.hpp"
#include "gtlab/rng.hpp"

namespace gtlab {

enum class Design { constant_column, bernoulli };

inline const char* design_name(Design d) {
    return d == Design::constant_column ? "constant_column" : "bernoulli";
}

inline Design design_from_name(const std::string& s) {
    if (s == "constant_column" || s == "cc") return Design::constant_column;
    if (s == "bernoulli" || s == "bern") return Design::bernoulli;
    throw std::invalid_argument("unknown design: " + s);
}

inline std::uint64_t round_half_up(double x) {
    return static_cast<std::uint64_t>(std::floor(x + 0.5));
}

/// All scaling parameters of one experiment. k = round(n^theta),
/// m = round(c k ln(n/k)), per-individual degree Delta = round(c ln2 ln(n/k))
/// (constant-column), and q = nu/k with (1 - nu/k)^k = 1/2 (Bernoulli).
struct DesignParams {
    std::uint64_t n = 0;
    double theta = 0.0;
    double c = 0.0;
    std::uint64_t k = 0;
    std::uint64_t m = 0;
    std::uint64_t delta = 0;
    double nu = 0.0;
    double q = 0.0;
    Design design = Design::constant_column;
    std::uint64_t seed = 0;

    static DesignParams make(std::uint64_t n, double theta, double c, Design design,
                             std::uint64_t seed) {
        if (n < 2 || !(theta > 0.0 && theta < 1.0) || !(c > 0.0))
            throw std::invalid_argument("DesignParams: need n >= 2, theta in (0,1), c > 0");
        if (n > 0xffffffffULL) throw std::invalid_argument("DesignParams: n exceeds 32-bit indexing");
        DesignParams p;
        p.n = n;
        p.theta = theta;
        p.c = c;
        p.design = design;
        p.seed = seed;
        p.k = round_half_up(std::pow(static_cast<double>(n), theta));
        if (p.k < 1) p.k = 1;
        if (p.k >= n) throw std::invalid_argument("DesignParams: k >= n");
        double lnnk = std::log(static_cast<double>(n) / static_cast<double>(p.k));
        p.m = std::max<std::uint64_t>(1, round_half_up(c * static_cast<double>(p.k) * lnnk));
        p.delta = std::max<std::uint64_t>(1, round_half_up(c * std::log(2.0) * lnnk));
        if (p.delta > p.m) p.delta = p.m;
        double k_real = static_cast<double>(p.k);
        p.nu = solve_root(
            [k_real](double nu) { return std::pow(1.0 - nu / k_real, k_real) - 0.5; },
            RealBracket{1e-9, k_real * (1.0 - 1e-12), 1e-15, 300});
        p.q = p.nu / k_real;
        if (std::abs(std::pow(1.0 - p.q, k_real) - 0.5) > 1e-12)
            throw std::logic_error("DesignParams: nu residual too large");
        return p;
    }
};

/// Individuals-by-tests adjacency, individual-major (CSR) with the per-test
/// degree view kept alongside.
struct BipartiteGraph {
    std::uint32_t num_individuals = 0;
    std::uint32_t num_tests = 0;
    std::vector<std::uint32_t> offsets{0};  // size num_individuals + 1
    std::vector<std::uint32_t> edges;       // sorted within each individual
    std::vector<std::uint32_t> test_degrees;

    std::span<const std::uint32_t> tests_of(std::uint32_t i) const {
        return {edges.data() + offsets[i], edges.data() + offsets[i + 1]};
    }
    std::uint32_t degree(std::uint32_t i) const { return offsets[i + 1] - offsets[i]; }
    std::uint64_t num_edges() const { return edges.size(); }

    void append_row(std::span<const std::uint32_t> tests) {
        edges.insert(edges.end(), tests.begin(), tests.end());
        offsets.push_back(static_cast<std::uint32_t>(edges.size()));
        ++num_individuals;
    }

    void finalize(std::uint32_t tests) {
        num_tests = tests;
        test_degrees.assign(tests, 0);
        for (std::uint32_t t : edges) {
            if (t >= tests) throw std::invalid_argument("BipartiteGraph: test index out of range");
            ++test_degrees[t];
        }
    }
};

/// Full pre-reduction instance: graph, ground truth and test outcomes.
struct Instance {
    DesignParams params;
    BipartiteGraph graph;                  // n individuals x m tests
    std::vector<std::uint32_t> infected;   // sorted, |infected| = k
    std::vector<std::uint8_t> outcomes;    // per test, 1 iff it meets an infected individual
};

/// Post-reduction instance: only positive tests and the individuals that
/// appear in no negative test survive.
struct ReducedInstance {
    BipartiteGraph graph;
    std::vector<std::uint8_t> sigma_prime;        // infected marker per survivor
    std::vector<std::uint32_t> origin_indices;    // survivor -> original index
};

namespace detail {

inline std::vector<std::uint32_t> bernoulli_row(std::uint32_t m, double q, Rng& rng) {
    std::vector<std::uint32_t> row;
    if (q <= 0.0) return row;
    if (q >= 1.0) {
        row.resize(m);
        for (std::uint32_t t = 0; t < m; ++t) row[t] = t;
        return row;
    }
    std::uint64_t pos = rng.geometric_skip(q);
    while (pos < m) {
        row.push_back(static_cast<std::uint32_t>(pos));
        pos += 1 + rng.geometric_skip(q);
    }
    return row;
}

inline std::vector<std::uint8_t> compute_outcomes(const BipartiteGraph& g,
                                                  std::span<const std::uint32_t> infected) {
    std::vector<std::uint8_t> out(g.num_tests, 0);
    for (std::uint32_t i : infected)
        for (std::uint32_t t : g.tests_of(i)) out[t] = 1;
    return out;
}

}  // namespace detail

inline Instance gen_instance(const DesignParams& params, Rng& rng) {
    Instance inst;
    inst.params = params;
    auto n = static_cast<std::uint32_t>(params.n);
    auto m = static_cast<std::uint32_t>(params.m);
    auto delta = static_cast<std::uint32_t>(params.delta);
    inst.graph.offsets.reserve(n + 1);
    if (params.design == Design::constant_column) {
        inst.graph.edges.reserve(static_cast<std::size_t>(n) * delta);
        for (std::uint32_t i = 0; i < n; ++i) inst.graph.append_row(rng.distinct(m, delta));
    } else {
        for (std::uint32_t i = 0; i < n; ++i) inst.graph.append_row(detail::bernoulli_row(m, params.q, rng));
    }
    inst.graph.finalize(m);
    auto kset = rng.distinct(n, static_cast<std::uint32_t>(params.k));
    inst.infected.assign(kset.begin(), kset.end());
    inst.outcomes = detail::compute_outcomes(inst.graph, inst.infected);
    return inst;
}

/// Drop every negative test and every individual adjacent to one. Individuals
/// with no tests at all survive. All infected individuals survive.
inline ReducedInstance comp_reduce(const BipartiteGraph& graph,
                                   std::span<const std::uint32_t> infected,
                                   std::span<const std::uint8_t> outcomes) {
    ReducedInstance red;
    std::vector<std::uint32_t> test_map(graph.num_tests, UINT32_MAX);
    std::uint32_t pos_tests = 0;
    for (std::uint32_t t = 0; t < graph.num_tests; ++t)
        if (outcomes[t]) test_map[t] = pos_tests++;

    std::vector<std::uint8_t> is_infected(graph.num_individuals, 0);
    for (std::uint32_t i : infected) is_infected[i] = 1;

    std::vector<std::uint32_t> row;
    for (std::uint32_t i = 0; i < graph.num_individuals; ++i) {
        bool survives = true;
        for (std::uint32_t t : graph.tests_of(i)) {
            if (!outcomes[t]) {
                survives = false;
                break;
            }
        }
        if (!survives) continue;
        row.clear();
        for (std::uint32_t t : graph.tests_of(i)) row.push_back(test_map[t]);
        red.graph.append_row(row);
        red.origin_indices.push_back(i);
        red.sigma_prime.push_back(is_infected[i]);
    }
    red.graph.finalize(pos_tests);
    return red;
}

inline ReducedInstance comp_reduce(const Instance& inst) {
    return comp_reduce(inst.graph, inst.infected, inst.outcomes);
}

/// Null testing sample: the unconditioned random graph of either design.
inline BipartiteGraph gen_null_test(Design design, std::uint32_t N, std::uint32_t M,
                                    double degree_or_q, Rng& rng) {
    BipartiteGraph g;
    g.offsets.reserve(N + 1);
    if (design == Design::constant_column) {
        auto delta = static_cast<std::uint32_t>(degree_or_q);
        if (delta > M) throw std::invalid_argument("gen_null_test: delta > M");
        for (std::uint32_t i = 0; i < N; ++i) g.append_row(rng.distinct(M, delta));
    } else {
        for (std::uint32_t i = 0; i < N; ++i) g.append_row(detail::bernoulli_row(M, degree_or_q, rng));
    }
    g.finalize(M);
    return g;
}

struct PlantedSample {
    BipartiteGraph graph;
    std::vector<std::uint32_t> infected;  // sorted
};

namespace detail {

inline void check_covered(const BipartiteGraph& g, std::span<const std::uint32_t> infected) {
    std::vector<std::uint8_t> hit(g.num_tests, 0);
    for (std::uint32_t i : infected)
        for (std::uint32_t t : g.tests_of(i)) hit[t] = 1;
    for (std::uint32_t t = 0; t < g.num_tests; ++t)
        if (!hit[t]) throw std::logic_error("planted sample misses a test");
}

// Binom(k, q) conditioned on >= 1, by CDF inversion on the truncated law.
inline std::uint32_t truncated_binomial(std::uint32_t k, double q, Rng& rng) {
    if (!(q > 0.0)) throw std::invalid_argument("truncated_binomial: q must be > 0");
    if (q >= 1.0) return k;
    double p0 = std::pow(1.0 - q, static_cast<double>(k));
    double u = p0 + rng.unit() * (1.0 - p0);
    double pj = p0, cum = p0;
    for (std::uint32_t j = 1; j <= k; ++j) {
        pj *= static_cast<double>(k - j + 1) / static_cast<double>(j) * q / (1.0 - q);
        cum += pj;
        if (u <= cum || j == k) return j;
    }
    return k;
}

}  // namespace detail

/// Planted Bernoulli testing sample at fixed dimensions: per test, the
/// infected block is k iid Bernoulli(q) bits conditioned on not all-zero;
/// everything else is unconditioned.
inline PlantedSample gen_planted_exact_bern(std::uint32_t N, std::uint32_t M, std::uint32_t k,
                                            double q, Rng& rng) {
    if (k > N) throw std::invalid_argument("gen_planted_exact_bern: k > N");
    PlantedSample out;
    auto kset = rng.distinct(N, k);
    out.infected.assign(kset.begin(), kset.end());
    std::vector<std::vector<std::uint32_t>> infected_rows(k);
    for (std::uint32_t a = 0; a < M; ++a) {
        std::uint32_t ones = detail::truncated_binomial(k, q, rng);
        for (std::uint32_t slot : rng.distinct(k, ones)) infected_rows[slot].push_back(a);
    }
    std::uint32_t next_inf = 0;
    out.graph.offsets.reserve(N + 1);
    for (std::uint32_t i = 0; i < N; ++i) {
        if (next_inf < k && i == out.infected[next_inf])
            out.graph.append_row(infected_rows[next_inf++]);
        else
            out.graph.append_row(detail::bernoulli_row(M, q, rng));
    }
    out.graph.finalize(M);
    detail::check_covered(out.graph, out.infected);
    return out;
}

/// Planted constant-column testing sample at fixed dimensions: the infected
/// individuals' edge sets are resampled until every test is covered.
/// Infeasible dimensions exhaust the attempt cap; callers then switch to the
/// reduction-based sampler.
inline PlantedSample gen_planted_rejection_cc(std::uint32_t N, std::uint32_t M, std::uint32_t k,
                                              std::uint32_t delta, Rng& rng,
                                              std::uint64_t max_attempts = 1000000) {
    if (k > N) throw std::invalid_argument("gen_planted_rejection_cc: k > N");
    if (delta > M) throw std::invalid_argument("gen_planted_rejection_cc: delta > M");
    PlantedSample out;
    auto kset = rng.distinct(N, k);
    out.infected.assign(kset.begin(), kset.end());

    std::vector<std::vector<std::uint32_t>> infected_rows(k);
    std::vector<std::uint8_t> hit(M);
    bool covered = (M == 0);
    for (std::uint64_t attempt = 0; !covered; ++attempt) {
        if (attempt >= max_attempts)
            throw NonConvergenceError(
                "gen_planted_rejection_cc: attempt cap exceeded; these dimensions need the "
                "reduction-based sampler");
        std::fill(hit.begin(), hit.end(), 0);
        for (std::uint32_t j = 0; j < k; ++j) {
            infected_rows[j] = rng.distinct(M, delta);
            for (std::uint32_t t : infected_rows[j]) hit[t] = 1;
        }
        covered = true;
        for (std::uint32_t t = 0; t < M; ++t)
            if (!hit[t]) {
                covered = false;
                break;
            }
    }
    std::uint32_t next_inf = 0;
    out.graph.offsets.reserve(N + 1);
    for (std::uint32_t i = 0; i < N; ++i) {
        if (next_inf < k && i == out.infected[next_inf])
            out.graph.append_row(infected_rows[next_inf++]);
        else
            out.graph.append_row(rng.distinct(M, delta));
    }
    out.graph.finalize(M);
    detail::check_covered(out.graph, out.infected);
    return out;
}

/// Planted testing sample realized through the full pipeline: draw a complete
/// instance, reduce it, and return the reduced graph (dimensions come out
/// random).
inline ReducedInstance gen_planted_via_comp(const DesignParams& params, Rng& rng) {
    Instance inst = gen_instance(params, rng);
    return comp_reduce(inst);
}

enum class PlantedMethod { exact, rejection, via_comp };

inline PlantedSample gen_planted_test(Design design, std::uint32_t N, std::uint32_t M,
                                      std::uint32_t k, double degree_or_q, Rng& rng,
                                      PlantedMethod method) {
    if (method == PlantedMethod::via_comp)
        throw std::invalid_argument("gen_planted_test: via_comp takes DesignParams; call gen_planted_via_comp");
    if (design == Design::bernoulli) {
        if (method != PlantedMethod::exact)
            throw std::invalid_argument("gen_planted_test: bernoulli uses the exact sampler");
        return gen_planted_exact_bern(N, M, k, degree_or_q, rng);
    }
    if (method != PlantedMethod::rejection)
        throw std::invalid_argument("gen_planted_test: constant-column uses rejection at fixed dims");
    return gen_planted_rejection_cc(N, M, k, static_cast<std::uint32_t>(degree_or_q), rng);
}

// ---------------------------------------------------------------------------
// Line-oriented instance serialization.
//   GT v1 <design> <N> <M> <k>
//   one line per individual: its sorted test indices
//   infected: <indices>
//   outcomes: <bits>        (full instances only)
// ---------------------------------------------------------------------------

struct GraphRecord {
    Design design = Design::constant_column;
    BipartiteGraph graph;
    std::vector<std::uint32_t> infected;
    std::optional<std::vector<std::uint8_t>> outcomes;
};

inline void write_graph_record(std::ostream& os, const GraphRecord& rec) {
    os << "GT v1 " << design_name(rec.design) << ' ' << rec.graph.num_individuals << ' '
       << rec.graph.num_tests << ' ' << rec.infected.size() << '\n';
    for (std::uint32_t i = 0; i < rec.graph.num_individuals; ++i) {
        auto tests = rec.graph.tests_of(i);
        for (std::size_t j = 0; j < tests.size(); ++j) {
            if (j) os << ' ';
            os << tests[j];
        }
        os << '\n';
    }
    os << "infected:";
    for (std::uint32_t i : rec.infected) os << ' ' << i;
    os << '\n';
    if (rec.outcomes) {
        os << "outcomes: ";
        for (std::uint8_t b : *rec.outcomes) os << (b ? '1' : '0');
        os << '\n';
    }
}

inline GraphRecord read_graph_record(std::istream& is) {
    GraphRecord rec;
    std::string line;
    if (!std::getline(is, line)) throw std::invalid_argument("instance read: empty input");
    std::istringstream hdr(line);
    std::string magic, ver, dsg;
    std::uint32_t N, M;
    std::size_t k;
    if (!(hdr >> magic >> ver >> dsg >> N >> M >> k) || magic != "GT" || ver != "v1")
        throw std::invalid_argument("instance read: bad header");
    rec.design = design_from_name(dsg);
    rec.graph.offsets.reserve(N + 1);
    std::vector<std::uint32_t> row;
    for (std::uint32_t i = 0; i < N; ++i) {
        if (!std::getline(is, line)) throw std::invalid_argument("instance read: truncated adjacency");
        std::istringstream ls(line);
        row.clear();
        std::uint32_t t;
        while (ls >> t) row.push_back(t);
        rec.graph.append_row(row);
    }
    rec.graph.finalize(M);
    if (!std::getline(is, line) || line.rfind("infected:", 0) != 0)
        throw std::invalid_argument("instance read: missing infected line");
    {
        std::istringstream ls(line.substr(9));
        std::uint32_t i;
        while (ls >> i) rec.infected.push_back(i);
    }
    if (rec.infected.size() != k) throw std::invalid_argument("instance read: k mismatch");
    if (std::getline(is, line) && line.rfind("outcomes: ", 0) == 0) {
        std::vector<std::uint8_t> out;
        for (char ch : line.substr(10)) {
            if (ch == '0' || ch == '1') out.push_back(ch == '1');
            else throw std::invalid_argument("instance read: bad outcomes bit");
        }
        if (out.size() != M) throw std::invalid_argument("instance read: outcomes length mismatch");
        rec.outcomes = std::move(out);
    }
    return rec;
}

inline void write_instance(std::ostream& os, const Instance& inst) {
    GraphRecord rec{inst.params.design, inst.graph, inst.infected, inst.outcomes};
    write_graph_record(os, rec);
}

inline void write_reduced(std::ostream& os, Design design, const ReducedInstance& red) {
    GraphRecord rec;
    rec.design = design;
    rec.graph = red.graph;
    for (std::uint32_t i = 0; i < red.sigma_prime.size(); ++i)
        if (red.sigma_prime[i]) rec.infected.push_back(i);
    write_graph_record(os, rec);
}

}  // namespace gtlab
