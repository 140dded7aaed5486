#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "gtlab/designs.hpp"
#include "support/stats.hpp"

using namespace gtlab;

TEST_CASE("DesignParams scaling and nu") {
    auto p = DesignParams::make(100000, 0.5, 1.0, Design::bernoulli, 1);
    CHECK(p.k == 316);
    CHECK(p.m == round_half_up(1.0 * 316 * std::log(100000.0 / 316.0)));
    CHECK(std::abs(std::pow(1.0 - p.q, static_cast<double>(p.k)) - 0.5) <= 1e-12);
    CHECK(p.nu == Catch::Approx(std::log(2.0)).epsilon(0.01));

    auto cc = DesignParams::make(1000000, 0.3, 1.0, Design::constant_column, 1);
    CHECK(cc.k == 63);
    CHECK(cc.delta == 7);
    CHECK(cc.delta >= 1);
    CHECK(cc.delta <= cc.m);
}

TEST_CASE("gen_instance constant-column structure") {
    auto p = DesignParams::make(2000, 0.4, 1.2, Design::constant_column, 3);
    Rng rng(11);
    Instance inst = gen_instance(p, rng);
    REQUIRE(inst.graph.num_individuals == p.n);
    REQUIRE(inst.graph.num_tests == p.m);
    for (std::uint32_t i = 0; i < inst.graph.num_individuals; ++i) {
        auto tests = inst.graph.tests_of(i);
        REQUIRE(tests.size() == p.delta);  // every individual has degree exactly delta
        for (std::size_t j = 1; j < tests.size(); ++j) REQUIRE(tests[j] > tests[j - 1]);
    }
    // outcome definition: positive iff the test meets an infected individual
    std::vector<std::uint8_t> expect(p.m, 0);
    for (auto i : inst.infected)
        for (auto t : inst.graph.tests_of(i)) expect[t] = 1;
    CHECK(expect == inst.outcomes);
    // degree bookkeeping
    std::uint64_t tot = 0;
    for (auto d : inst.graph.test_degrees) tot += d;
    CHECK(tot == inst.graph.num_edges());
}

TEST_CASE("gen_instance all-infected edge case") {
    DesignParams p;
    p.n = 30;
    p.theta = 0.5;
    p.c = 1.0;
    p.k = 29;
    p.m = 12;
    p.delta = 2;
    p.nu = 29 * (1 - std::pow(0.5, 1.0 / 29));
    p.q = p.nu / 29;
    p.design = Design::constant_column;
    Rng rng(5);
    Instance inst = gen_instance(p, rng);
    for (std::uint32_t t = 0; t < inst.graph.num_tests; ++t)
        if (inst.graph.test_degrees[t] > 0) {
            // with k = n-1 infected a nonempty test is positive unless it only
            // holds the single healthy individual
            if (!inst.outcomes[t]) {
                CHECK(inst.graph.test_degrees[t] == 1);
            }
        }
}

TEST_CASE("bernoulli positive-test fraction is centered at one half") {
    double frac_sum = 0.0;
    std::uint64_t total_tests = 0, positive = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        auto p = DesignParams::make(100000, 0.5, 1.0, Design::bernoulli, s);
        Rng rng = Rng::stream(424242, s);
        Instance inst = gen_instance(p, rng);
        for (auto b : inst.outcomes) positive += b;
        total_tests += inst.outcomes.size();
    }
    frac_sum = static_cast<double>(positive) / static_cast<double>(total_tests);
    CHECK(frac_sum == Catch::Approx(0.5).margin(0.01));
}

TEST_CASE("determinism: identical params and seed give identical instances") {
    auto p = DesignParams::make(5000, 0.35, 1.3, Design::bernoulli, 77);
    Rng r1 = Rng::stream(77, 4), r2 = Rng::stream(77, 4);
    Instance a = gen_instance(p, r1), b = gen_instance(p, r2);
    CHECK(a.graph.edges == b.graph.edges);
    CHECK(a.graph.offsets == b.graph.offsets);
    CHECK(a.infected == b.infected);
    CHECK(a.outcomes == b.outcomes);
}

TEST_CASE("comp_reduce drops negative tests, keeps infected and isolated") {
    auto p = DesignParams::make(3000, 0.4, 1.0, Design::constant_column, 9);
    Rng rng(21);
    Instance inst = gen_instance(p, rng);
    ReducedInstance red = comp_reduce(inst);
    std::uint64_t m_pos = 0;
    for (auto b : inst.outcomes) m_pos += b;
    CHECK(red.graph.num_tests == m_pos);
    // all infected survive
    std::uint64_t infected_in_red = 0;
    for (auto b : red.sigma_prime) infected_in_red += b;
    CHECK(infected_in_red == p.k);
    // every survivor sees only positive tests
    for (std::uint32_t i = 0; i < red.graph.num_individuals; ++i) {
        std::uint32_t orig = red.origin_indices[i];
        for (auto t : inst.graph.tests_of(orig)) REQUIRE(inst.outcomes[t]);
    }
}

TEST_CASE("comp_reduce on all-negative outcomes keeps only isolated individuals") {
    BipartiteGraph g;
    g.append_row(std::vector<std::uint32_t>{0});
    g.append_row(std::vector<std::uint32_t>{});
    g.append_row(std::vector<std::uint32_t>{1});
    g.finalize(2);
    std::vector<std::uint8_t> outcomes{0, 0};
    ReducedInstance red = comp_reduce(g, std::vector<std::uint32_t>{}, outcomes);
    CHECK(red.graph.num_tests == 0);
    REQUIRE(red.graph.num_individuals == 1);
    CHECK(red.origin_indices[0] == 1);
}

TEST_CASE("comp_reduce is idempotent") {
    auto p = DesignParams::make(2000, 0.4, 1.1, Design::constant_column, 2);
    Rng rng(3);
    ReducedInstance red = gen_planted_via_comp(p, rng);
    std::vector<std::uint32_t> infected;
    for (std::uint32_t i = 0; i < red.sigma_prime.size(); ++i)
        if (red.sigma_prime[i]) infected.push_back(i);
    std::vector<std::uint8_t> all_pos(red.graph.num_tests, 1);
    ReducedInstance again = comp_reduce(red.graph, infected, all_pos);
    CHECK(again.graph.edges == red.graph.edges);
    CHECK(again.graph.offsets == red.graph.offsets);
    CHECK(again.sigma_prime == red.sigma_prime);
}

TEST_CASE("comp_reduce realized dimensions track their scaling targets") {
    const double ln2 = std::log(2.0);
    auto p = DesignParams::make(1000000, 0.5, 1.0, Design::constant_column, 5);
    double n_target = std::pow(1e6, 1.0 - (1.0 - 0.5) * 1.0 * ln2 * ln2);
    double m_target = static_cast<double>(p.k * p.delta) / (2.0 * ln2);
    int ok = 0;
    const int trials = 100;
    for (int s = 0; s < trials; ++s) {
        Rng rng = Rng::stream(1234, s);
        ReducedInstance red = gen_planted_via_comp(p, rng);
        double N = red.graph.num_individuals, M = red.graph.num_tests;
        bool n_ok = N >= n_target / 2 && N <= n_target * 2;
        bool m_ok = std::abs(M - m_target) <= 0.05 * m_target;
        ok += n_ok && m_ok;
    }
    CHECK(ok >= 95);
}

TEST_CASE("gen_null_test structure and moments") {
    Rng rng(8);
    auto g = gen_null_test(Design::constant_column, 10, 6, 6.0, rng);
    for (std::uint32_t i = 0; i < 10; ++i) REQUIRE(g.degree(i) == 6);  // delta = M: complete
    CHECK_THROWS_AS(gen_null_test(Design::constant_column, 4, 3, 5.0, rng), std::invalid_argument);

    // test-degree mean over many samples: N Delta / M
    const std::uint32_t N = 40, M = 16, delta = 4;
    double total = 0;
    const int trials = 2000;
    for (int s = 0; s < trials; ++s) {
        Rng r = Rng::stream(55, s);
        auto gg = gen_null_test(Design::constant_column, N, M, delta, r);
        for (auto d : gg.test_degrees) total += d;
    }
    double mean_deg = total / (trials * static_cast<double>(M));
    double expect = static_cast<double>(N) * delta / M;
    double se = std::sqrt(expect / (trials * static_cast<double>(M)));
    CHECK(std::abs(mean_deg - expect) <= 4 * se);

    // bernoulli edge-count concentration
    double q = 0.07;
    double edges = 0;
    for (int s = 0; s < 400; ++s) {
        Rng r = Rng::stream(56, s);
        auto gg = gen_null_test(Design::bernoulli, N, M, q, r);
        edges += static_cast<double>(gg.num_edges());
    }
    edges /= 400;
    double expect_edges = N * M * q;
    CHECK(std::abs(edges - expect_edges) <= 4 * std::sqrt(expect_edges / 400));
}

TEST_CASE("bernoulli null degrees follow the binomial marginal") {
    const std::uint32_t N = 5, M = 12;
    const double q = 0.25;
    std::vector<double> observed(M + 1, 0.0);
    const int samples = 10000;
    for (int s = 0; s < samples; ++s) {
        Rng r = Rng::stream(77, s);
        auto g = gen_null_test(Design::bernoulli, N, M, q, r);
        ++observed[g.degree(s % N)];
    }
    std::vector<double> expected(M + 1, 0.0);
    for (std::uint32_t d = 0; d <= M; ++d)
        expected[d] = samples * std::exp(log_binomial(M, d) + d * std::log(q) +
                                         (M - d) * std::log1p(-q));
    // merge sparse upper tail so expected counts stay reasonable
    std::vector<double> obs2, exp2;
    double otail = 0, etail = 0;
    for (std::uint32_t d = 0; d <= M; ++d) {
        if (expected[d] >= 5.0) {
            obs2.push_back(observed[d]);
            exp2.push_back(expected[d]);
        } else {
            otail += observed[d];
            etail += expected[d];
        }
    }
    obs2.push_back(otail);
    exp2.push_back(etail);
    CHECK(testsupport::chi_square_pvalue(obs2, exp2) >= 0.01);
}

TEST_CASE("planted samplers cover every test") {
    Rng rng(31);
    // empty conditioning
    auto empty = gen_planted_test(Design::bernoulli, 12, 0, 3, 0.3, rng, PlantedMethod::exact);
    CHECK(empty.graph.num_tests == 0);

    auto ps = gen_planted_test(Design::bernoulli, 30, 25, 6, 0.2, rng, PlantedMethod::exact);
    std::vector<int> hit(25, 0);
    for (auto i : ps.infected)
        for (auto t : ps.graph.tests_of(i)) hit[t] = 1;
    for (int h : hit) REQUIRE(h == 1);

    auto cc = gen_planted_test(Design::constant_column, 20, 10, 5, 3.0, rng,
                               PlantedMethod::rejection);
    std::vector<int> hit2(10, 0);
    for (auto i : cc.infected)
        for (auto t : cc.graph.tests_of(i)) hit2[t] = 1;
    for (int h : hit2) REQUIRE(h == 1);
}

TEST_CASE("planted rejection cap signals infeasible dimensions") {
    Rng rng(4);
    // 2 infected of degree 1 cannot cover 40 tests
    CHECK_THROWS_AS(gen_planted_rejection_cc(10, 40, 2, 1, rng, 2000), NonConvergenceError);
}

TEST_CASE("planted bernoulli per-test infected count is a truncated binomial") {
    const std::uint32_t N = 40, M = 60, k = 16;
    const double q = 0.08;
    double total = 0;
    std::uint64_t tests_seen = 0;
    for (int s = 0; s < 300; ++s) {
        Rng r = Rng::stream(909, s);
        auto ps = gen_planted_exact_bern(N, M, k, q, r);
        std::vector<std::uint32_t> cnt(M, 0);
        for (auto i : ps.infected)
            for (auto t : ps.graph.tests_of(i)) ++cnt[t];
        for (auto v : cnt) total += v;
        tests_seen += M;
    }
    double mean = total / static_cast<double>(tests_seen);
    double expect = k * q / (1.0 - std::pow(1.0 - q, static_cast<double>(k)));
    CHECK(std::abs(mean - expect) <= 0.02 * expect);
}

TEST_CASE("planted bernoulli infected degrees have mean 2qM") {
    auto p = DesignParams::make(100000, 0.3, 1.5, Design::bernoulli, 6);
    const std::uint32_t N = 400, M = 150;  // reduced-scale dimensions with the same q
    double total = 0;
    std::uint64_t count = 0;
    for (int s = 0; s < 200; ++s) {
        Rng r = Rng::stream(505, s);
        auto ps = gen_planted_exact_bern(N, M, static_cast<std::uint32_t>(p.k), p.q, r);
        for (auto i : ps.infected) {
            total += ps.graph.degree(i);
            ++count;
        }
    }
    double expect = 2.0 * p.q * M;
    CHECK(std::abs(total / count - expect) <= 0.02 * expect);
}

TEST_CASE("instance serialization round-trips bit-exactly") {
    auto p = DesignParams::make(500, 0.4, 1.1, Design::bernoulli, 12);
    Rng rng(13);
    Instance inst = gen_instance(p, rng);
    std::ostringstream os;
    write_instance(os, inst);
    std::istringstream is(os.str());
    GraphRecord rec = read_graph_record(is);
    CHECK(rec.design == Design::bernoulli);
    CHECK(rec.graph.edges == inst.graph.edges);
    CHECK(rec.graph.offsets == inst.graph.offsets);
    CHECK(rec.infected == inst.infected);
    REQUIRE(rec.outcomes.has_value());
    CHECK(*rec.outcomes == inst.outcomes);

    std::ostringstream os2;
    write_graph_record(os2, rec);
    CHECK(os2.str() == os.str());

    // reduced form omits the outcomes line
    ReducedInstance red = comp_reduce(inst);
    std::ostringstream os3;
    write_reduced(os3, p.design, red);
    std::istringstream is3(os3.str());
    GraphRecord rec3 = read_graph_record(is3);
    CHECK_FALSE(rec3.outcomes.has_value());
    CHECK(rec3.graph.edges == red.graph.edges);
}
