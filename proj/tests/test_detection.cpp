#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "gtlab/detection.hpp"
#include "gtlab/numerics.hpp"
#include "support/stats.hpp"

using namespace gtlab;

namespace {

BipartiteGraph permuted(const BipartiteGraph& g, const std::vector<std::uint32_t>& ind_perm,
                        const std::vector<std::uint32_t>& test_perm) {
    BipartiteGraph out;
    std::vector<std::uint32_t> row;
    for (std::uint32_t i = 0; i < g.num_individuals; ++i) {
        row.clear();
        for (auto t : g.tests_of(ind_perm[i])) row.push_back(test_perm[t]);
        std::sort(row.begin(), row.end());
        out.append_row(row);
    }
    out.finalize(g.num_tests);
    return out;
}

}  // namespace

TEST_CASE("cc_degree_variance on regular degrees is zero and matches identity") {
    Rng rng(1);
    auto g = gen_null_test(Design::constant_column, 12, 6, 6.0, rng);  // complete: all degrees 12
    CHECK(cc_degree_variance(g, 6) == Catch::Approx(0.0).margin(1e-9));

    auto h = gen_null_test(Design::constant_column, 50, 20, 5.0, rng);
    double direct = cc_degree_variance(h, 5);
    double sum_sq = 0;
    for (auto d : h.test_degrees) sum_sq += static_cast<double>(d) * d;
    double identity = sum_sq - std::pow(50.0 * 5, 2) / 20.0;
    CHECK(direct == Catch::Approx(identity).margin(1e-7));
}

TEST_CASE("cc_degree_variance null mean is N Delta (1 - Delta/M)") {
    const std::uint32_t N = 200, M = 80, delta = 6;
    const int trials = 1000;
    std::vector<double> vals(trials);
    for (int s = 0; s < trials; ++s) {
        Rng r = Rng::stream(606, s);
        vals[s] = cc_degree_variance(gen_null_test(Design::constant_column, N, M, delta, r), delta);
    }
    double expect = N * delta * (1.0 - static_cast<double>(delta) / M);
    double se = std::sqrt(testsupport::sample_var(vals) / trials);
    CHECK(std::abs(testsupport::mean(vals) - expect) <= 3 * se);
}

TEST_CASE("choose_t branches") {
    const double ln2 = std::log(2.0);
    CHECK(choose_t(0.3, 0.3) == 2.0);
    CHECK(choose_t(0.3, 0.75) == 2.0);  // below 1/(2 ln^2 2) = 1.0407
    CHECK(choose_t(0.3, 1.5) == Catch::Approx(1.0 / (1.5 * ln2 * ln2)).epsilon(1e-12));
    CHECK(choose_t(0.3, 1.0 / (ln2 * ln2)) == Catch::Approx(1.05).epsilon(1e-12));
    // continuity at the seam: middle branch tends to 1 as c approaches 1/ln^2 2
    CHECK(choose_t(0.3, 1.0 / (ln2 * ln2) - 1e-9) == Catch::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("bern_high_degree_count edges and null mean oracle") {
    BipartiteGraph empty;
    for (int i = 0; i < 5; ++i) empty.append_row(std::vector<std::uint32_t>{});
    empty.finalize(4);
    CHECK(bern_high_degree_count(empty, 0.1, 2.0) == 0);
    CHECK(bern_high_degree_count(empty, 0.0, 2.0) == 5);  // d = 0: vacuous threshold

    const std::uint32_t N = 300, M = 60;
    const double q = 0.08, t = 1.4;
    auto d = static_cast<std::uint64_t>(std::ceil(2 * t * q * M));
    const int trials = 1000;
    std::vector<double> vals(trials);
    for (int s = 0; s < trials; ++s) {
        Rng r = Rng::stream(707, s);
        vals[s] = static_cast<double>(
            bern_high_degree_count(gen_null_test(Design::bernoulli, N, M, q, r), q, t));
    }
    double expect = N * binom_tail(M, q, d, TailSide::upper, TailMode::exact);
    double se = std::sqrt(testsupport::sample_var(vals) / trials);
    CHECK(std::abs(testsupport::mean(vals) - expect) <= 3 * se);
}

TEST_CASE("bern_high_degree_count is label-invariant") {
    Rng rng(17);
    auto g = gen_null_test(Design::bernoulli, 30, 20, 0.2, rng);
    std::vector<std::uint32_t> ip(30), tp(20);
    for (std::uint32_t i = 0; i < 30; ++i) ip[i] = (i * 7 + 3) % 30;
    for (std::uint32_t t = 0; t < 20; ++t) tp[t] = (t * 9 + 5) % 20;
    auto h = permuted(g, ip, tp);
    CHECK(bern_high_degree_count(g, 0.2, 1.3) == bern_high_degree_count(h, 0.2, 1.3));
}

TEST_CASE("poly_indicator reproduces the exact step on its range") {
    Rng rng(23);
    for (int rep = 0; rep < 50; ++rep) {
        auto a = static_cast<std::uint64_t>(1 + rng.below(6));
        std::uint64_t b = a + 1 + rng.below(8);
        for (std::uint64_t x = 0; x < b; ++x) {
            double want = x >= a ? 1.0 : 0.0;
            REQUIRE(poly_indicator(static_cast<double>(x), static_cast<double>(a), b) == want);
        }
    }
    CHECK_THROWS_AS(poly_indicator(1.0, 5.0, 5), std::invalid_argument);
}

TEST_CASE("poly_indicator matches the exact rational evaluation off-range") {
    // x = b with a = 2, b = 5 and a few non-integer points
    for (double x : {5.0, 5.5, 2.3, 7.25, -0.4}) {
        double expect = static_cast<double>(testsupport::lagrange_step_exact(x, 2, 5));
        CHECK(poly_indicator(x, 2.0, 5) == Catch::Approx(expect).epsilon(1e-10).margin(1e-12));
    }
    for (double x : {9.0, 9.75, 3.5}) {
        double expect = static_cast<double>(testsupport::lagrange_step_exact(x, 4, 9));
        CHECK(poly_indicator(x, 3.2, 9) == Catch::Approx(expect).epsilon(1e-9).margin(1e-12));
    }
}

TEST_CASE("bern_poly_statistic equals the exact count below the range cap") {
    Rng rng(29);
    const double q = 0.15, t = 1.3;
    auto g = gen_null_test(Design::bernoulli, 40, 18, q, rng);
    double exact = static_cast<double>(bern_high_degree_count(g, q, t));
    double poly = bern_poly_statistic(g, q, t, 8.0);  // b well above the max degree
    CHECK(poly == Catch::Approx(exact).margin(1e-6));
}

TEST_CASE("bern_poly_statistic weakly decreases in t on a fixed graph") {
    Rng rng(31);
    auto g = gen_null_test(Design::bernoulli, 60, 30, 0.12, rng);
    double prev = bern_poly_statistic(g, 0.12, 1.05, 8.0);
    for (double t : {1.2, 1.5, 2.0, 2.6}) {
        double cur = bern_poly_statistic(g, 0.12, t, 8.0);
        CHECK(cur <= prev + 1e-9);
        prev = cur;
    }
}

TEST_CASE("calibrate midpoint and degenerate guard") {
    std::vector<double> zeros{0.0, 0.0, 0.0}, twos{2.0, 2.0, 2.0};
    double thr;
    int side;
    CalibrationReport rep = calibrate(zeros, twos, thr, side);
    CHECK(thr == 1.0);
    CHECK(side == +1);
    CHECK(rep.separation_ratio >= 1e299);  // zero variance guard

    CHECK_THROWS_AS(calibrate(zeros, zeros, thr, side), std::invalid_argument);

    // swapping labels flips the side
    CalibrationReport rep2 = calibrate(twos, zeros, thr, side);
    CHECK(side == -1);
    CHECK(rep2.mean_planted == 0.0);
}

TEST_CASE("detect_from_recovery decisions and parameter validation") {
    Rng rng(41);
    auto ps = gen_planted_rejection_cc(20, 10, 5, 3, rng);
    std::vector<std::uint8_t> tau(20, 0);
    for (auto i : ps.infected) tau[i] = 1;

    // truth covers all tests -> planted (eta = 0.4 > 1/(2 c ln^2 2) at c = 3)
    auto out = detect_from_recovery(ps.graph, tau, Design::constant_column, 3.0, 5, 0.4);
    CHECK(out.planted);

    // empty estimate -> null
    std::vector<std::uint8_t> none(20, 0);
    CHECK_FALSE(detect_from_recovery(ps.graph, none, Design::constant_column, 3.0, 5, 0.4).planted);

    // eta condition: eta must exceed 1/(2 c ln^2 2)
    CHECK_THROWS_AS(detect_from_recovery(ps.graph, tau, Design::constant_column, 2.0, 5, 0.2),
                    std::invalid_argument);

    // bernoulli slack condition: admissible deltas at c = 1.5 are tiny
    // (the condition tends to c ln2 > 1 as delta -> 0), while delta = 0.1
    // needs c above about 3.48
    CHECK(1.5 * kl_bernoulli(0.001, std::pow(2.0, -1.001)) / 1.001 > 1.0);
    CHECK(1.5 * kl_bernoulli(0.1, std::pow(2.0, -1.1)) / 1.1 < 1.0);
    CHECK(4.0 * kl_bernoulli(0.1, std::pow(2.0, -1.1)) / 1.1 > 1.0);
    auto bern = gen_planted_exact_bern(25, 12, 5, 0.2, rng);
    std::vector<std::uint8_t> btau(25, 0);
    for (auto i : bern.infected) btau[i] = 1;
    CHECK(detect_from_recovery(bern.graph, btau, Design::bernoulli, 4.0, 5, 0.1).planted);
    CHECK(detect_from_recovery(bern.graph, btau, Design::bernoulli, 1.5, 5, 0.001).planted);
    // and a delta violating the condition is rejected
    CHECK_THROWS_AS(detect_from_recovery(bern.graph, btau, Design::bernoulli, 1.5, 5, 0.1),
                    std::invalid_argument);
}

TEST_CASE("detect_from_recovery is monotone in added coverage") {
    Rng rng(47);
    auto ps = gen_planted_rejection_cc(18, 9, 4, 3, rng);
    std::vector<std::uint8_t> tau(18, 0);
    // grow tau one infected individual at a time: once planted, stays planted
    bool was_planted = false;
    for (auto i : ps.infected) {
        tau[i] = 1;
        bool now = detect_from_recovery(ps.graph, tau, Design::constant_column, 2.0, 4, 0.6).planted;
        if (was_planted) CHECK(now);
        was_planted = now;
    }
}

TEST_CASE("detect_from_recovery accepts a reduced instance directly") {
    Rng rng(59);
    auto p = DesignParams::make(2000, 0.4, 2.2, Design::constant_column, 4);
    ReducedInstance red = gen_planted_via_comp(p, rng);
    std::vector<std::uint8_t> tau(red.sigma_prime.begin(), red.sigma_prime.end());
    auto out = detect_from_recovery(red, tau, Design::constant_column, 2.2, p.k, 0.6);
    CHECK(out.planted);  // the truth covers every surviving test
}
