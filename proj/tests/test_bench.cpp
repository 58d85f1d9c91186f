#include <doctest.h>

#include "dimba/bench.hpp"
#include "dimba/scan.hpp"

using namespace dimba;

namespace {

ModelConfig bench_config(int ratio_k, int n_blocks) {
    ModelConfig c;
    c.hidden = 32;
    c.n_heads = 4;
    c.d_text = 16;
    c.max_text_tokens = 8;
    c.ratio_k = ratio_k;
    c.n_blocks = n_blocks;
    return c;
}

}  // namespace

TEST_SUITE("bench") {

TEST_CASE("loglog_slope recovers exact power laws") {
    std::vector<double> xs{16, 64, 256, 1024}, quad, lin;
    for (double x : xs) {
        quad.push_back(3.0 * x * x);
        lin.push_back(7.0 * x);
    }
    CHECK(loglog_slope(xs, quad) == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(loglog_slope(xs, lin) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_THROWS_AS(loglog_slope({1.0}, {1.0}), std::invalid_argument);
}

TEST_CASE("attention flops scale quadratically, scan flops linearly") {
    std::vector<double> xs, attn, scan;
    ModelConfig c = bench_config(1, 4);
    for (double L : {256.0, 1024.0, 4096.0, 16384.0}) {
        xs.push_back(L);
        // isolate the L^2 score term from the linear projection term
        attn.push_back(2.0 * L * L * c.hidden);
        scan.push_back(scan_cost_constant() * L * (2.0 * c.hidden) * c.ssm_state);
    }
    double sa = loglog_slope(xs, attn);
    double ss = loglog_slope(xs, scan);
    CHECK(sa > 1.9);
    CHECK(sa < 2.1);
    CHECK(ss > 0.9);
    CHECK(ss < 1.1);
    // full attention term includes projections: slope between 1 and 2, -> 2 at large L
    std::vector<double> full;
    for (double L : xs) full.push_back(flops(bench_config(0, 4), L).attention);
    double sf = loglog_slope({xs[2], xs[3]}, {full[2], full[3]});
    CHECK(sf > 1.6);
    CHECK(sf < 2.2);
}

TEST_CASE("scan cost constant is calibrated by the instrumented counter") {
    CHECK(scan_cost_constant() == doctest::Approx(6.0 + 2.0 / 16).epsilon(1e-12));
    CHECK(instrumented_scan_flops(10, 4, 8) == scan_flops(10, 4, 8, true));
}

TEST_CASE("modeled state footprint strictly decreases in K at fixed mixer budget") {
    const int total = 12;
    double L = 1024;
    double prev = -1;
    for (int k : {0, 1, 2, 4}) {
        int blocks = k == 0 ? total : total / (k + 1);
        double s = state_footprint_bytes(bench_config(k, blocks), L);
        if (prev >= 0) CHECK(s < prev);
        prev = s;
    }
}

TEST_CASE("flop totals decrease in K above the crossover; crossover via bisection") {
    ModelConfig hybrid = bench_config(1, 6), pure = bench_config(0, 12);
    double cross = crossover_length(hybrid, pure);
    REQUIRE(cross > 0);
    double L = cross * 4;
    double f_pure = flops(pure, L).total;
    double f_k1 = flops(bench_config(1, 6), L).total;
    double f_k2 = flops(bench_config(2, 4), L).total;
    CHECK(f_k1 < f_pure);
    CHECK(f_k2 < f_k1);
    // bisection brackets the sign change
    CHECK(flops(pure, cross * 1.01).total > flops(hybrid, cross * 1.01).total);
    CHECK(flops(pure, cross * 0.99).total < flops(hybrid, cross * 0.99).total);
}

TEST_CASE("throughput measurement: rows well-formed, dispersion bounded") {
    ModelConfig c = bench_config(1, 1);
    auto rows = measure_throughput(c, {16, 64}, 5, "forward");
    REQUIRE(rows.size() == 2);
    for (const auto& r : rows) {
        CHECK_FALSE(r.oom);
        CHECK(r.tokens_per_sec_median > 0);
        CHECK(r.tokens_per_sec_p10 <= r.tokens_per_sec_median);
        CHECK(r.tokens_per_sec_p90 >= r.tokens_per_sec_median);
        CHECK(r.modeled_state_bytes > 0);
        // stability gate on repeated measurement
        CHECK(r.tokens_per_sec_p90 / r.tokens_per_sec_p10 < 3.0);
    }
    CHECK_THROWS_AS(measure_throughput(c, {16}, 2, "sideways"), std::invalid_argument);
    CHECK_THROWS_AS(measure_throughput(c, {15}, 2, "forward"), std::invalid_argument);
}

TEST_CASE("ratio comparison uses a fixed mixer budget and rejects indivisible ones") {
    auto rep = compare_ratios({1, 2}, {16}, 6, 32, 1, "");
    // control (k = -1) + two ratios
    REQUIRE(rep.rows.size() == 3);
    CHECK(rep.rows[0].ratio_k == -1);
    CHECK(rep.rows[0].n_blocks == 6);
    CHECK(rep.rows[1].ratio_k == 1);
    CHECK(rep.rows[1].n_blocks == 3);
    CHECK(rep.rows[2].ratio_k == 2);
    CHECK(rep.rows[2].n_blocks == 2);
    CHECK(rep.crossover > 0);
    CHECK_THROWS_AS(compare_ratios({4}, {16}, 6, 32, 1, ""), std::invalid_argument);
}

TEST_CASE("scan kernel microbenchmark agrees across implementations") {
    auto rows = bench_scan_kernels({64, 256}, 16, 8, 8, 2);
    REQUIRE(rows.size() == 2);
    for (const auto& r : rows) {
        CHECK(r.sequential_ms > 0);
        CHECK(r.chunked_ms > 0);
        CHECK(r.max_rel_err < 1e-10);
    }
}

}  // TEST_SUITE
