#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "mcofl/quantizer.hpp"
#include "mcofl/rng.hpp"

using namespace mcofl;

TEST_CASE("zero vector encodes as zero levels with zero norm", "[quantizer]") {
    RngStream rng(1, "q");
    std::vector<double> v(8, 0.0);
    auto qv = quantize(v, 4, rng);
    CHECK(qv.norm == 0.0);
    for (auto l : qv.levels) CHECK(l == 0);
    auto back = dequantize(qv);
    for (double x : back) CHECK(x == 0.0);
}

TEST_CASE("level distribution matches the stochastic rounding rule", "[quantizer]") {
    // vec [3, 4], 2-norm 5: element 3 has e=0.6, u=2, takes level 2 with
    // probability 0.6 and level 3 otherwise; dequantized mean approaches 3.
    RngStream rng(42, "q");
    std::vector<double> v = {3.0, 4.0};
    const int n = 40000;
    int level2 = 0;
    double mean = 0.0;
    for (int i = 0; i < n; ++i) {
        auto qv = quantize(v, 4, rng);
        REQUIRE(qv.norm == Catch::Approx(5.0).epsilon(1e-15));
        REQUIRE((qv.levels[0] == 2 || qv.levels[0] == 3));
        if (qv.levels[0] == 2) level2++;
        mean += dequantize(qv)[0];
    }
    mean /= n;
    // binomial oracle: se of the frequency and of the dequantized mean
    double se_freq = std::sqrt(0.6 * 0.4 / n);
    CHECK(static_cast<double>(level2) / n == Catch::Approx(0.6).margin(4 * se_freq));
    double se_mean = 5.0 / 4.0 * std::sqrt(0.6 * 0.4 / n);
    CHECK(mean == Catch::Approx(3.0).margin(4 * se_mean));
}

TEST_CASE("boundary magnitude lands on the top level deterministically", "[quantizer]") {
    RngStream rng(5, "q");
    std::vector<double> v = {5.0, 0.0};
    for (int i = 0; i < 50; ++i) {
        auto qv = quantize(v, 2, rng);
        CHECK(qv.levels[0] == 2); // e = 1 maps to level q
        CHECK(qv.signs[0] == 1);
        CHECK(qv.levels[1] == 0);
        CHECK(qv.signs[1] == 0);
        CHECK(dequantize(qv)[0] == Catch::Approx(5.0).epsilon(1e-15));
    }
}

TEST_CASE("dequantize arithmetic", "[quantizer]") {
    QuantizedVec qv;
    qv.norm = 5.0;
    qv.q = 4;
    qv.dim = 1;
    qv.signs = {1};
    qv.levels = {2};
    CHECK(dequantize(qv)[0] == Catch::Approx(2.5));
    qv.signs = {-1};
    CHECK(dequantize(qv)[0] == Catch::Approx(-2.5));
}

TEST_CASE("lattice-aligned vectors reconstruct exactly", "[quantizer]") {
    RngStream rng(9, "q");
    std::vector<double> v(4, 0.5); // 2-norm exactly 1, e = 1/2
    for (std::uint32_t q : {2u, 4u, 8u}) {
        auto qv = quantize(v, q, rng);
        auto back = dequantize(qv);
        for (double x : back) CHECK(x == 0.5);
    }
}

TEST_CASE("rejects invalid inputs", "[quantizer]") {
    RngStream rng(2, "q");
    std::vector<double> v = {1.0};
    CHECK_THROWS(quantize(v, 1, rng));
    std::vector<double> bad = {std::nan("")};
    CHECK_THROWS(quantize(bad, 4, rng));
    CHECK_THROWS(payload_bits(10, 1));
}

TEST_CASE("payload size formula", "[quantizer]") {
    CHECK(payload_bits(0, 8) == 32);
    CHECK(payload_bits(21840, 8) == 87392);
    CHECK(payload_bits(21840, 2) == 43712);
    CHECK(level_bits(2) == 1);
    CHECK(level_bits(8) == 3);
    CHECK(level_bits(9) == 4);
    CHECK(level_bits(32) == 5);
}

TEST_CASE("payload is monotone in q and dim, below the float32 reference", "[quantizer]") {
    std::uint64_t prev = 0;
    for (std::uint32_t q = 2; q <= 4096; q *= 2) {
        auto p = payload_bits(1000, q);
        CHECK(p >= prev);
        prev = p;
        CHECK(payload_bits(1000, q - 1 >= 2 ? q - 1 : 2) <= p);
    }
    RngStream rng(3, "payload");
    for (int i = 0; i < 200; ++i) {
        std::uint64_t dim = 32 + rng.uniform_int(100000);
        std::uint32_t q = static_cast<std::uint32_t>(2 + rng.uniform_int((1u << 30) - 2));
        CHECK(payload_bits(dim, q) <= 32 * dim);
        CHECK(payload_bits(dim + 1, q) > payload_bits(dim, q));
    }
}

TEST_CASE("dequantized magnitudes never exceed the norm", "[quantizer]") {
    RngStream rng(11, "q"), vals(12, "v");
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> v(16);
        for (auto& x : v) x = vals.gaussian(0.0, 3.0);
        std::uint32_t q = static_cast<std::uint32_t>(2 + vals.uniform_int(31));
        auto qv = quantize(v, q, rng);
        for (double x : dequantize(qv)) CHECK(std::abs(x) <= qv.norm * (1 + 1e-12));
    }
}

TEST_CASE("quantization is unbiased (small-scale check)", "[quantizer]") {
    // the acceptance suite runs the full dim-100, 1e5-draw version
    RngStream rng(21, "q"), vals(22, "v");
    const int dim = 16, draws = 20000;
    std::vector<double> v(dim);
    for (auto& x : v) x = vals.gaussian();
    for (std::uint32_t q : {2u, 8u}) {
        std::vector<double> mean(dim, 0.0);
        for (int i = 0; i < draws; ++i) {
            auto back = dequantize(quantize(v, q, rng));
            for (int d = 0; d < dim; ++d) mean[d] += back[d];
        }
        double norm = pnorm(v, 2.0);
        for (int d = 0; d < dim; ++d) {
            mean[d] /= draws;
            double e = std::abs(v[d]) / norm;
            double p = e * q - std::floor(e * q);
            double se = norm / q * std::sqrt(p * (1 - p) / draws);
            CHECK(mean[d] == Catch::Approx(v[d]).margin(5 * se + 1e-12));
        }
    }
}
