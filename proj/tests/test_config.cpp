#include <catch2/catch_amalgamated.hpp>

#include "mcofl/config.hpp"
#include "mcofl/rng.hpp"
#include "mcofl/units.hpp"

using namespace mcofl;

TEST_CASE("empty document yields the documented defaults", "[config]") {
    auto cfg = load_config_text("");
    CHECK(cfg.num_clients == 5);
    CHECK(cfg.num_sps == 3);
    CHECK(cfg.rounds_per_episode == 35);
    CHECK(cfg.local_steps == 3);
    CHECK(cfg.non_iid_degree == 1.0);
    for (double t : cfg.expectile) CHECK(t == 0.5);
    CHECK(cfg.q_min == 2);
    CHECK(cfg.q_max == 32);
    CHECK(cfg.f_min_hz == Catch::Approx(0.5e9));
    CHECK(cfg.f_max_hz == Catch::Approx(3.5e9));
    CHECK(cfg.b_max_hz == Catch::Approx(30e6));
    CHECK(cfg.sigma2 == std::vector<double>{4.8, 31.25, 12.5});
    CHECK(cfg.sigma3 == std::vector<double>{0.8, 25.0, 16.6});
    CHECK(cfg.jitter_q == 0.5);
    CHECK(cfg.jitter_f == 0.25);
    CHECK(cfg.tasks.size() == 3);
}

TEST_CASE("bound violations are reported by name", "[config]") {
    CHECK_THROWS_WITH(load_config_text(R"({"q_min": 1})"),
                      Catch::Matchers::ContainsSubstring("q_min below 2"));
    CHECK_THROWS_WITH(load_config_text(R"({"f_min": 4.0e9})"),
                      Catch::Matchers::ContainsSubstring("f_min above f_max"));
    CHECK_THROWS_WITH(load_config_text(R"({"non_iid_degree": 0.0})"),
                      Catch::Matchers::ContainsSubstring("non_iid_degree"));
    CHECK_THROWS_WITH(load_config_text(R"({"sigma1": [-1, 0, 0]})"),
                      Catch::Matchers::ContainsSubstring("negative reward weight"));
    CHECK_THROWS_AS(load_config_text("{not json"), nlohmann::json::exception);
}

TEST_CASE("unit suffixes parse into SI base units", "[config]") {
    auto cfg = load_config_text(R"({"f_max": "3.5 GHz", "f_min": "0.5 GHz", "b_max": "30 MHz"})");
    CHECK(cfg.f_max_hz == Catch::Approx(3.5e9));
    CHECK(cfg.f_min_hz == Catch::Approx(0.5e9));
    CHECK(cfg.b_max_hz == Catch::Approx(30.0e6));
    CHECK(parse_quantity("21840 bits") == Catch::Approx(21840));
    CHECK(parse_quantity("-70 dB") == Catch::Approx(1e-7));
    CHECK(parse_quantity("20 dBm") == Catch::Approx(0.1));
    CHECK_THROWS(parse_quantity("3 parsec"));
}

TEST_CASE("config serialization round-trips", "[config]") {
    auto cfg = load_config_text(R"({"num_sps": 2, "episodes": 7, "discount": 0.8,
                                    "expectile": [0.3, 0.7]})");
    auto j = to_json(cfg);
    auto cfg2 = load_config(j);
    CHECK(to_json(cfg2).dump() == j.dump());
    CHECK(config_hash(cfg) == config_hash(cfg2));
    auto cfg3 = load_config_text(R"({"episodes": 8})");
    CHECK(config_hash(cfg) != config_hash(cfg3));
}

TEST_CASE("decibel conversions", "[config]") {
    CHECK(db_to_linear(0.0) == 1.0);
    CHECK(db_to_linear(-70.0) == Catch::Approx(1e-7).epsilon(1e-12));
    CHECK(db_to_linear(10.0) == Catch::Approx(10.0).epsilon(1e-12));
    CHECK(dbm_to_watts(30.0) == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(dbm_to_watts(20.0) == Catch::Approx(0.1).epsilon(1e-12));
    // thermal noise density at -174 dBm/Hz
    CHECK(dbm_to_watts(-174.0) == Catch::Approx(3.981e-21).epsilon(1e-3));
}

TEST_CASE("unit conversions are monotone and invertible", "[config]") {
    double prev = 0.0;
    for (double db = -100.0; db <= 40.0; db += 2.5) {
        double lin = db_to_linear(db);
        CHECK(lin > prev);
        prev = lin;
        CHECK(linear_to_db(lin) == Catch::Approx(db).margin(1e-12));
        CHECK(watts_to_dbm(dbm_to_watts(db)) == Catch::Approx(db).margin(1e-12));
    }
}

TEST_CASE("random streams are reproducible and label-independent", "[config]") {
    RngStream a(42, "quant"), b(42, "quant");
    for (int i = 0; i < 100; ++i) CHECK(a.u64() == b.u64());

    RngStream c(42, "quant"), d(42, "jitter"), e(43, "quant");
    int diff_label = 0, diff_seed = 0;
    RngStream c2(42, "quant");
    for (int i = 0; i < 100; ++i) {
        auto x = c.u64();
        if (x != d.u64()) diff_label++;
        if (c2.u64() != e.u64()) diff_seed++;
    }
    CHECK(diff_label > 90);
    CHECK(diff_seed > 90);
}

TEST_CASE("stream distributions behave sanely", "[config]") {
    RngStream r(7, "dist");
    double sum = 0.0, sumsq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        double g = r.gaussian();
        sum += g;
        sumsq += g * g;
    }
    CHECK(sum / n == Catch::Approx(0.0).margin(0.05));
    CHECK(sumsq / n == Catch::Approx(1.0).margin(0.05));
    for (int i = 0; i < 1000; ++i) {
        double u = r.uniform(2.0, 3.0);
        CHECK(u >= 2.0);
        CHECK(u < 3.0);
    }
}
