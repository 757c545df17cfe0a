#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "mcofl/sysmodel.hpp"

using namespace mcofl;

namespace {
ClientProfile table_profile() {
    ClientProfile p;
    p.capacitance = 1e-27;
    p.cycles_per_sample = {6.07e5};
    p.dataset_size = {1e4};
    p.channel_gain = 1e-7;    // -70 dB
    p.tx_power_w = 0.1;       // 20 dBm
    p.noise_w_hz = 3.981e-21; // -174 dBm/Hz
    return p;
}
} // namespace

TEST_CASE("computation energy golden value and scaling", "[sysmodel]") {
    auto p = table_profile();
    CHECK(energy_cmp(p, 0, 1e9) == Catch::Approx(6.07).epsilon(1e-12));
    CHECK(energy_cmp(p, 0, 2e9) == Catch::Approx(4.0 * 6.07).epsilon(1e-12));
    p.dataset_size[0] = 0.0;
    CHECK(energy_cmp(p, 0, 1e9) == 0.0);
    CHECK_THROWS(energy_cmp(p, 0, 0.0));
}

TEST_CASE("computation latency golden value and scaling", "[sysmodel]") {
    auto p = table_profile();
    CHECK(latency_cmp(p, 0, 1e9) == Catch::Approx(6.07).epsilon(1e-12));
    CHECK(latency_cmp(p, 0, 2e9) == Catch::Approx(6.07 / 2).epsilon(1e-12));
    p.dataset_size[0] = 0.0;
    CHECK(latency_cmp(p, 0, 1e9) == 0.0);
    CHECK_THROWS(latency_cmp(p, 0, -1.0));
}

TEST_CASE("transmission rate golden value", "[sysmodel]") {
    double rate = tx_rate(1e6, 1e-7, 0.1, 3.981e-21);
    CHECK(rate == Catch::Approx(2.126e7).epsilon(1e-3));
    CHECK(tx_rate(1e6, 0.0, 0.1, 3.981e-21) == 0.0);
    CHECK_THROWS(tx_rate(0.0, 1e-7, 0.1, 3.981e-21));
    CHECK_THROWS(tx_rate(1e6, 1e-7, 0.1, 0.0));
}

TEST_CASE("rate grows with power but sublinearly at high SNR", "[sysmodel]") {
    double r1 = tx_rate(1e6, 1e-7, 0.1, 3.981e-21);
    double r2 = tx_rate(1e6, 1e-7, 0.2, 3.981e-21);
    CHECK(r2 > r1);
    CHECK(r2 < 2 * r1);
}

TEST_CASE("rate is monotone in power, gain and bandwidth", "[sysmodel]") {
    for (double b : {0.5e6, 1e6, 5e6, 20e6}) {
        double prev = 0.0;
        for (double p : {0.01, 0.05, 0.1, 0.5, 1.0}) {
            double r = tx_rate(b, 1e-7, p, 3.981e-21);
            CHECK(r > prev);
            prev = r;
        }
    }
    for (double p : {0.01, 0.1, 1.0}) {
        double prev = 0.0;
        for (double g : {1e-8, 1e-7, 1e-6}) {
            double r = tx_rate(1e6, g, p, 3.981e-21);
            CHECK(r > prev);
            prev = r;
        }
        double rb1 = tx_rate(1e6, 1e-7, p, 3.981e-21);
        double rb2 = tx_rate(2e6, 1e-7, p, 3.981e-21);
        CHECK(rb2 > rb1);
    }
}

TEST_CASE("communication costs are exact ratios", "[sysmodel]") {
    double rate = 2.126e7;
    auto c = comm_costs(87392.0, rate, 0.1);
    CHECK(c.t_com == 87392.0 / rate);
    CHECK(c.e_com == c.t_com * 0.1);
    CHECK(c.t_com == Catch::Approx(4.11e-3).epsilon(1e-2));
    auto z = comm_costs(0.0, rate, 0.1);
    CHECK(z.t_com == 0.0);
    CHECK(z.e_com == 0.0);
    CHECK_THROWS(comm_costs(100.0, 0.0, 0.1));
}

TEST_CASE("round totals: sum energies, max latencies", "[sysmodel]") {
    ClientCost a{.e_cmp = 1.5, .t_cmp = 0.7, .e_com = 0.5, .t_com = 0.3, .vol_bits = 100};
    ClientCost b{.e_cmp = 4.0, .t_cmp = 2.0, .e_com = 1.0, .t_com = 1.0, .vol_bits = 250};
    std::vector<ClientCost> one = {a};
    auto r1 = round_totals(one);
    CHECK(r1.e_total == Catch::Approx(2.0));
    CHECK(r1.t_total == Catch::Approx(1.0));
    CHECK(r1.vol_total == 100);

    std::vector<ClientCost> two = {a, b};
    auto r2 = round_totals(two);
    CHECK(r2.e_total == Catch::Approx(7.0));
    CHECK(r2.t_total == Catch::Approx(3.0));
    CHECK(r2.vol_total == 350);

    CHECK(r2.e_total >= r1.e_total);
    CHECK(r2.t_total >= r1.t_total);
    CHECK_THROWS(round_totals(std::span<const ClientCost>{}));
}
