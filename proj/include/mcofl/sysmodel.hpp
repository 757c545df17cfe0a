#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace mcofl {

// Per-client physical constants, fixed within an episode. cycles_per_sample
// and dataset_size are indexed by service.
struct ClientProfile {
    double capacitance = 1e-27;              // effective switching constant
    std::vector<double> cycles_per_sample;   // per service
    std::vector<double> dataset_size;        // per service, samples
    double channel_gain = 1e-7;              // linear ratio
    double tx_power_w = 0.1;
    double noise_w_hz = 3.981e-21;           // single-sided density
};

struct ClientCost {
    double e_cmp = 0.0, t_cmp = 0.0;
    double e_com = 0.0, t_com = 0.0;
    std::uint64_t vol_bits = 0;
};

struct RoundCosts {
    double e_total = 0.0; // sum over selected clients
    double t_total = 0.0; // max over selected clients
    std::uint64_t vol_total = 0;
};

inline double energy_cmp(const ClientProfile& p, int service, double f_hz) {
    if (f_hz <= 0.0) throw std::invalid_argument("nonpositive CPU frequency");
    return p.capacitance * p.cycles_per_sample.at(service) * p.dataset_size.at(service) * f_hz *
           f_hz;
}

inline double latency_cmp(const ClientProfile& p, int service, double f_hz) {
    if (f_hz <= 0.0) throw std::invalid_argument("nonpositive CPU frequency");
    return p.cycles_per_sample.at(service) * p.dataset_size.at(service) / f_hz;
}

// Shannon rate over an FDMA slice: B * log2(1 + g*p / (B*N0)).
inline double tx_rate(double b_hz, double gain, double power_w, double noise_w_hz) {
    if (b_hz <= 0.0) throw std::invalid_argument("nonpositive bandwidth");
    if (noise_w_hz <= 0.0) throw std::invalid_argument("nonpositive noise density");
    return b_hz * std::log2(1.0 + gain * power_w / (b_hz * noise_w_hz));
}

struct CommCosts {
    double t_com = 0.0, e_com = 0.0;
};

inline CommCosts comm_costs(double vol_bits, double rate_bps, double power_w) {
    if (rate_bps <= 0.0) throw std::invalid_argument("nonpositive transmission rate");
    CommCosts c;
    c.t_com = vol_bits / rate_bps;
    c.e_com = c.t_com * power_w;
    return c;
}

inline RoundCosts round_totals(std::span<const ClientCost> selected) {
    if (selected.empty()) throw std::invalid_argument("empty client selection");
    RoundCosts rc;
    for (const auto& c : selected) {
        rc.e_total += c.e_cmp + c.e_com;
        rc.t_total = std::max(rc.t_total, c.t_cmp + c.t_com);
        rc.vol_total += c.vol_bits;
    }
    return rc;
}

} // namespace mcofl
