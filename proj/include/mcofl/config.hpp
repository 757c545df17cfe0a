#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcofl/rng.hpp"
#include "mcofl/units.hpp"

namespace mcofl {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One synthetic classification task (the service model a provider trains).
// Difficulty is controlled by class-center separation relative to unit
// cluster noise; sizes are per split, samples balanced across classes.
struct TaskSpec {
    int classes = 10;
    int features = 16;
    int train_size = 3000;
    int test_size = 1000;
    double separation = 1.3;
    int difficulty = 0; // 0 = hardest tier

    int model_dim() const { return classes * (features + 1); }
};

struct ExperimentConfig {
    // population and schedule
    int num_clients = 5;        // N
    int num_sps = 3;            // R
    int rounds_per_episode = 35; // T
    int episodes = 200;
    int local_steps = 3;        // iota
    int batch_size = 64;
    double non_iid_degree = 1.0; // rho, fraction of label categories per client

    // learning rates and risk profile
    std::vector<double> expectile = {0.5, 0.5, 0.5}; // tau per SP
    double discount = 0.9;      // gamma
    double actor_lr = 1e-3;     // zeta
    double critic_lr = 1e-3;    // alpha
    double actor_entropy = 0.02; // exploration bonus weight in the actor loss
    double fl_lr = 1e-3;        // eta_k

    // reward weights per SP
    std::vector<double> sigma1 = {100.0, 100.0, 100.0};
    std::vector<double> sigma2 = {4.8, 31.25, 12.5};
    std::vector<double> sigma3 = {0.8, 25.0, 16.6};
    std::vector<double> sigma4 = {0.8, 25.0, 16.6};
    double adversarial_eps = 0.01; // epsilon in the quantization-game factor

    // client-side jitter around the provider's decision
    double jitter_q = 0.5;  // Sigma_q
    double jitter_f = 0.25; // Sigma_f (GHz)

    // action domains
    double f_min_hz = 0.5e9;
    double f_max_hz = 3.5e9;
    double b_min_hz = 0.0;
    double b_max_hz = 30e6;
    int q_min = 2;
    int q_max = 32;

    // per-SP budget caps
    std::vector<double> e_max_j = {40.0, 6.0, 8.0};
    std::vector<double> t_max_s = {8.0, 4.0, 6.0};

    // ternary decomposition granularities
    double step_n = 1.0;
    double step_f_hz = 0.5e9;
    double step_b_hz = 2e6;
    double step_q = 4.0;

    // channel physics, sampled per client per episode
    double gain_db_lo = -73.0, gain_db_hi = -63.0;
    double noise_dbm_hz_lo = -174.0, noise_dbm_hz_hi = -124.0;
    double tx_dbm_lo = 10.0, tx_dbm_hi = 33.0;
    double capacitance = 1e-27; // mu
    std::vector<std::pair<double, double>> cycles_range = {
        {6.07e5, 7.41e5}, {6.07e5, 7.41e5}, {1.10e8, 1.34e8}};

    std::vector<TaskSpec> tasks; // filled with tier defaults if empty

    // agent internals
    double reward_scale = 0.01;  // scaling applied to rewards fed to networks
    double polyak = 0.995;       // target-network averaging
    int buffer_capacity = 64;    // episodes
    int buffer_min = 8;          // episodes buffered before training starts
    int batch_episodes = 4;      // episodes per sampled batch
    int gen_samples = 8;         // K, conjecture-generator sample count
    double gen_kl_weight = 0.1;  // chi
    double gen_ema_decay = 0.99;
    double c1_penalty = 0.0;     // reward penalty per C1 violation

    // optional state-driven expectile adaptation (off by default)
    bool tau_adapt = false;
    double tau_min = 0.1, tau_max = 0.9;
    double tau_inc = 0.05, tau_dec = 0.05;
    double tau_acc_threshold = 0.8;

    double quant_norm_p = 2.0;

    std::uint64_t seed = 1;

    void apply_task_defaults() {
        if (!tasks.empty()) {
            if (static_cast<int>(tasks.size()) != num_sps)
                throw ConfigError("tasks list length must equal num_sps");
            return;
        }
        // three complexity tiers; extra SPs cycle through them
        const TaskSpec tiers[3] = {
            {10, 16, 3000, 1000, 1.3, 0},
            {10, 12, 1000, 500, 2.2, 1},
            {4, 8, 40, 400, 4.0, 2},
        };
        for (int r = 0; r < num_sps; ++r) tasks.push_back(tiers[r % 3]);
    }

    void validate() const {
        auto fail = [](const std::string& m) { throw ConfigError(m); };
        if (num_clients < 1) fail("num_clients below 1");
        if (num_sps < 1) fail("num_sps below 1");
        if (rounds_per_episode < 1) fail("rounds_per_episode below 1");
        if (local_steps < 1) fail("local_steps below 1");
        if (!(non_iid_degree > 0.0 && non_iid_degree <= 1.0)) fail("non_iid_degree outside (0, 1]");
        if (!(discount >= 0.0 && discount < 1.0)) fail("discount outside [0, 1)");
        for (double t : expectile)
            if (!(t > 0.0 && t < 1.0)) fail("expectile outside (0, 1)");
        if (actor_lr <= 0.0 || critic_lr <= 0.0 || fl_lr <= 0.0) fail("nonpositive learning rate");
        if (f_min_hz > f_max_hz) fail("f_min above f_max");
        if (b_min_hz > b_max_hz) fail("b_min above b_max");
        if (q_min < 2) fail("q_min below 2");
        if (q_min > q_max) fail("q_min above q_max");
        if (step_n <= 0 || step_f_hz <= 0 || step_b_hz <= 0 || step_q <= 0)
            fail("granularity not positive");
        if (jitter_q < 0 || jitter_f < 0) fail("negative jitter");
        if (adversarial_eps < 0) fail("negative adversarial_eps");
        for (const auto& v : {sigma1, sigma2, sigma3, sigma4})
            for (double s : v)
                if (s < 0) fail("negative reward weight");
        if (quant_norm_p < 1.0) fail("quant_norm_p below 1");
        if (!(tau_min > 0 && tau_min < tau_max && tau_max < 1)) fail("tau bounds invalid");
        auto per_sp = [&](size_t n, const char* what) {
            if (static_cast<int>(n) != num_sps) fail(std::string(what) + " length must equal num_sps");
        };
        per_sp(expectile.size(), "expectile");
        per_sp(sigma1.size(), "sigma1");
        per_sp(sigma2.size(), "sigma2");
        per_sp(sigma3.size(), "sigma3");
        per_sp(sigma4.size(), "sigma4");
        per_sp(e_max_j.size(), "e_max_j");
        per_sp(t_max_s.size(), "t_max_s");
        per_sp(tasks.size(), "tasks");
    }
};

namespace detail {

inline double json_quantity(const nlohmann::json& v, bool convert_db = true) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
        std::string s = v.get<std::string>();
        if (!convert_db) {
            // channel fields are stored in dB/dBm; strip the suffix only
            auto pos = s.find("dB");
            if (pos != std::string::npos) return std::stod(s.substr(0, pos));
        }
        return parse_quantity(s);
    }
    throw ConfigError("expected number or quantity string");
}

inline void read(const nlohmann::json& j, const char* key, double& out, bool convert_db = true) {
    if (j.contains(key)) out = json_quantity(j.at(key), convert_db);
}

inline void read(const nlohmann::json& j, const char* key, int& out) {
    if (j.contains(key)) out = j.at(key).get<int>();
}

inline void read(const nlohmann::json& j, const char* key, bool& out) {
    if (j.contains(key)) out = j.at(key).get<bool>();
}

inline void read(const nlohmann::json& j, const char* key, std::uint64_t& out) {
    if (j.contains(key)) out = j.at(key).get<std::uint64_t>();
}

inline void read_vec(const nlohmann::json& j, const char* key, std::vector<double>& out, int n) {
    if (!j.contains(key)) {
        if (static_cast<int>(out.size()) != n && !out.empty()) out.resize(n, out.back());
        return;
    }
    const auto& v = j.at(key);
    out.clear();
    if (v.is_array())
        for (const auto& e : v) out.push_back(json_quantity(e));
    else
        out.assign(n, json_quantity(v));
    if (static_cast<int>(out.size()) == 1 && n > 1) out.assign(n, out[0]);
}

} // namespace detail

inline ExperimentConfig load_config(const nlohmann::json& j) {
    ExperimentConfig c;
    using detail::read;
    read(j, "num_clients", c.num_clients);
    read(j, "num_sps", c.num_sps);
    read(j, "rounds_per_episode", c.rounds_per_episode);
    read(j, "episodes", c.episodes);
    read(j, "local_steps", c.local_steps);
    read(j, "batch_size", c.batch_size);
    read(j, "non_iid_degree", c.non_iid_degree);
    read(j, "discount", c.discount);
    read(j, "actor_lr", c.actor_lr);
    read(j, "critic_lr", c.critic_lr);
    read(j, "actor_entropy", c.actor_entropy);
    read(j, "fl_lr", c.fl_lr);
    read(j, "adversarial_eps", c.adversarial_eps);
    read(j, "jitter_q", c.jitter_q);
    read(j, "jitter_f", c.jitter_f);
    read(j, "f_min", c.f_min_hz);
    read(j, "f_max", c.f_max_hz);
    read(j, "b_min", c.b_min_hz);
    read(j, "b_max", c.b_max_hz);
    read(j, "q_min", c.q_min);
    read(j, "q_max", c.q_max);
    read(j, "step_n", c.step_n);
    read(j, "step_f", c.step_f_hz);
    read(j, "step_b", c.step_b_hz);
    read(j, "step_q", c.step_q);
    read(j, "gain_db_lo", c.gain_db_lo, false);
    read(j, "gain_db_hi", c.gain_db_hi, false);
    read(j, "noise_dbm_hz_lo", c.noise_dbm_hz_lo, false);
    read(j, "noise_dbm_hz_hi", c.noise_dbm_hz_hi, false);
    read(j, "tx_dbm_lo", c.tx_dbm_lo, false);
    read(j, "tx_dbm_hi", c.tx_dbm_hi, false);
    read(j, "capacitance", c.capacitance);
    read(j, "reward_scale", c.reward_scale);
    read(j, "polyak", c.polyak);
    read(j, "buffer_capacity", c.buffer_capacity);
    read(j, "buffer_min", c.buffer_min);
    read(j, "batch_episodes", c.batch_episodes);
    read(j, "gen_samples", c.gen_samples);
    read(j, "gen_kl_weight", c.gen_kl_weight);
    read(j, "gen_ema_decay", c.gen_ema_decay);
    read(j, "c1_penalty", c.c1_penalty);
    read(j, "tau_adapt", c.tau_adapt);
    read(j, "tau_min", c.tau_min);
    read(j, "tau_max", c.tau_max);
    read(j, "tau_inc", c.tau_inc);
    read(j, "tau_dec", c.tau_dec);
    read(j, "tau_acc_threshold", c.tau_acc_threshold);
    read(j, "quant_norm_p", c.quant_norm_p);
    read(j, "seed", c.seed);

    detail::read_vec(j, "expectile", c.expectile, c.num_sps);
    detail::read_vec(j, "sigma1", c.sigma1, c.num_sps);
    detail::read_vec(j, "sigma2", c.sigma2, c.num_sps);
    detail::read_vec(j, "sigma3", c.sigma3, c.num_sps);
    detail::read_vec(j, "sigma4", c.sigma4, c.num_sps);
    detail::read_vec(j, "e_max", c.e_max_j, c.num_sps);
    detail::read_vec(j, "t_max", c.t_max_s, c.num_sps);

    if (c.num_sps != 3) {
        // tier defaults above are 3-SP; resize per-SP vectors by cycling
        auto cycle = [&](std::vector<double>& v) {
            std::vector<double> out;
            for (int r = 0; r < c.num_sps; ++r) out.push_back(v[r % v.size()]);
            v = out;
        };
        if (!j.contains("sigma1")) cycle(c.sigma1);
        if (!j.contains("sigma2")) cycle(c.sigma2);
        if (!j.contains("sigma3")) cycle(c.sigma3);
        if (!j.contains("sigma4")) cycle(c.sigma4);
        if (!j.contains("e_max")) cycle(c.e_max_j);
        if (!j.contains("t_max")) cycle(c.t_max_s);
        if (!j.contains("expectile")) c.expectile.assign(c.num_sps, 0.5);
        std::vector<std::pair<double, double>> cyc;
        for (int r = 0; r < c.num_sps; ++r) cyc.push_back(c.cycles_range[r % 3]);
        c.cycles_range = cyc;
    }

    if (j.contains("cycles_range")) {
        c.cycles_range.clear();
        for (const auto& pr : j.at("cycles_range"))
            c.cycles_range.emplace_back(detail::json_quantity(pr.at(0)), detail::json_quantity(pr.at(1)));
        if (static_cast<int>(c.cycles_range.size()) != c.num_sps)
            throw ConfigError("cycles_range length must equal num_sps");
    }

    if (j.contains("tasks")) {
        c.tasks.clear();
        for (const auto& t : j.at("tasks")) {
            TaskSpec ts;
            read(t, "classes", ts.classes);
            read(t, "features", ts.features);
            read(t, "train_size", ts.train_size);
            read(t, "test_size", ts.test_size);
            read(t, "separation", ts.separation);
            read(t, "difficulty", ts.difficulty);
            c.tasks.push_back(ts);
        }
    }
    c.apply_task_defaults();
    c.validate();
    return c;
}

inline ExperimentConfig load_config_text(const std::string& text) {
    nlohmann::json j;
    if (text.find_first_not_of(" \t\r\n") == std::string::npos)
        j = nlohmann::json::object();
    else
        j = nlohmann::json::parse(text);
    return load_config(j);
}

inline ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return load_config_text(ss.str());
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["num_clients"] = c.num_clients;
    j["num_sps"] = c.num_sps;
    j["rounds_per_episode"] = c.rounds_per_episode;
    j["episodes"] = c.episodes;
    j["local_steps"] = c.local_steps;
    j["batch_size"] = c.batch_size;
    j["non_iid_degree"] = c.non_iid_degree;
    j["expectile"] = c.expectile;
    j["discount"] = c.discount;
    j["actor_lr"] = c.actor_lr;
    j["critic_lr"] = c.critic_lr;
    j["actor_entropy"] = c.actor_entropy;
    j["fl_lr"] = c.fl_lr;
    j["sigma1"] = c.sigma1;
    j["sigma2"] = c.sigma2;
    j["sigma3"] = c.sigma3;
    j["sigma4"] = c.sigma4;
    j["adversarial_eps"] = c.adversarial_eps;
    j["jitter_q"] = c.jitter_q;
    j["jitter_f"] = c.jitter_f;
    j["f_min"] = c.f_min_hz;
    j["f_max"] = c.f_max_hz;
    j["b_min"] = c.b_min_hz;
    j["b_max"] = c.b_max_hz;
    j["q_min"] = c.q_min;
    j["q_max"] = c.q_max;
    j["e_max"] = c.e_max_j;
    j["t_max"] = c.t_max_s;
    j["step_n"] = c.step_n;
    j["step_f"] = c.step_f_hz;
    j["step_b"] = c.step_b_hz;
    j["step_q"] = c.step_q;
    j["gain_db_lo"] = c.gain_db_lo;
    j["gain_db_hi"] = c.gain_db_hi;
    j["noise_dbm_hz_lo"] = c.noise_dbm_hz_lo;
    j["noise_dbm_hz_hi"] = c.noise_dbm_hz_hi;
    j["tx_dbm_lo"] = c.tx_dbm_lo;
    j["tx_dbm_hi"] = c.tx_dbm_hi;
    j["capacitance"] = c.capacitance;
    nlohmann::json cr = nlohmann::json::array();
    for (auto& pr : c.cycles_range) cr.push_back({pr.first, pr.second});
    j["cycles_range"] = cr;
    nlohmann::json ts = nlohmann::json::array();
    for (auto& t : c.tasks)
        ts.push_back({{"classes", t.classes},
                      {"features", t.features},
                      {"train_size", t.train_size},
                      {"test_size", t.test_size},
                      {"separation", t.separation},
                      {"difficulty", t.difficulty}});
    j["tasks"] = ts;
    j["reward_scale"] = c.reward_scale;
    j["polyak"] = c.polyak;
    j["buffer_capacity"] = c.buffer_capacity;
    j["buffer_min"] = c.buffer_min;
    j["batch_episodes"] = c.batch_episodes;
    j["gen_samples"] = c.gen_samples;
    j["gen_kl_weight"] = c.gen_kl_weight;
    j["gen_ema_decay"] = c.gen_ema_decay;
    j["c1_penalty"] = c.c1_penalty;
    j["tau_adapt"] = c.tau_adapt;
    j["tau_min"] = c.tau_min;
    j["tau_max"] = c.tau_max;
    j["tau_inc"] = c.tau_inc;
    j["tau_dec"] = c.tau_dec;
    j["tau_acc_threshold"] = c.tau_acc_threshold;
    j["quant_norm_p"] = c.quant_norm_p;
    j["seed"] = c.seed;
    return j;
}

inline std::uint64_t config_hash(const ExperimentConfig& c) {
    return fnv1a64(to_json(c).dump());
}

} // namespace mcofl
