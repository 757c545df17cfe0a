#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcofl/config.hpp"
#include "mcofl/fedcore.hpp"
#include "mcofl/quantizer.hpp"
#include "mcofl/rng.hpp"
#include "mcofl/sysmodel.hpp"
#include "mcofl/tcad.hpp"

namespace mcofl {

// What a provider sees after a round: its own training status plus the
// operator-published bandwidth vector.
struct Observation {
    int t = 0;
    double loss = 0.0;
    double accuracy = 0.0;
    int q = 2;
    double t_total = 0.0;
    double e_total = 0.0;
    std::uint64_t vol_bits = 0;
    std::vector<double> b_all_hz;
};

// Per-client realization of a provider's action after jitter.
struct ClientAssignment {
    int client = 0;
    double f_hz = 0.0;
    int q = 2;
    double b_hz = 0.0;
};

struct StepResult {
    std::vector<Observation> obs;       // per SP
    std::vector<double> rewards;        // per SP
    std::vector<RoundCosts> costs;      // per SP
    std::vector<double> phi;            // adversarial factor per SP
    std::vector<Action> executed;       // post-arbitration actions
    std::vector<std::uint8_t> c1_violation; // per SP
    bool c4_violation = false;
};

// Quantization-game factor: own n*q against eps-weighted own payload plus
// the opponents' n*q mass. vol is taken in Mbits.
inline double adversarial_factor(int n_r, int q_r, double vol_mbits,
                                 std::span<const std::pair<int, int>> others, double eps) {
    double denom = eps * vol_mbits;
    for (const auto& [nj, qj] : others) denom += static_cast<double>(nj) * qj;
    if (denom <= 0.0)
        throw std::invalid_argument("adversarial factor: degenerate zero denominator");
    return static_cast<double>(n_r) * q_r / denom;
}

inline double reward_value(double accuracy, double phi, double e_total, double t_total,
                           double s1, double s2, double s3, double s4) {
    return s1 * accuracy + s2 * phi - s3 * e_total - s4 * t_total;
}

// Client-level action realization: Gaussian jitter on f and q, equal
// bandwidth split. Draws are clamped into the configured domains.
inline std::vector<ClientAssignment> apply_action(const Action& a,
                                                  std::span<const int> selected_clients,
                                                  double jitter_q, double jitter_f_hz,
                                                  const ActionBounds& bounds, RngStream& rng) {
    std::vector<ClientAssignment> out;
    out.reserve(selected_clients.size());
    double share = a.b_hz / static_cast<double>(selected_clients.size());
    for (int c : selected_clients) {
        ClientAssignment ca;
        ca.client = c;
        double f = jitter_f_hz > 0.0 ? rng.gaussian(a.f_hz, jitter_f_hz) : a.f_hz;
        ca.f_hz = std::clamp(f, bounds.f_min_hz, bounds.f_max_hz);
        double q = jitter_q > 0.0 ? rng.gaussian(static_cast<double>(a.q), jitter_q)
                                  : static_cast<double>(a.q);
        ca.q = std::clamp(static_cast<int>(std::lround(q)), bounds.q_min, bounds.q_max);
        ca.b_hz = share;
        out.push_back(ca);
    }
    return out;
}

// The multi-provider environment: one synthetic FL task per SP over a shared
// client pool and bandwidth budget. A single instance advances one round at
// a time; independent instances (other seeds) are fully isolated.
class Env {
public:
    Env(const ExperimentConfig& cfg, std::uint64_t run_seed)
        : cfg_(cfg), run_seed_(run_seed) {
        bounds_.n_max = cfg.num_clients;
        bounds_.f_min_hz = cfg.f_min_hz;
        bounds_.f_max_hz = cfg.f_max_hz;
        bounds_.b_min_hz = cfg.b_min_hz;
        bounds_.b_max_hz = cfg.b_max_hz;
        bounds_.q_min = cfg.q_min;
        bounds_.q_max = cfg.q_max;
        gran_ = {cfg.step_n, cfg.step_f_hz, cfg.step_b_hz, cfg.step_q};
        for (int r = 0; r < cfg.num_sps; ++r) {
            tasks_.push_back(make_task(cfg.tasks[r], run_seed, r));
            RngStream part_rng(run_seed, "partition/sp" + std::to_string(r));
            shards_.push_back(partition(tasks_[r], cfg.num_clients, cfg.non_iid_degree, r, part_rng));
            vol_max_bits_.push_back(static_cast<double>(cfg.num_clients) *
                                    static_cast<double>(payload_bits(tasks_[r].classes *
                                                                         (tasks_[r].features + 1),
                                                                     cfg.q_max)));
        }
        reset(0);
    }

    const ActionBounds& bounds() const { return bounds_; }
    const Granularity& granularity() const { return gran_; }
    const ExperimentConfig& config() const { return cfg_; }
    int round() const { return t_; }
    const SyntheticTask& task(int r) const { return tasks_[r]; }
    const std::vector<ClientShard>& shards(int r) const { return shards_[r]; }
    const ClientProfile& profile(int c) const { return profiles_[c]; }

    // Fresh episode: reinitialize models, resample client physics, reset the
    // per-SP action state to the midpoint start.
    std::vector<Observation> reset(int episode) {
        episode_ = episode;
        t_ = 0;
        std::string etag = "ep" + std::to_string(episode);
        models_.clear();
        for (int r = 0; r < cfg_.num_sps; ++r) models_.push_back(GlobalModel::zeros(tasks_[r], r));

        RngStream phys(run_seed_, "physics/" + etag);
        profiles_.assign(cfg_.num_clients, ClientProfile{});
        for (int c = 0; c < cfg_.num_clients; ++c) {
            auto& p = profiles_[c];
            p.capacitance = cfg_.capacitance;
            p.channel_gain = db_to_linear(phys.uniform(cfg_.gain_db_lo, cfg_.gain_db_hi));
            p.noise_w_hz = dbm_to_watts(phys.uniform(cfg_.noise_dbm_hz_lo, cfg_.noise_dbm_hz_hi));
            p.tx_power_w = dbm_to_watts(phys.uniform(cfg_.tx_dbm_lo, cfg_.tx_dbm_hi));
            p.cycles_per_sample.resize(cfg_.num_sps);
            p.dataset_size.resize(cfg_.num_sps);
            for (int r = 0; r < cfg_.num_sps; ++r) {
                p.cycles_per_sample[r] =
                    phys.uniform(cfg_.cycles_range[r].first, cfg_.cycles_range[r].second);
                p.dataset_size[r] = static_cast<double>(shards_[r][c].sample_idx.size());
            }
        }
        jitter_rng_ = RngStream(run_seed_, "jitter/" + etag);
        quant_rng_ = RngStream(run_seed_, "quant/" + etag);
        fl_rng_ = RngStream(run_seed_, "fl/" + etag);

        std::vector<Observation> obs(cfg_.num_sps);
        Action a0 = initial_action(bounds_, cfg_.num_sps);
        std::vector<double> b_all(cfg_.num_sps, a0.b_hz);
        for (int r = 0; r < cfg_.num_sps; ++r) {
            EvalResult ev = evaluate(models_[r], tasks_[r]);
            obs[r].t = 0;
            obs[r].loss = ev.loss;
            obs[r].accuracy = ev.accuracy;
            obs[r].q = a0.q;
            obs[r].b_all_hz = b_all;
        }
        return obs;
    }

    // One FL round for every provider under the joint action.
    StepResult step(const std::vector<Action>& requested) {
        if (static_cast<int>(requested.size()) != cfg_.num_sps)
            throw std::invalid_argument("step: action count mismatch");
        if (t_ >= cfg_.rounds_per_episode) throw std::logic_error("episode horizon exhausted");

        StepResult res;
        res.executed = requested;
        res.c1_violation.assign(cfg_.num_sps, 0);

        // shared-budget arbitration: proportional scaling onto B_max
        double b_sum = 0.0;
        for (const auto& a : requested) b_sum += a.b_hz;
        if (b_sum > cfg_.b_max_hz || b_sum < cfg_.b_min_hz) {
            res.c4_violation = true;
            if (b_sum > cfg_.b_max_hz && b_sum > 0.0) {
                double scale = cfg_.b_max_hz / b_sum;
                for (auto& a : res.executed) a.b_hz *= scale;
            }
        }

        res.costs.resize(cfg_.num_sps);
        res.phi.resize(cfg_.num_sps);
        res.rewards.resize(cfg_.num_sps);
        res.obs.resize(cfg_.num_sps);

        std::vector<double> b_all(cfg_.num_sps);
        for (int r = 0; r < cfg_.num_sps; ++r) b_all[r] = res.executed[r].b_hz;

        std::vector<EvalResult> evals(cfg_.num_sps);
        for (int r = 0; r < cfg_.num_sps; ++r)
            evals[r] = run_fl_round(r, res.executed[r], res.costs[r], res.c1_violation[r]);

        for (int r = 0; r < cfg_.num_sps; ++r) {
            std::vector<std::pair<int, int>> others;
            for (int j = 0; j < cfg_.num_sps; ++j)
                if (j != r) others.emplace_back(requested[j].n, requested[j].q);
            res.phi[r] = adversarial_factor(requested[r].n, requested[r].q,
                                            static_cast<double>(res.costs[r].vol_total) / 1e6,
                                            others, cfg_.adversarial_eps);
            res.rewards[r] =
                reward_value(evals[r].accuracy, res.phi[r], res.costs[r].e_total,
                             res.costs[r].t_total, cfg_.sigma1[r], cfg_.sigma2[r], cfg_.sigma3[r],
                             cfg_.sigma4[r]) -
                (res.c1_violation[r] ? cfg_.c1_penalty : 0.0);

            res.obs[r].t = t_ + 1;
            res.obs[r].loss = evals[r].loss;
            res.obs[r].accuracy = evals[r].accuracy;
            res.obs[r].q = requested[r].q;
            res.obs[r].t_total = res.costs[r].t_total;
            res.obs[r].e_total = res.costs[r].e_total;
            res.obs[r].vol_bits = res.costs[r].vol_total;
            res.obs[r].b_all_hz = b_all;
        }
        t_ += 1;
        return res;
    }

    // Selection rule: the n largest shards for the service, ties broken by
    // client index.
    std::vector<int> select_clients(int r, int n) const {
        std::vector<int> idx(cfg_.num_clients);
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
            return shards_[r][a].sample_idx.size() > shards_[r][b].sample_idx.size();
        });
        idx.resize(std::clamp(n, 1, cfg_.num_clients));
        return idx;
    }

    // Normalized observation encoding fed to the agents; raw values stay in
    // the logs. Layout: [t/T, clip(loss,0,5)/5, acc, q/q_max, T/T_max,
    // E/E_max, vol/vol_max, B_1/B_max, ..., B_R/B_max].
    std::vector<double> encode_observation(int r, const Observation& o) const {
        std::vector<double> v;
        v.reserve(8 + cfg_.num_sps);
        v.push_back(static_cast<double>(o.t) / cfg_.rounds_per_episode);
        v.push_back(std::clamp(o.loss, 0.0, 5.0) / 5.0);
        v.push_back(o.accuracy);
        v.push_back(static_cast<double>(o.q) / cfg_.q_max);
        v.push_back(std::min(o.t_total / cfg_.t_max_s[r], 2.0));
        v.push_back(std::min(o.e_total / cfg_.e_max_j[r], 2.0));
        v.push_back(static_cast<double>(o.vol_bits) / vol_max_bits_[r]);
        for (int j = 0; j < cfg_.num_sps; ++j)
            v.push_back(o.b_all_hz.empty() ? 0.0 : o.b_all_hz[j] / cfg_.b_max_hz);
        return v;
    }

    static int obs_encoding_dim(const ExperimentConfig& cfg) { return 7 + cfg.num_sps; }

    std::vector<double> encode_action(const Action& a) const {
        return {static_cast<double>(a.n) / cfg_.num_clients, a.f_hz / cfg_.f_max_hz,
                a.b_hz / cfg_.b_max_hz, static_cast<double>(a.q) / cfg_.q_max};
    }

private:
    // Local updates, quantized uploads, aggregation, evaluation and cost
    // bookkeeping for one provider. A zero-bandwidth action stalls the
    // round: compute happens, nothing is uploaded, and the latency cap is
    // charged as the blown deadline.
    EvalResult run_fl_round(int r, const Action& a, RoundCosts& costs, std::uint8_t& c1_flag) {
        std::vector<int> selected = select_clients(r, a.n);
        std::vector<ClientAssignment> assign = apply_action(
            a, selected, cfg_.jitter_q, cfg_.jitter_f * 1e9, bounds_, jitter_rng_);

        const bool stalled = a.b_hz <= 0.0;
        std::vector<ClientCost> ccosts;
        std::vector<std::pair<QuantizedVec, double>> uploads;
        for (const auto& ca : assign) {
            ClientCost cc;
            cc.e_cmp = energy_cmp(profiles_[ca.client], r, ca.f_hz);
            cc.t_cmp = latency_cmp(profiles_[ca.client], r, ca.f_hz);
            std::vector<double> local = local_update(models_[r], tasks_[r], shards_[r][ca.client],
                                                     cfg_.fl_lr, cfg_.local_steps,
                                                     cfg_.batch_size, fl_rng_);
            if (!stalled) {
                QuantizedVec qv = quantize(local, static_cast<std::uint32_t>(ca.q), quant_rng_,
                                           cfg_.quant_norm_p);
                cc.vol_bits = payload_bits(qv.dim, qv.q);
                double rate = tx_rate(ca.b_hz, profiles_[ca.client].channel_gain,
                                      profiles_[ca.client].tx_power_w,
                                      profiles_[ca.client].noise_w_hz);
                CommCosts com = comm_costs(static_cast<double>(cc.vol_bits), rate,
                                           profiles_[ca.client].tx_power_w);
                cc.t_com = com.t_com;
                cc.e_com = com.e_com;
                uploads.emplace_back(std::move(qv), shards_[r][ca.client].weight);
            }
            ccosts.push_back(cc);
        }
        costs = round_totals(ccosts);
        if (stalled) costs.t_total = cfg_.t_max_s[r];
        if (!uploads.empty()) models_[r].params = aggregate(uploads);
        if (costs.e_total > cfg_.e_max_j[r] || costs.t_total >= cfg_.t_max_s[r]) c1_flag = 1;
        return evaluate(models_[r], tasks_[r]);
    }

    ExperimentConfig cfg_;
    std::uint64_t run_seed_;
    ActionBounds bounds_;
    Granularity gran_;
    std::vector<SyntheticTask> tasks_;
    std::vector<std::vector<ClientShard>> shards_;
    std::vector<GlobalModel> models_;
    std::vector<ClientProfile> profiles_;
    std::vector<double> vol_max_bits_;
    RngStream jitter_rng_, quant_rng_, fl_rng_;
    int t_ = 0;
    int episode_ = 0;
};

} // namespace mcofl
