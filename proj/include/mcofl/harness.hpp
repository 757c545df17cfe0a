#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mcofl/config.hpp"
#include "mcofl/conjgen.hpp"
#include "mcofl/envmdp.hpp"
#include "mcofl/metrics.hpp"
#include "mcofl/pacagent.hpp"

namespace mcofl {

enum class Policy { Pac, PacP, IndependentAc, Fixed, UniformQ, Heuristic };

inline std::string policy_name(Policy p) {
    switch (p) {
        case Policy::Pac: return "pac";
        case Policy::PacP: return "pac_p";
        case Policy::IndependentAc: return "independent_ac";
        case Policy::Fixed: return "fixed";
        case Policy::UniformQ: return "uniform_q";
        case Policy::Heuristic: return "heuristic";
    }
    return "?";
}

inline Policy parse_policy(const std::string& s) {
    if (s == "pac") return Policy::Pac;
    if (s == "pac_p") return Policy::PacP;
    if (s == "independent_ac") return Policy::IndependentAc;
    if (s == "fixed") return Policy::Fixed;
    if (s == "uniform_q") return Policy::UniformQ;
    if (s == "heuristic") return Policy::Heuristic;
    throw std::invalid_argument("unknown policy: " + s);
}

inline bool policy_learns(Policy p) {
    return p == Policy::Pac || p == Policy::PacP || p == Policy::IndependentAc;
}

// Loss-plateau rule standing in for quantization-tied heuristics: grow q one
// granularity step after three stalled rounds, with bandwidth and frequency
// following q proportionally.
struct HeuristicState {
    std::deque<double> losses;
    int q = 0; // set on first step
};

inline Action heuristic_policy_step(HeuristicState& st, const Observation& obs,
                                    const ExperimentConfig& cfg) {
    if (st.q == 0) st.q = cfg.q_min;
    st.losses.push_back(obs.loss);
    if (st.losses.size() > 4) st.losses.pop_front();
    if (st.losses.size() == 4) {
        bool plateau = true;
        for (std::size_t i = 1; i < st.losses.size(); ++i)
            if (std::abs(st.losses[i] - st.losses[i - 1]) >= 1e-3) plateau = false;
        if (plateau) {
            st.q = std::min(cfg.q_max, st.q + static_cast<int>(std::lround(cfg.step_q)));
            st.losses.clear();
        }
    }
    double frac = static_cast<double>(st.q) / cfg.q_max;
    Action a;
    a.n = cfg.num_clients;
    a.q = st.q;
    a.f_hz = cfg.f_min_hz + (cfg.f_max_hz - cfg.f_min_hz) * frac;
    a.b_hz = (cfg.b_max_hz / cfg.num_sps) * frac;
    return a;
}

struct EpisodeRow {
    int episode = 0;
    int sp = 0;
    double mean_reward = 0.0;
    double acc_max = 0.0;
    double vol_mean_bits = 0.0;
    double t_mean_s = 0.0;
    double e_mean_j = 0.0;
};

struct RunRecord {
    std::vector<EpisodeRow> rows; // episodes x R
    std::vector<double> pareto_row; // per-SP mean reward over the final 20%
    double mean_total_reward = 0.0; // sum of pareto_row
    std::uint64_t seed = 0;
    Policy policy = Policy::Fixed;
    std::uint64_t cfg_hash = 0;
    int num_sps = 0;
    std::uint64_t conjecture_evals = 0;

    // per-episode total reward (summed over SPs), episode order
    std::vector<double> episode_total_reward() const {
        std::vector<double> out;
        for (std::size_t i = 0; i < rows.size(); i += num_sps) {
            double t = 0.0;
            for (int r = 0; r < num_sps; ++r) t += rows[i + r].mean_reward;
            out.push_back(t);
        }
        return out;
    }
};

namespace detail {

inline std::string fmt_g(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

struct RoundLogger {
    std::ofstream jsonl;

    void open(const std::string& path) {
        jsonl.open(path);
        if (!jsonl) throw std::runtime_error("cannot open " + path);
    }

    void log(int episode, int t, int sp, const Action& requested, const Action& executed,
             const Observation& o, double phi, double reward, bool c1, bool c4) {
        if (!jsonl.is_open()) return;
        jsonl << "{\"episode\":" << episode << ",\"t\":" << t << ",\"sp\":" << sp
              << ",\"n\":" << requested.n << ",\"f_hz\":" << fmt_g(requested.f_hz)
              << ",\"b_req_hz\":" << fmt_g(requested.b_hz)
              << ",\"b_used_hz\":" << fmt_g(executed.b_hz) << ",\"q\":" << requested.q
              << ",\"acc\":" << fmt_g(o.accuracy) << ",\"loss\":" << fmt_g(o.loss)
              << ",\"vol_bits\":" << o.vol_bits << ",\"t_total_s\":" << fmt_g(o.t_total)
              << ",\"e_total_j\":" << fmt_g(o.e_total) << ",\"phi\":" << fmt_g(phi)
              << ",\"reward\":" << fmt_g(reward) << ",\"c1\":" << (c1 ? 1 : 0)
              << ",\"c4\":" << (c4 ? 1 : 0) << "}\n";
    }
};

} // namespace detail

inline void write_run_csv(const RunRecord& rec, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << "episode,sp,mean_reward,acc_max,vol_mean_bits,t_mean_s,e_mean_j,seed,policy,"
          "config_hash\n";
    for (const auto& r : rec.rows)
        os << r.episode << ',' << r.sp << ',' << detail::fmt_g(r.mean_reward) << ','
           << detail::fmt_g(r.acc_max) << ',' << detail::fmt_g(r.vol_mean_bits) << ','
           << detail::fmt_g(r.t_mean_s) << ',' << detail::fmt_g(r.e_mean_j) << ',' << rec.seed
           << ',' << policy_name(rec.policy) << ',' << rec.cfg_hash << '\n';
}

using Scalarf = float;

// Checkpoint all agent parameters under (run id, episode).
template <typename Scalar>
void save_checkpoint(const std::string& dir, const std::string& run_id, int episode,
                     std::span<const PacAgent<Scalar>> agents,
                     std::span<const Generator<Scalar>> gens = {}) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    auto base = [&](int r) {
        return dir + "/" + run_id + "_ep" + std::to_string(episode) + "_sp" + std::to_string(r);
    };
    for (std::size_t r = 0; r < agents.size(); ++r) {
        agents[r].actor.save_file(base(static_cast<int>(r)) + "_actor.net");
        agents[r].critic.save_file(base(static_cast<int>(r)) + "_critic.net");
        agents[r].critic_target.save_file(base(static_cast<int>(r)) + "_critic_target.net");
    }
    for (std::size_t r = 0; r < gens.size(); ++r)
        gens[r].net.save_file(base(static_cast<int>(r)) + "_generator.net");
}

template <typename Scalar>
void load_checkpoint(const std::string& dir, const std::string& run_id, int episode,
                     std::span<PacAgent<Scalar>> agents, std::span<Generator<Scalar>> gens = {}) {
    auto base = [&](int r) {
        return dir + "/" + run_id + "_ep" + std::to_string(episode) + "_sp" + std::to_string(r);
    };
    for (std::size_t r = 0; r < agents.size(); ++r) {
        agents[r].actor = Mlp<Scalar>::load_file(base(static_cast<int>(r)) + "_actor.net");
        agents[r].critic = Mlp<Scalar>::load_file(base(static_cast<int>(r)) + "_critic.net");
        agents[r].critic_target =
            Mlp<Scalar>::load_file(base(static_cast<int>(r)) + "_critic_target.net");
    }
    for (std::size_t r = 0; r < gens.size(); ++r)
        gens[r].net = Mlp<Scalar>::load_file(base(static_cast<int>(r)) + "_generator.net");
}

// One experiment: deterministic in (config, policy, seed). Writes one CSV of
// per-episode rows plus one JSONL round log when out_dir is given.
inline RunRecord run(const ExperimentConfig& cfg, Policy policy, std::uint64_t seed,
                     const std::string& out_dir = "") {
    Env env(cfg, seed);
    const int R = cfg.num_sps;
    const ActionEncoder enc{static_cast<double>(cfg.num_clients), cfg.f_max_hz, cfg.b_max_hz,
                            static_cast<double>(cfg.q_max)};
    const Granularity& gran = env.granularity();
    const ActionBounds& bounds = env.bounds();
    const bool learns = policy_learns(policy);
    const int obs_dim = Env::obs_encoding_dim(cfg);
    const int num_opp = (policy == Policy::IndependentAc) ? 0 : R - 1;

    RunRecord rec;
    rec.seed = seed;
    rec.policy = policy;
    rec.cfg_hash = config_hash(cfg);
    rec.num_sps = R;

    std::vector<PacAgent<Scalarf>> agents;
    std::vector<Generator<Scalarf>> gens;
    std::vector<RngStream> select_rng, update_rng, conj_rng;
    std::vector<Conjecturer<Scalarf>> conjecturers;
    if (learns) {
        for (int r = 0; r < R; ++r) {
            RngStream init(cfg.seed ^ seed, "agent-init/sp" + std::to_string(r));
            agents.emplace_back(r, obs_dim, num_opp, static_cast<Scalarf>(cfg.expectile[r]),
                                static_cast<Scalarf>(cfg.actor_lr),
                                static_cast<Scalarf>(cfg.critic_lr),
                                static_cast<std::size_t>(cfg.buffer_capacity), init);
            select_rng.emplace_back(cfg.seed ^ seed, "select/sp" + std::to_string(r));
            update_rng.emplace_back(cfg.seed ^ seed, "update/sp" + std::to_string(r));
            conj_rng.emplace_back(cfg.seed ^ seed, "conj/sp" + std::to_string(r));
        }
        for (int r = 0; r < R; ++r) {
            if (num_opp == 0) {
                conjecturers.push_back(no_conjecture<Scalarf>());
            } else if (policy == Policy::Pac) {
                conjecturers.push_back(brute_force_conjecturer<Scalarf>(gran, bounds, enc));
            } else if (policy == Policy::PacP) {
                RngStream ginit(cfg.seed ^ seed, "gen-init/sp" + std::to_string(r));
                gens.emplace_back(obs_dim, num_opp, static_cast<Scalarf>(cfg.actor_lr),
                                  cfg.gen_ema_decay, ginit);
            } else {
                conjecturers.push_back(no_conjecture<Scalarf>());
            }
        }
        // generator conjecturers need stable addresses, so a second pass
        if (policy == Policy::PacP && num_opp > 0)
            for (int r = 0; r < R; ++r)
                conjecturers.push_back(generator_conjecturer<Scalarf>(
                    gens[r], cfg.gen_samples, gran, bounds, enc, conj_rng[r]));
    }

    std::vector<HeuristicState> heur(R);

    detail::RoundLogger logger;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::string base = out_dir + "/" + policy_name(policy) + "_seed" + std::to_string(seed);
        logger.open(base + "_rounds.jsonl");
    }

    for (int ep = 0; ep < cfg.episodes; ++ep) {
        std::vector<Observation> obs = env.reset(ep);
        std::vector<Action> actions(R, initial_action(bounds, R));
        std::vector<EpisodeBatch<Scalarf>> episode(R);
        std::vector<EpisodeRow> stats(R);
        for (int r = 0; r < R; ++r) {
            stats[r].episode = ep;
            stats[r].sp = r;
            heur[r] = HeuristicState{};
        }

        for (int t = 0; t < cfg.rounds_per_episode; ++t) {
            std::vector<Action> requested(R);
            std::vector<TernaryDelta> deltas(R);
            std::vector<VecX<Scalarf>> obs_enc(R);
            for (int r = 0; r < R; ++r) {
                if (learns) {
                    std::vector<double> e = env.encode_observation(r, obs[r]);
                    obs_enc[r] = Eigen::Map<const Eigen::VectorXd>(e.data(), e.size())
                                     .cast<Scalarf>();
                    ActionChoice<Scalarf> ch =
                        select_action(agents[r].actor, obs_enc[r], select_rng[r],
                                      SelectMode::Sample);
                    deltas[r] = ch.delta;
                    requested[r] = apply_delta(actions[r], ch.delta, gran, bounds);
                } else if (policy == Policy::Fixed || policy == Policy::UniformQ) {
                    Action a;
                    a.n = cfg.num_clients;
                    a.f_hz = 0.5 * (cfg.f_min_hz + cfg.f_max_hz);
                    a.b_hz = cfg.b_max_hz / R;
                    a.q = policy == Policy::Fixed ? cfg.q_max
                                                  : std::clamp(8, cfg.q_min, cfg.q_max);
                    requested[r] = a;
                } else {
                    requested[r] = heuristic_policy_step(heur[r], obs[r], cfg);
                }
            }

            StepResult sr = env.step(requested);

            for (int r = 0; r < R; ++r) {
                if (learns) {
                    Transition<Scalarf> tr;
                    tr.obs_enc = obs_enc[r];
                    std::vector<double> e = env.encode_observation(r, sr.obs[r]);
                    tr.next_obs_enc = Eigen::Map<const Eigen::VectorXd>(e.data(), e.size())
                                          .cast<Scalarf>();
                    tr.own_base = actions[r];
                    tr.own_abs = requested[r];
                    tr.delta = deltas[r];
                    for (int j = 0; j < R; ++j) {
                        if (j == r) continue;
                        tr.opp_prev.push_back(actions[j]);
                        tr.opp_curr.push_back(requested[j]);
                    }
                    tr.reward = static_cast<Scalarf>(sr.rewards[r] * cfg.reward_scale);
                    tr.accuracy = sr.obs[r].accuracy;
                    tr.terminal = (t == cfg.rounds_per_episode - 1);
                    episode[r].steps.push_back(std::move(tr));
                    if (policy == Policy::PacP) {
                        int slot = 0;
                        for (int j = 0; j < R; ++j) {
                            if (j == r) continue;
                            gens[r].ema.observe_actions(slot++, actions[j], requested[j]);
                        }
                    }
                    if (cfg.tau_adapt)
                        agents[r].tau = static_cast<Scalarf>(
                            adapt_tau(agents[r].tau, sr.obs[r].accuracy, cfg.tau_acc_threshold,
                                      cfg.tau_inc, cfg.tau_dec, cfg.tau_min, cfg.tau_max));
                }
                logger.log(ep, t, r, requested[r], sr.executed[r], sr.obs[r], sr.phi[r],
                           sr.rewards[r], sr.c1_violation[r] != 0, sr.c4_violation);
                stats[r].mean_reward += sr.rewards[r];
                stats[r].acc_max = std::max(stats[r].acc_max, sr.obs[r].accuracy);
                stats[r].vol_mean_bits += static_cast<double>(sr.costs[r].vol_total);
                stats[r].t_mean_s += sr.costs[r].t_total;
                stats[r].e_mean_j += sr.costs[r].e_total;
            }
            obs = sr.obs;
            actions = requested;
        }

        for (int r = 0; r < R; ++r) {
            stats[r].mean_reward /= cfg.rounds_per_episode;
            stats[r].vol_mean_bits /= cfg.rounds_per_episode;
            stats[r].t_mean_s /= cfg.rounds_per_episode;
            stats[r].e_mean_j /= cfg.rounds_per_episode;
            rec.rows.push_back(stats[r]);
        }

        if (learns) {
            for (int r = 0; r < R; ++r) {
                agents[r].buffer.push(std::move(episode[r]));
                if (agents[r].buffer.size() < static_cast<std::size_t>(cfg.buffer_min)) continue;
                auto sampled = agents[r].buffer.sample(
                    static_cast<std::size_t>(cfg.batch_episodes), update_rng[r]);
                std::vector<const Transition<Scalarf>*> batch;
                for (const auto* epb : sampled)
                    for (const auto& tr : epb->steps) batch.push_back(&tr);
                auto cs = critic_update<Scalarf>(
                    agents[r], batch, conjecturers[r], static_cast<Scalarf>(cfg.discount), gran,
                    bounds, enc, static_cast<Scalarf>(cfg.polyak), update_rng[r]);
                auto as = actor_update<Scalarf>(agents[r], batch, conjecturers[r], gran, bounds,
                                                enc, static_cast<Scalarf>(cfg.actor_entropy));
                rec.conjecture_evals += cs.conjecture_evals + as.conjecture_evals;
                if (policy == Policy::PacP)
                    generator_update<Scalarf>(gens[r], agents[r].critic, batch,
                                              static_cast<Scalarf>(cfg.gen_kl_weight),
                                              cfg.gen_samples, gran, bounds, enc, update_rng[r]);
            }
        }
    }

    // final-window summary used for cross-run comparisons
    rec.pareto_row.assign(R, 0.0);
    if (cfg.episodes > 0) {
        int window = std::max(1, cfg.episodes / 5);
        for (int ep = cfg.episodes - window; ep < cfg.episodes; ++ep)
            for (int r = 0; r < R; ++r)
                rec.pareto_row[r] += rec.rows[static_cast<std::size_t>(ep) * R + r].mean_reward;
        for (int r = 0; r < R; ++r) {
            rec.pareto_row[r] /= window;
            rec.mean_total_reward += rec.pareto_row[r];
        }
    }

    if (!out_dir.empty()) {
        std::string base = out_dir + "/" + policy_name(policy) + "_seed" + std::to_string(seed);
        write_run_csv(rec, base + ".csv");
    }
    return rec;
}

struct PolicySummary {
    Policy policy;
    int runs = 0;
    double total_reward_mean = 0.0;
    double total_reward_std = 0.0;
    double vol_mean = 0.0, t_mean = 0.0, e_mean = 0.0;
    double hvi = 0.0;
};

// Cross-policy comparison: per-policy means over seeds plus the hypervolume
// of each policy's per-seed reward vectors, normalized jointly. A dimension
// that is constant across every run is widened by +-0.5 so single-run
// summaries still yield a volume.
inline std::vector<PolicySummary> summarize(std::span<const RunRecord> records) {
    if (records.empty()) throw std::invalid_argument("summarize: no run records");
    int R = records.front().num_sps;
    for (const auto& r : records)
        if (r.num_sps != R) throw std::invalid_argument("summarize: mismatched SP counts");

    std::vector<Policy> policies;
    for (const auto& r : records)
        if (std::find(policies.begin(), policies.end(), r.policy) == policies.end())
            policies.push_back(r.policy);

    // joint normalization bounds over all runs of all policies
    std::vector<double> lo(R, std::numeric_limits<double>::infinity());
    std::vector<double> hi(R, -std::numeric_limits<double>::infinity());
    for (const auto& r : records)
        for (int d = 0; d < R; ++d) {
            lo[d] = std::min(lo[d], r.pareto_row[d]);
            hi[d] = std::max(hi[d], r.pareto_row[d]);
        }
    for (int d = 0; d < R; ++d)
        if (!(hi[d] > lo[d])) {
            lo[d] -= 0.5;
            hi[d] += 0.5;
        }

    const double v_ref = 1.1;
    std::vector<double> ref(R, v_ref);
    std::vector<PolicySummary> out;
    for (Policy p : policies) {
        PolicySummary s;
        s.policy = p;
        std::vector<std::vector<double>> inverted;
        std::vector<double> totals;
        for (const auto& r : records) {
            if (r.policy != p) continue;
            s.runs++;
            totals.push_back(r.mean_total_reward);
            std::vector<double> u(R);
            for (int d = 0; d < R; ++d)
                u[d] = v_ref - (r.pareto_row[d] - lo[d]) / (hi[d] - lo[d]);
            inverted.push_back(std::move(u));
            for (const auto& row : r.rows) {
                s.vol_mean += row.vol_mean_bits;
                s.t_mean += row.t_mean_s;
                s.e_mean += row.e_mean_j;
            }
        }
        double n = static_cast<double>(s.runs);
        double mean = 0.0;
        for (double t : totals) mean += t;
        mean /= n;
        double var = 0.0;
        for (double t : totals) var += (t - mean) * (t - mean);
        s.total_reward_mean = mean;
        s.total_reward_std = s.runs > 1 ? std::sqrt(var / (n - 1)) : 0.0;
        std::size_t row_count = 0;
        for (const auto& r : records)
            if (r.policy == p) row_count += r.rows.size();
        s.vol_mean /= static_cast<double>(row_count);
        s.t_mean /= static_cast<double>(row_count);
        s.e_mean /= static_cast<double>(row_count);
        if (R <= 3) {
            s.hvi = hypervolume_exact(inverted, ref);
        } else {
            RngStream rng(0xC0FFEE, "hvi-mc");
            s.hvi = hypervolume_mc(inverted, ref, 1000000, rng).volume;
        }
        out.push_back(s);
    }
    return out;
}

inline void write_summary(std::span<const PolicySummary> summary, std::ostream& os) {
    os << "policy,runs,total_reward_mean,total_reward_std,vol_mean_bits,t_mean_s,e_mean_j,hvi\n";
    for (const auto& s : summary)
        os << policy_name(s.policy) << ',' << s.runs << ',' << detail::fmt_g(s.total_reward_mean)
           << ',' << detail::fmt_g(s.total_reward_std) << ',' << detail::fmt_g(s.vol_mean) << ','
           << detail::fmt_g(s.t_mean) << ',' << detail::fmt_g(s.e_mean) << ','
           << detail::fmt_g(s.hvi) << '\n';
}

// Fan (policy, seed) pairs across worker threads; each run is internally
// sequential and writes only its own files.
inline std::vector<RunRecord> run_many(const ExperimentConfig& cfg,
                                       std::span<const Policy> policies,
                                       std::span<const std::uint64_t> seeds,
                                       const std::string& out_dir = "", int max_threads = 0) {
    struct Job {
        Policy policy;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (Policy p : policies)
        for (std::uint64_t s : seeds) jobs.push_back({p, s});

    unsigned workers = max_threads > 0 ? static_cast<unsigned>(max_threads)
                                       : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min<unsigned>(workers, jobs.size());

    std::vector<RunRecord> results(jobs.size());
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1))
                    results[i] = run(cfg, jobs[i].policy, jobs[i].seed, out_dir);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return results;
}

} // namespace mcofl
