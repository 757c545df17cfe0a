#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mcofl/harness.hpp"

using namespace mcofl;

namespace {
ExperimentConfig tiny_cfg(const std::string& extra = "{}") {
    nlohmann::json j = nlohmann::json::parse(extra);
    if (!j.contains("num_sps")) j["num_sps"] = 2;
    if (!j.contains("num_clients")) j["num_clients"] = 3;
    j["rounds_per_episode"] = j.value("rounds_per_episode", 6);
    j["episodes"] = j.value("episodes", 10);
    j["buffer_min"] = j.value("buffer_min", 4);
    j["batch_episodes"] = j.value("batch_episodes", 2);
    if (!j.contains("tasks")) {
        j["tasks"] = nlohmann::json::array();
        for (int r = 0; r < j["num_sps"].get<int>(); ++r)
            j["tasks"].push_back({{"classes", 3},
                                  {"features", 4},
                                  {"train_size", 48},
                                  {"test_size", 48},
                                  {"separation", 2.5},
                                  {"difficulty", r}});
    }
    return load_config(j);
}

std::string slurp(const std::string& path) {
    std::ifstream is(path);
    REQUIRE(is);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}
} // namespace

TEST_CASE("policy names round-trip", "[harness]") {
    for (auto p : {Policy::Pac, Policy::PacP, Policy::IndependentAc, Policy::Fixed,
                   Policy::UniformQ, Policy::Heuristic})
        CHECK(parse_policy(policy_name(p)) == p);
    CHECK_THROWS(parse_policy("nonsense"));
}

TEST_CASE("fixed policy uploads exactly n * payload(dim, q_max) per round", "[harness]") {
    auto cfg = tiny_cfg(R"({"episodes": 1})");
    auto rec = run(cfg, Policy::Fixed, 3);
    const std::uint64_t dim = 3 * (4 + 1);
    double expected = static_cast<double>(cfg.num_clients) *
                      static_cast<double>(payload_bits(dim, cfg.q_max));
    for (const auto& row : rec.rows) CHECK(row.vol_mean_bits == Catch::Approx(expected));
}

TEST_CASE("identical invocations produce byte-identical outputs", "[harness]") {
    auto cfg = tiny_cfg();
    std::filesystem::remove_all("/tmp/mcofl_det_a");
    std::filesystem::remove_all("/tmp/mcofl_det_b");
    run(cfg, Policy::UniformQ, 7, "/tmp/mcofl_det_a");
    run(cfg, Policy::UniformQ, 7, "/tmp/mcofl_det_b");
    CHECK(slurp("/tmp/mcofl_det_a/uniform_q_seed7.csv") ==
          slurp("/tmp/mcofl_det_b/uniform_q_seed7.csv"));
    CHECK(slurp("/tmp/mcofl_det_a/uniform_q_seed7_rounds.jsonl") ==
          slurp("/tmp/mcofl_det_b/uniform_q_seed7_rounds.jsonl"));
}

TEST_CASE("run CSV matches the documented schema", "[harness]") {
    auto cfg = tiny_cfg();
    std::filesystem::remove_all("/tmp/mcofl_schema");
    auto rec = run(cfg, Policy::Heuristic, 5, "/tmp/mcofl_schema");
    std::ifstream is("/tmp/mcofl_schema/heuristic_seed5.csv");
    REQUIRE(is);
    std::string header;
    std::getline(is, header);
    CHECK(header ==
          "episode,sp,mean_reward,acc_max,vol_mean_bits,t_mean_s,e_mean_j,seed,policy,"
          "config_hash");
    int rows = 0;
    std::string line;
    while (std::getline(is, line)) {
        int commas = 0;
        for (char c : line) commas += (c == ',');
        CHECK(commas == 9);
        rows++;
    }
    CHECK(rows == cfg.episodes * cfg.num_sps);
    CHECK(rec.rows.size() == static_cast<std::size_t>(rows));
}

TEST_CASE("round log lines parse as JSON with the documented keys", "[harness]") {
    auto cfg = tiny_cfg(R"({"episodes": 2})");
    std::filesystem::remove_all("/tmp/mcofl_jsonl");
    run(cfg, Policy::Fixed, 2, "/tmp/mcofl_jsonl");
    std::ifstream is("/tmp/mcofl_jsonl/fixed_seed2_rounds.jsonl");
    REQUIRE(is);
    std::string line;
    int rows = 0;
    while (std::getline(is, line)) {
        auto j = nlohmann::json::parse(line);
        for (const char* key : {"episode", "t", "sp", "n", "f_hz", "b_req_hz", "b_used_hz", "q",
                                "acc", "loss", "vol_bits", "t_total_s", "e_total_j", "phi",
                                "reward", "c1", "c4"})
            CHECK(j.contains(key));
        rows++;
    }
    CHECK(rows == 2 * cfg.rounds_per_episode * cfg.num_sps);
}

TEST_CASE("heuristic rule reacts to loss plateaus", "[harness]") {
    auto cfg = tiny_cfg();
    HeuristicState st;
    Observation obs;
    obs.loss = 2.0;

    // improving losses keep q at its floor
    for (int t = 0; t < 6; ++t) {
        obs.loss -= 0.3;
        Action a = heuristic_policy_step(st, obs, cfg);
        CHECK(a.q == cfg.q_min);
        CHECK(a.n == cfg.num_clients);
    }
    // a plateau of three stalled rounds triggers one granularity step
    obs.loss = 0.5;
    Action last{};
    for (int t = 0; t < 4; ++t) last = heuristic_policy_step(st, obs, cfg);
    CHECK(last.q == cfg.q_min + static_cast<int>(cfg.step_q));
    double frac = static_cast<double>(last.q) / cfg.q_max;
    CHECK(last.f_hz == Catch::Approx(cfg.f_min_hz + (cfg.f_max_hz - cfg.f_min_hz) * frac));
    CHECK(last.b_hz == Catch::Approx(cfg.b_max_hz / cfg.num_sps * frac));

    // clamped at the ceiling
    HeuristicState top;
    top.q = cfg.q_max;
    for (int t = 0; t < 8; ++t) last = heuristic_policy_step(top, obs, cfg);
    CHECK(last.q == cfg.q_max);
}

TEST_CASE("learning-policy bookkeeping: episodes, rewards, counters", "[harness]") {
    auto cfg = tiny_cfg();
    auto rec = run(cfg, Policy::Pac, 11);
    CHECK(rec.rows.size() == static_cast<std::size_t>(cfg.episodes * cfg.num_sps));
    CHECK(rec.episode_total_reward().size() == static_cast<std::size_t>(cfg.episodes));
    CHECK(rec.pareto_row.size() == static_cast<std::size_t>(cfg.num_sps));
    // R=2: 81 opponent-joint candidates per conjecture call; events start at
    // the buffer_min-th episode, so updates run on episodes 3..9 (7 events);
    // the critic side conjectures per non-terminal transition, the actor
    // side per transition
    std::uint64_t critic_calls = static_cast<std::uint64_t>(cfg.batch_episodes) *
                                 (cfg.rounds_per_episode - 1);
    std::uint64_t actor_calls = static_cast<std::uint64_t>(cfg.batch_episodes) *
                                cfg.rounds_per_episode;
    std::uint64_t expected = 7ull * cfg.num_sps * (critic_calls + actor_calls) * 81ull;
    CHECK(rec.conjecture_evals == expected);

    auto zero = run(load_config(nlohmann::json{{"episodes", 0}, {"num_sps", 2},
                                               {"rounds_per_episode", 4}}),
                    Policy::Pac, 1);
    CHECK(zero.rows.empty());
}

TEST_CASE("generator variant spends K evaluations per conjecture", "[harness]") {
    auto cfg = tiny_cfg();
    auto rec = run(cfg, Policy::PacP, 13);
    std::uint64_t critic_calls = static_cast<std::uint64_t>(cfg.batch_episodes) *
                                 (cfg.rounds_per_episode - 1);
    std::uint64_t actor_calls = static_cast<std::uint64_t>(cfg.batch_episodes) *
                                cfg.rounds_per_episode;
    std::uint64_t expected = 7ull * cfg.num_sps * (critic_calls + actor_calls) *
                             static_cast<std::uint64_t>(cfg.gen_samples);
    CHECK(rec.conjecture_evals == expected);
}

TEST_CASE("summary aggregates policies and computes the indicator", "[harness]") {
    // synthetic records: known reward vectors, no simulation
    auto make = [](Policy p, std::uint64_t seed, std::vector<double> pareto) {
        RunRecord r;
        r.policy = p;
        r.seed = seed;
        r.num_sps = 2;
        r.pareto_row = pareto;
        for (double v : pareto) r.mean_total_reward += v;
        EpisodeRow row;
        row.mean_reward = pareto[0];
        r.rows = {row, row};
        return r;
    };
    std::vector<RunRecord> recs = {make(Policy::Pac, 0, {3.0, 8.0}),
                                   make(Policy::Pac, 1, {5.0, 2.0}),
                                   make(Policy::Fixed, 0, {4.0, 4.0}),
                                   make(Policy::Fixed, 1, {6.0, 1.0})};
    auto summary = summarize(recs);
    REQUIRE(summary.size() == 2);
    CHECK(summary[0].policy == Policy::Pac);
    CHECK(summary[0].runs == 2);
    CHECK(summary[0].total_reward_mean == Catch::Approx((11.0 + 7.0) / 2));
    CHECK(summary[0].hvi > 0.0);

    // identical reward vectors across policies give identical indicators
    std::vector<RunRecord> same = {make(Policy::Pac, 0, {3.0, 8.0}),
                                   make(Policy::Pac, 1, {5.0, 2.0}),
                                   make(Policy::Fixed, 0, {3.0, 8.0}),
                                   make(Policy::Fixed, 1, {5.0, 2.0})};
    auto s2 = summarize(same);
    CHECK(s2[0].hvi == Catch::Approx(s2[1].hvi).margin(1e-12));

    // a single run still yields a volume via the widened bounds
    std::vector<RunRecord> one = {make(Policy::Pac, 0, {3.0, 8.0})};
    auto s3 = summarize(one);
    CHECK(s3[0].hvi == Catch::Approx(0.25).margin(1e-12)); // (1.1 - 0.6)^2
}

TEST_CASE("seed fan-out matches sequential runs", "[harness]") {
    auto cfg = tiny_cfg(R"({"episodes": 3})");
    std::vector<Policy> pols = {Policy::Fixed, Policy::UniformQ};
    std::vector<std::uint64_t> seeds = {1, 2};
    auto par = run_many(cfg, pols, seeds, "", 2);
    REQUIRE(par.size() == 4);
    auto seq = run(cfg, Policy::Fixed, 1);
    CHECK(par[0].mean_total_reward == seq.mean_total_reward);
    CHECK(par[0].rows.size() == seq.rows.size());
}

TEST_CASE("expectile adaptation can drive a run without disturbing the schema", "[harness]") {
    auto cfg = tiny_cfg(R"({"episodes": 5, "tau_adapt": true, "tau_acc_threshold": 0.9})");
    auto rec = run(cfg, Policy::Pac, 17);
    CHECK(rec.rows.size() == static_cast<std::size_t>(cfg.episodes * cfg.num_sps));
}

TEST_CASE("checkpoints restore every network", "[harness]") {
    RngStream init(21, "agent");
    std::vector<PacAgent<float>> agents;
    agents.emplace_back(0, 6, 1, 0.5f, 1e-3f, 1e-3f, 8, init);
    std::vector<Generator<float>> gens;
    gens.emplace_back(6, 1, 1e-3f, 0.99, init);
    std::filesystem::remove_all("/tmp/mcofl_ckpt");
    save_checkpoint<float>("/tmp/mcofl_ckpt", "run0", 5, agents, gens);

    RngStream init2(22, "agent");
    std::vector<PacAgent<float>> loaded;
    loaded.emplace_back(0, 6, 1, 0.5f, 1e-3f, 1e-3f, 8, init2);
    std::vector<Generator<float>> gload;
    gload.emplace_back(6, 1, 1e-3f, 0.99, init2);
    load_checkpoint<float>("/tmp/mcofl_ckpt", "run0", 5, loaded, gload);
    CHECK((loaded[0].actor.flatten() - agents[0].actor.flatten()).norm() == 0.0);
    CHECK((loaded[0].critic.flatten() - agents[0].critic.flatten()).norm() == 0.0);
    CHECK((gload[0].net.flatten() - gens[0].net.flatten()).norm() == 0.0);
}
