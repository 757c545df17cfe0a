// Command-line front end: experiment runs, cross-policy comparison, operator
// verification on finite games, the approximation-error bound sweep, gradient
// checks, and hypervolume computation over run CSVs.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mcofl/conjgen.hpp"
#include "mcofl/harness.hpp"
#include "mcofl/metrics.hpp"
#include "mcofl/tabular.hpp"

namespace {

mcofl::ExperimentConfig load_or_default(const std::string& path) {
    if (path.empty()) return mcofl::load_config(nlohmann::json::object());
    return mcofl::load_config_file(path);
}

std::vector<std::uint64_t> parse_seeds(const std::string& spec, std::uint64_t fallback) {
    if (spec.empty()) return {fallback};
    auto dots = spec.find("..");
    if (dots == std::string::npos) return {std::stoull(spec)};
    std::uint64_t lo = std::stoull(spec.substr(0, dots));
    std::uint64_t hi = std::stoull(spec.substr(dots + 2));
    std::vector<std::uint64_t> out;
    for (std::uint64_t s = lo; s <= hi; ++s) out.push_back(s);
    return out;
}

int cmd_run(const std::string& config_path, const std::string& policy, std::uint64_t seed,
            const std::string& out) {
    auto cfg = load_or_default(config_path);
    auto rec = mcofl::run(cfg, mcofl::parse_policy(policy), seed, out);
    std::cout << "policy=" << policy << " seed=" << seed
              << " mean_total_reward=" << rec.mean_total_reward << "\n";
    for (int r = 0; r < rec.num_sps; ++r)
        std::cout << "  sp" << r << " final-window mean reward " << rec.pareto_row[r] << "\n";
    return 0;
}

int cmd_compare(const std::string& config_path, const std::vector<std::string>& policies,
                const std::string& seeds_spec, std::uint64_t seed, const std::string& out,
                int threads) {
    auto cfg = load_or_default(config_path);
    std::vector<mcofl::Policy> pols;
    for (const auto& p : policies) pols.push_back(mcofl::parse_policy(p));
    auto seeds = parse_seeds(seeds_spec, seed);
    auto records = mcofl::run_many(cfg, pols, seeds, out, threads);
    auto summary = mcofl::summarize(records);
    mcofl::write_summary(summary, std::cout);
    if (!out.empty()) {
        std::ofstream os(out + "/summary.csv");
        mcofl::write_summary(summary, os);
    }
    return 0;
}

int cmd_tabular_verify(const std::string& game_path, std::uint64_t seed) {
    using namespace mcofl;
    int failures = 0;
    auto check = [&](bool ok, const std::string& what) {
        std::cout << (ok ? "[ok]   " : "[FAIL] ") << what << "\n";
        if (!ok) failures++;
    };

    FiniteGame game;
    if (!game_path.empty()) {
        std::ifstream is(game_path);
        nlohmann::json j;
        is >> j;
        game = FiniteGame::from_json(j);
    } else {
        // random 2-agent 2-state game
        RngStream rng(seed, "game");
        game.states = 2;
        game.action_counts = {2, 2};
        game.gamma = 0.9;
        game.reward.assign(2, std::vector<std::vector<double>>(
                                  2, std::vector<double>(4, 0.0)));
        game.trans.assign(2, std::vector<std::vector<double>>(4, std::vector<double>(2, 0.0)));
        for (auto& agent : game.reward)
            for (auto& st : agent)
                for (auto& v : st) v = rng.uniform(-5.0, 5.0);
        for (auto& st : game.trans)
            for (auto& row : st) {
                double a = rng.uniform(0.05, 0.95);
                row = {a, 1.0 - a};
            }
        game.validate();
    }

    RngStream probe_rng(seed, "probe");
    auto lit = [](const FiniteGame& g, const QTableJoint& q) {
        return pareto_apply(g, q, ParetoVariant::Literal);
    };
    auto jm = [](const FiniteGame& g, const QTableJoint& q) {
        return pareto_apply(g, q, ParetoVariant::JointMax);
    };
    double r1 = contraction_probe(game, lit, 1000, probe_rng);
    check(r1 <= game.gamma + 1e-12, "contraction (literal), max ratio " + std::to_string(r1));
    double r2 = contraction_probe(game, jm, 1000, probe_rng);
    check(r2 <= game.gamma + 1e-12, "contraction (joint max), max ratio " + std::to_string(r2));
    for (double tau : {0.1, 0.5, 0.9}) {
        auto op = [tau](const FiniteGame& g, const QTableJoint& q) {
            return expectile_pareto_apply(g, q, tau);
        };
        double r = contraction_probe(game, op, 1000, probe_rng);
        check(r <= game.gamma + 1e-12,
              "contraction (expectile tau=" + std::to_string(tau) + "), max ratio " +
                  std::to_string(r));
    }

    auto fp = iterate_to_fixed_point(game, jm, 1e-9, 10000);
    check(fp.converged, "fixed point found in " + std::to_string(fp.iterations) + " iterations");
    auto fp2 = iterate_to_fixed_point(game, jm, 1e-9, 10000);
    check(fp.q.max_abs_diff(fp2.q) == 0.0, "fixed point reproducible");
    return failures == 0 ? 0 : 1;
}

int cmd_bound_check(int instances, std::uint64_t seed) {
    using namespace mcofl;
    RngStream rng(seed, "bound");
    int holds = 0;
    double min_margin = 1e300;
    for (int i = 0; i < instances; ++i) {
        std::vector<double> q(3), pt(3);
        for (auto& v : q) v = rng.uniform(-5.0, 5.0);
        double s = 0.0;
        for (auto& v : pt) {
            v = -std::log(rng.uniform_pos());
            s += v;
        }
        for (auto& v : pt) v /= s;
        double c = *std::max_element(q.begin(), q.end()) -
                   *std::min_element(q.begin(), q.end());
        auto pd = softened_argmax(q, 0.01);
        auto res = kl_bound_check(q, pt, pd, c);
        if (res.holds) holds++;
        min_margin = std::min(min_margin, res.rhs - res.lhs);
    }
    std::cout << "bound held in " << holds << "/" << instances
              << " instances, min margin = " << min_margin << "\n";
    return holds == instances ? 0 : 1;
}

int cmd_hvi(const std::vector<std::string>& csvs, double v_ref) {
    using namespace mcofl;
    // Each CSV is a run file; group rows by policy and average the final 20%
    // of episodes per SP to form one reward vector per run.
    std::map<std::string, ParetoSet> sets;
    for (const auto& path : csvs) {
        std::ifstream is(path);
        if (!is) {
            std::cerr << "cannot open " << path << "\n";
            return 1;
        }
        std::string line;
        std::getline(is, line); // header
        std::map<int, std::vector<std::pair<int, double>>> by_sp; // sp -> (episode, reward)
        std::string policy = "?";
        int max_ep = 0;
        while (std::getline(is, line)) {
            std::stringstream ss(line);
            std::string f;
            std::vector<std::string> fields;
            while (std::getline(ss, f, ',')) fields.push_back(f);
            if (fields.size() < 10) continue;
            int ep = std::stoi(fields[0]);
            int sp = std::stoi(fields[1]);
            by_sp[sp].push_back({ep, std::stod(fields[2])});
            policy = fields[8];
            max_ep = std::max(max_ep, ep);
        }
        int window = std::max(1, (max_ep + 1) / 5);
        std::vector<double> v;
        for (auto& [sp, rows] : by_sp) {
            double acc = 0.0;
            int n = 0;
            for (auto& [ep, rew] : rows)
                if (ep > max_ep - window) {
                    acc += rew;
                    n++;
                }
            v.push_back(acc / std::max(1, n));
        }
        sets[policy].label = policy;
        sets[policy].points.push_back(v);
    }
    std::vector<ParetoSet> all;
    for (auto& [k, s] : sets) all.push_back(s);
    auto inverted = normalize_invert(all, v_ref);
    std::cout << "policy,runs,hvi\n";
    for (const auto& s : inverted) {
        std::vector<double> ref(s.points.front().size(), v_ref);
        double hv = s.points.front().size() <= 3
                        ? hypervolume_exact(s.points, ref)
                        : [&] {
                              RngStream rng(7, "hvi-mc");
                              return hypervolume_mc(s.points, ref, 1000000, rng).volume;
                          }();
        std::cout << s.label << ',' << s.points.size() << ',' << hv << "\n";
    }
    return 0;
}

// Finite-difference verification of every network topology the agents use.
int cmd_gradcheck() {
    using namespace mcofl;
    RngStream rng(11, "gradcheck");
    const int obs_dim = 10;
    std::vector<std::vector<int>> shapes = {
        {obs_dim, 64, 128, 64, 12},         // actor
        {obs_dim + 4 + 8, 64, 128, 1},      // critic, two opponents
        {4 + obs_dim + 6, 64, 64, 24},      // conjecture generator
    };
    int failures = 0;
    for (const auto& shape : shapes) {
        Mlp<double> net(shape, rng);
        VecX<double> x(shape.front());
        for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
        VecX<double> w(shape.back());
        for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.uniform(-1.0, 1.0);

        net.forward(x);
        auto grads = net.backward(w);

        VecX<double> flat = net.flatten();
        double worst = 0.0;
        const double h = 1e-5;
        for (int probe = 0; probe < 100; ++probe) {
            Eigen::Index k = static_cast<Eigen::Index>(rng.uniform_int(flat.size()));
            VecX<double> fp = flat, fm = flat;
            fp[k] += h;
            fm[k] -= h;
            Mlp<double> np = net, nm = net;
            np.set_from_flat(fp);
            nm.set_from_flat(fm);
            double fd = (w.dot(np.infer(x)) - w.dot(nm.infer(x))) / (2 * h);
            // locate analytic gradient entry k
            Eigen::Index off = 0;
            double analytic = 0.0;
            for (std::size_t l = 0; l < net.layer_count(); ++l) {
                Eigen::Index wn = net.weights(l).size();
                if (k < off + wn) {
                    Eigen::Index local = k - off;
                    analytic = grads.dW[l](local % net.weights(l).rows(),
                                           local / net.weights(l).rows());
                    break;
                }
                off += wn;
                Eigen::Index bn = net.biases(l).size();
                if (k < off + bn) {
                    analytic = grads.db[l][k - off];
                    break;
                }
                off += bn;
            }
            double rel = std::abs(analytic - fd) / std::max({1e-8, std::abs(analytic),
                                                             std::abs(fd)});
            worst = std::max(worst, rel);
        }
        std::cout << "shape";
        for (int s : shape) std::cout << ' ' << s;
        std::cout << " -> max relative error " << worst << "\n";
        if (worst > 1e-5) failures++;
    }
    std::cout << (failures == 0 ? "gradient checks passed\n" : "gradient checks FAILED\n");
    return failures == 0 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-provider federated learning co-optimization testbed"};
    app.require_subcommand(1);

    std::string config_path, out_dir, policy = "pac", seeds_spec, game_path;
    std::uint64_t seed = 1;
    int threads = 0, instances = 1000;
    double v_ref = 1.1;
    std::vector<std::string> policies = {"pac", "independent_ac", "fixed"};
    std::vector<std::string> csvs;

    auto* c_run = app.add_subcommand("run", "run one experiment");
    c_run->add_option("--config", config_path, "config file (JSON)");
    c_run->add_option("--policy", policy, "pac|pac_p|independent_ac|fixed|uniform_q|heuristic");
    c_run->add_option("--seed", seed, "run seed");
    c_run->add_option("--out", out_dir, "output directory for CSV/JSONL");

    auto* c_cmp = app.add_subcommand("compare", "run a policy/seed grid and summarize");
    c_cmp->add_option("--config", config_path, "config file (JSON)");
    c_cmp->add_option("--policy", policies, "policies to compare");
    c_cmp->add_option("--seeds", seeds_spec, "seed range, e.g. 0..4");
    c_cmp->add_option("--seed", seed, "single seed fallback");
    c_cmp->add_option("--out", out_dir, "output directory");
    c_cmp->add_option("--threads", threads, "worker threads (0 = auto)");

    auto* c_tab = app.add_subcommand("tabular-verify", "operator checks on a finite game");
    c_tab->add_option("--game", game_path, "game definition (JSON), default: random 2x2x2");
    c_tab->add_option("--seed", seed, "probe seed");

    auto* c_bound = app.add_subcommand("bound-check", "approximation-error bound sweep");
    c_bound->add_option("--instances", instances, "random instances");
    c_bound->add_option("--seed", seed, "sweep seed");

    app.add_subcommand("gradcheck", "finite-difference checks of agent networks");

    auto* c_hvi = app.add_subcommand("hvi", "hypervolume over run CSVs");
    c_hvi->add_option("csvs", csvs, "run CSV files")->required();
    c_hvi->add_option("--ref", v_ref, "reference coordinate (default 1.1)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("run")) return cmd_run(config_path, policy, seed, out_dir);
        if (app.got_subcommand("compare"))
            return cmd_compare(config_path, policies, seeds_spec, seed, out_dir, threads);
        if (app.got_subcommand("tabular-verify")) return cmd_tabular_verify(game_path, seed);
        if (app.got_subcommand("bound-check")) return cmd_bound_check(instances, seed);
        if (app.got_subcommand("gradcheck")) return cmd_gradcheck();
        if (app.got_subcommand("hvi")) return cmd_hvi(csvs, v_ref);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
