#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcofl/rng.hpp"

namespace mcofl {

// Finite stochastic game: per-agent rewards over (state, joint action) and a
// transition kernel. Joint actions are mixed-radix indices over the agents'
// action counts, agent 0 most significant.
struct FiniteGame {
    int states = 1;
    std::vector<int> action_counts;          // per agent
    std::vector<std::vector<std::vector<double>>> reward; // [agent][state][joint]
    std::vector<std::vector<std::vector<double>>> trans;  // [state][joint][next]
    double gamma = 0.9;

    int num_agents() const { return static_cast<int>(action_counts.size()); }

    int joint_count() const {
        int c = 1;
        for (int a : action_counts) c *= a;
        return c;
    }

    int opp_count(int agent) const { return joint_count() / action_counts[agent]; }

    // joint index from (agent's own action, flattened opponent action);
    // opponents keep their mixed-radix order with the agent's slot removed
    int joint_index(int agent, int own, int opp) const {
        std::vector<int> digits(action_counts.size());
        for (int j = num_agents() - 1; j >= 0; --j) {
            if (j == agent) continue;
            digits[j] = opp % action_counts[j];
            opp /= action_counts[j];
        }
        digits[agent] = own;
        int idx = 0;
        for (int j = 0; j < num_agents(); ++j) idx = idx * action_counts[j] + digits[j];
        return idx;
    }

    void validate() const {
        if (states < 1) throw std::invalid_argument("game needs at least one state");
        if (action_counts.empty()) throw std::invalid_argument("game needs agents");
        for (int a : action_counts)
            if (a < 1) throw std::invalid_argument("agent with empty action set");
        if (static_cast<int>(reward.size()) != num_agents())
            throw std::invalid_argument("reward tensor agent count mismatch");
        for (const auto& ra : reward) {
            if (static_cast<int>(ra.size()) != states)
                throw std::invalid_argument("reward tensor state count mismatch");
            for (const auto& rs : ra)
                if (static_cast<int>(rs.size()) != joint_count())
                    throw std::invalid_argument("reward tensor joint count mismatch");
        }
        if (static_cast<int>(trans.size()) != states)
            throw std::invalid_argument("transition kernel state count mismatch");
        for (const auto& ts : trans)
            for (const auto& row : ts) {
                if (static_cast<int>(row.size()) != states)
                    throw std::invalid_argument("transition row length mismatch");
                double s = 0.0;
                for (double p : row) s += p;
                if (std::abs(s - 1.0) > 1e-12)
                    throw std::invalid_argument("transition row does not sum to 1");
            }
    }

    static FiniteGame single_state(std::vector<int> counts,
                                   std::vector<std::vector<double>> rewards_per_agent,
                                   double gamma) {
        FiniteGame g;
        g.states = 1;
        g.action_counts = std::move(counts);
        g.gamma = gamma;
        for (auto& r : rewards_per_agent) g.reward.push_back({std::move(r)});
        g.trans = {std::vector<std::vector<double>>(g.joint_count(), {1.0})};
        g.validate();
        return g;
    }

    static FiniteGame from_json(const nlohmann::json& j) {
        FiniteGame g;
        g.states = j.at("states").get<int>();
        g.action_counts = j.at("action_counts").get<std::vector<int>>();
        g.gamma = j.at("gamma").get<double>();
        g.reward = j.at("reward").get<std::vector<std::vector<std::vector<double>>>>();
        g.trans = j.at("transitions").get<std::vector<std::vector<std::vector<double>>>>();
        g.validate();
        return g;
    }

    nlohmann::json to_json() const {
        return {{"states", states},
                {"action_counts", action_counts},
                {"gamma", gamma},
                {"reward", reward},
                {"transitions", trans}};
    }
};

// One agent's joint-action value table, laid out [state][own][opponent].
struct QTableJoint {
    int agent = 0;
    int states = 1, own = 1, opp = 1;
    std::vector<double> q;

    static QTableJoint zeros(const FiniteGame& g, int agent) {
        QTableJoint t;
        t.agent = agent;
        t.states = g.states;
        t.own = g.action_counts[agent];
        t.opp = g.opp_count(agent);
        t.q.assign(static_cast<std::size_t>(t.states) * t.own * t.opp, 0.0);
        return t;
    }

    double& at(int s, int own_a, int opp_a) {
        return q[(static_cast<std::size_t>(s) * own + own_a) * opp + opp_a];
    }
    double at(int s, int own_a, int opp_a) const {
        return q[(static_cast<std::size_t>(s) * own + own_a) * opp + opp_a];
    }

    double max_abs_diff(const QTableJoint& o) const {
        double m = 0.0;
        for (std::size_t i = 0; i < q.size(); ++i) m = std::max(m, std::abs(q[i] - o.q[i]));
        return m;
    }
};

enum class ParetoVariant {
    Literal,  // next-state max over opponents with the own action held
    JointMax, // next-state max over the full joint action
};

namespace detail {
inline double next_state_value(const FiniteGame& g, const QTableJoint& q, int next_s, int own_a,
                               ParetoVariant variant) {
    double best = -std::numeric_limits<double>::infinity();
    if (variant == ParetoVariant::Literal) {
        for (int o = 0; o < q.opp; ++o) best = std::max(best, q.at(next_s, own_a, o));
    } else {
        for (int a = 0; a < q.own; ++a)
            for (int o = 0; o < q.opp; ++o) best = std::max(best, q.at(next_s, a, o));
    }
    return best;
}
} // namespace detail

// Optimistic backup: expected immediate reward plus the discounted maximum of
// the next-state table over the opponents' joint action.
inline QTableJoint pareto_apply(const FiniteGame& g, const QTableJoint& q, ParetoVariant variant) {
    if (q.states != g.states || q.own != g.action_counts[q.agent] || q.opp != g.opp_count(q.agent))
        throw std::invalid_argument("pareto_apply: table shape mismatch");
    QTableJoint out = q;
    for (int s = 0; s < g.states; ++s)
        for (int a = 0; a < q.own; ++a)
            for (int o = 0; o < q.opp; ++o) {
                int joint = g.joint_index(q.agent, a, o);
                double acc = g.reward[q.agent][s][joint];
                for (int ns = 0; ns < g.states; ++ns) {
                    double p = g.trans[s][joint][ns];
                    if (p > 0.0)
                        acc += g.gamma * p * detail::next_state_value(g, q, ns, a, variant);
                }
                out.at(s, a, o) = acc;
            }
    return out;
}

// Expectile-weighted backup: the positive and negative parts of the table are
// maxed separately and recombined with weights tau and 1-tau.
inline QTableJoint expectile_pareto_apply(const FiniteGame& g, const QTableJoint& q, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau outside (0, 1)");
    QTableJoint out = q;
    for (int s = 0; s < g.states; ++s)
        for (int a = 0; a < q.own; ++a)
            for (int o = 0; o < q.opp; ++o) {
                int joint = g.joint_index(q.agent, a, o);
                double acc = g.reward[q.agent][s][joint];
                for (int ns = 0; ns < g.states; ++ns) {
                    double p = g.trans[s][joint][ns];
                    if (p <= 0.0) continue;
                    double best_pos = -std::numeric_limits<double>::infinity();
                    double best_neg = -std::numeric_limits<double>::infinity();
                    for (int oo = 0; oo < q.opp; ++oo) {
                        double v = q.at(ns, a, oo);
                        best_pos = std::max(best_pos, std::max(v, 0.0));
                        best_neg = std::max(best_neg, std::min(v, 0.0));
                    }
                    acc += g.gamma * p * (tau * best_pos + (1.0 - tau) * best_neg);
                }
                out.at(s, a, o) = acc;
            }
    return out;
}

using TableOperator = std::function<QTableJoint(const FiniteGame&, const QTableJoint&)>;

// Largest observed Lipschitz ratio ||H Q1 - H Q2||_inf / ||Q1 - Q2||_inf over
// random table pairs; a contraction keeps this at or below gamma.
inline double contraction_probe(const FiniteGame& g, const TableOperator& op, int trials,
                                RngStream& rng, int agent = 0) {
    if (trials < 1) throw std::invalid_argument("contraction_probe: trials below 1");
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
        QTableJoint q1 = QTableJoint::zeros(g, agent);
        QTableJoint q2 = QTableJoint::zeros(g, agent);
        for (auto& v : q1.q) v = rng.uniform(-10.0, 10.0);
        for (auto& v : q2.q) v = rng.uniform(-10.0, 10.0);
        double dist = q1.max_abs_diff(q2);
        if (dist < 1e-12) continue; // degenerate pair, skipped
        QTableJoint h1 = op(g, q1);
        QTableJoint h2 = op(g, q2);
        worst = std::max(worst, h1.max_abs_diff(h2) / dist);
    }
    return worst;
}

struct FixedPointResult {
    QTableJoint q;
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
};

inline FixedPointResult iterate_to_fixed_point(const FiniteGame& g, const TableOperator& op,
                                               double tol, int max_iters, int agent = 0,
                                               const QTableJoint* initial = nullptr) {
    if (tol <= 0.0) throw std::invalid_argument("tolerance must be positive");
    FixedPointResult res;
    res.q = initial ? *initial : QTableJoint::zeros(g, agent);
    for (res.iterations = 0; res.iterations < max_iters; ++res.iterations) {
        QTableJoint next = op(g, res.q);
        res.residual = next.max_abs_diff(res.q);
        res.q = std::move(next);
        if (res.residual <= tol) {
            res.converged = true;
            res.iterations += 1;
            return res;
        }
    }
    return res;
}

// Sampled single-entry update toward the optimistic target; alpha applies to
// the visited (state, own, opponent) entry only.
inline void async_q_update(const FiniteGame& g, QTableJoint& q, int s, int own_a, int opp_a,
                           double alpha, ParetoVariant variant, RngStream& rng) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha outside [0, 1]");
    if (s < 0 || s >= q.states || own_a < 0 || own_a >= q.own || opp_a < 0 || opp_a >= q.opp)
        throw std::out_of_range("async_q_update: visited pair out of range");
    int joint = g.joint_index(q.agent, own_a, opp_a);
    // sample the successor state from the kernel
    double u = rng.uniform();
    int ns = g.states - 1;
    double acc = 0.0;
    for (int cand = 0; cand < g.states; ++cand) {
        acc += g.trans[s][joint][cand];
        if (u < acc) {
            ns = cand;
            break;
        }
    }
    double target = g.reward[q.agent][s][joint] +
                    g.gamma * detail::next_state_value(g, q, ns, own_a, variant);
    q.at(s, own_a, opp_a) += alpha * (target - q.at(s, own_a, opp_a));
}

// Greedy joint action of a 2-agent single-state table under the optimistic
// reading: the argmax over (own, opponent).
inline std::pair<int, int> greedy_joint(const QTableJoint& q, int s = 0) {
    int bi = 0, bj = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < q.own; ++a)
        for (int o = 0; o < q.opp; ++o)
            if (q.at(s, a, o) > best) {
                best = q.at(s, a, o);
                bi = a;
                bj = o;
            }
    return {bi, bj};
}

// Pessimistic (worst-case opponent) backup, the comparison operator in the
// equilibrium-selection check.
inline QTableJoint pessimistic_apply(const FiniteGame& g, const QTableJoint& q) {
    QTableJoint out = q;
    for (int s = 0; s < g.states; ++s)
        for (int a = 0; a < q.own; ++a)
            for (int o = 0; o < q.opp; ++o) {
                int joint = g.joint_index(q.agent, a, o);
                double acc = g.reward[q.agent][s][joint];
                for (int ns = 0; ns < g.states; ++ns) {
                    double p = g.trans[s][joint][ns];
                    if (p <= 0.0) continue;
                    // value of the next state to a pessimist: best own reply
                    // against the worst opponent response
                    double best_own = -std::numeric_limits<double>::infinity();
                    for (int aa = 0; aa < q.own; ++aa) {
                        double worst = std::numeric_limits<double>::infinity();
                        for (int oo = 0; oo < q.opp; ++oo)
                            worst = std::min(worst, q.at(ns, aa, oo));
                        best_own = std::max(best_own, worst);
                    }
                    acc += g.gamma * p * best_own;
                }
                out.at(s, a, o) = acc;
            }
    return out;
}

// Row maximin: the pessimist's greedy own action.
inline int maximin_action(const QTableJoint& q, int s = 0) {
    int best_a = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < q.own; ++a) {
        double worst = std::numeric_limits<double>::infinity();
        for (int o = 0; o < q.opp; ++o) worst = std::min(worst, q.at(s, a, o));
        if (worst > best) {
            best = worst;
            best_a = a;
        }
    }
    return best_a;
}

} // namespace mcofl
