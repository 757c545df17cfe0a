#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "mcofl/tabular.hpp"

using namespace mcofl;

namespace {

// shared-payoff 2x2 team game: rwd = [[10, 0], [0, 5]]
FiniteGame team_game(double gamma = 0.9) {
    std::vector<double> r = {10.0, 0.0, 0.0, 5.0};
    return FiniteGame::single_state({2, 2}, {r, r}, gamma);
}

// 3x3 game with a risky high-reward equilibrium at (0,0), -20 penalties
// around it, and a safe equilibrium at (2,2)
FiniteGame penalty_game(double gamma = 0.9) {
    std::vector<double> r = {10.0, -20.0, 0.0, -20.0, 0.0, 0.0, 0.0, 0.0, 5.0};
    return FiniteGame::single_state({3, 3}, {r, r}, gamma);
}

FiniteGame random_game(int states, std::uint64_t seed, double gamma = 0.9) {
    RngStream rng(seed, "game");
    FiniteGame g;
    g.states = states;
    g.action_counts = {2, 2};
    g.gamma = gamma;
    g.reward.assign(2, std::vector<std::vector<double>>(states, std::vector<double>(4, 0.0)));
    g.trans.assign(states, std::vector<std::vector<double>>(4, std::vector<double>(states, 0.0)));
    for (auto& agent : g.reward)
        for (auto& st : agent)
            for (auto& v : st) v = rng.uniform(-5.0, 5.0);
    for (auto& st : g.trans)
        for (auto& row : st) {
            double s = 0.0;
            for (auto& v : row) {
                v = rng.uniform_pos();
                s += v;
            }
            double acc = 0.0;
            for (std::size_t i = 0; i + 1 < row.size(); ++i) {
                row[i] /= s;
                acc += row[i];
            }
            row.back() = 1.0 - acc;
        }
    g.validate();
    return g;
}

TableOperator literal_op() {
    return [](const FiniteGame& g, const QTableJoint& q) {
        return pareto_apply(g, q, ParetoVariant::Literal);
    };
}
TableOperator jointmax_op() {
    return [](const FiniteGame& g, const QTableJoint& q) {
        return pareto_apply(g, q, ParetoVariant::JointMax);
    };
}

} // namespace

TEST_CASE("zero discount reduces the backup to expected reward", "[tabular]") {
    auto g = random_game(2, 1, 0.0);
    QTableJoint q = QTableJoint::zeros(g, 0);
    RngStream rng(2, "q");
    for (auto& v : q.q) v = rng.uniform(-3.0, 3.0);
    for (auto variant : {ParetoVariant::Literal, ParetoVariant::JointMax}) {
        auto hq = pareto_apply(g, q, variant);
        for (int s = 0; s < g.states; ++s)
            for (int a = 0; a < 2; ++a)
                for (int o = 0; o < 2; ++o)
                    CHECK(hq.at(s, a, o) ==
                          Catch::Approx(g.reward[0][s][g.joint_index(0, a, o)]).margin(1e-12));
    }
}

TEST_CASE("team-game fixed point reaches the optimistic value", "[tabular]") {
    auto g = team_game();
    auto res = iterate_to_fixed_point(g, jointmax_op(), 1e-9, 10000);
    REQUIRE(res.converged);
    double mx = *std::max_element(res.q.q.begin(), res.q.q.end());
    CHECK(mx == Catch::Approx(100.0).margin(1e-6));
    // closed forms: Q*(a) = rwd(a) + 0.9 * 100
    CHECK(res.q.at(0, 0, 0) == Catch::Approx(100.0).margin(1e-6));
    CHECK(res.q.at(0, 0, 1) == Catch::Approx(90.0).margin(1e-6));
    CHECK(res.q.at(0, 1, 1) == Catch::Approx(95.0).margin(1e-6));
}

TEST_CASE("literal-variant fixed point solves the held-action equations", "[tabular]") {
    // per own action a: m(a) = max_o Q(a, o), Q(a, o) = rwd(a, o) + 0.9 m(a)
    // giving rows (100, 90) and (45, 50)
    auto g = team_game();
    auto res = iterate_to_fixed_point(g, literal_op(), 1e-12, 20000);
    REQUIRE(res.converged);
    CHECK(res.q.at(0, 0, 0) == Catch::Approx(100.0).margin(1e-9));
    CHECK(res.q.at(0, 0, 1) == Catch::Approx(90.0).margin(1e-9));
    CHECK(res.q.at(0, 1, 0) == Catch::Approx(45.0).margin(1e-9));
    CHECK(res.q.at(0, 1, 1) == Catch::Approx(50.0).margin(1e-9));
}

TEST_CASE("expectile backup: positive tables recover the plain backup as tau -> 1",
          "[tabular]") {
    auto g = team_game();
    QTableJoint q = QTableJoint::zeros(g, 0);
    RngStream rng(3, "q");
    for (auto& v : q.q) v = rng.uniform(0.0, 5.0); // nonnegative
    auto plain = pareto_apply(g, q, ParetoVariant::Literal);
    auto expectile = expectile_pareto_apply(g, q, 1.0 - 1e-9);
    CHECK(plain.max_abs_diff(expectile) < 1e-6);
}

TEST_CASE("expectile backup splits signed parts at tau = 1/2", "[tabular]") {
    auto g = team_game();
    QTableJoint q = QTableJoint::zeros(g, 0);
    q.at(0, 0, 0) = 4.0;
    q.at(0, 0, 1) = -2.0;
    q.at(0, 1, 0) = -3.0;
    q.at(0, 1, 1) = -1.0;
    auto hq = expectile_pareto_apply(g, q, 0.5);
    // own action 0: max Q+ = 4, max Q- = 0 (element-wise negative part of 4 is 0)
    CHECK(hq.at(0, 0, 0) == Catch::Approx(10.0 + 0.9 * 0.5 * (4.0 + 0.0)).margin(1e-12));
    // own action 1: max Q+ = 0, max Q- = -1
    CHECK(hq.at(0, 1, 1) == Catch::Approx(5.0 + 0.9 * 0.5 * (0.0 + -1.0)).margin(1e-12));

    QTableJoint zero = QTableJoint::zeros(g, 0);
    auto hz = expectile_pareto_apply(g, zero, 0.3);
    for (int a = 0; a < 2; ++a)
        for (int o = 0; o < 2; ++o)
            CHECK(hz.at(0, a, o) ==
                  Catch::Approx(g.reward[0][0][g.joint_index(0, a, o)]).margin(1e-12));
}

TEST_CASE("operators contract at modulus gamma", "[tabular]") {
    auto g = random_game(2, 7, 0.9);
    RngStream rng(8, "probe");
    CHECK(contraction_probe(g, literal_op(), 200, rng) <= 0.9 + 1e-12);
    CHECK(contraction_probe(g, jointmax_op(), 200, rng) <= 0.9 + 1e-12);
    for (double tau : {0.1, 0.5, 0.9}) {
        auto op = [tau](const FiniteGame& gg, const QTableJoint& q) {
            return expectile_pareto_apply(gg, q, tau);
        };
        CHECK(contraction_probe(g, op, 200, rng) <= 0.9 + 1e-12);
    }
    auto g0 = random_game(2, 9, 0.0);
    CHECK(contraction_probe(g0, literal_op(), 50, rng) == 0.0);
}

TEST_CASE("value iteration converges within the contraction-rate bound", "[tabular]") {
    auto g = team_game();
    double tol = 1e-6;
    auto res = iterate_to_fixed_point(g, jointmax_op(), tol, 10000);
    REQUIRE(res.converged);
    // ||Q*||_inf = 100; iterations bounded by log(tol (1-gamma) / 100)/log(gamma)
    int bound = static_cast<int>(std::ceil(std::log(tol * 0.1 / 100.0) / std::log(0.9))) + 5;
    CHECK(res.iterations <= bound);

    auto g0 = random_game(2, 10, 0.0);
    auto res0 = iterate_to_fixed_point(g0, literal_op(), 1e-12, 10);
    CHECK(res0.converged);
    CHECK(res0.iterations <= 2);
}

TEST_CASE("fixed point is unique across random initializations", "[tabular]") {
    auto g = random_game(2, 11, 0.9);
    double tol = 1e-10;
    // residual <= tol places the iterate within gamma/(1-gamma) * tol = 9 tol
    // of the fixed point; the reference is solved much tighter
    auto ref = iterate_to_fixed_point(g, literal_op(), tol * 1e-3, 1000000);
    REQUIRE(ref.converged);
    RngStream rng(12, "init");
    for (int trial = 0; trial < 10; ++trial) {
        QTableJoint q0 = QTableJoint::zeros(g, 0);
        for (auto& v : q0.q) v = rng.uniform(-50.0, 50.0);
        auto res = iterate_to_fixed_point(g, literal_op(), tol, 100000, 0, &q0);
        REQUIRE(res.converged);
        CHECK(ref.q.max_abs_diff(res.q) <= 10 * tol);
    }
}

TEST_CASE("single-entry updates with unit step write the sampled target", "[tabular]") {
    auto g = team_game(0.0);
    QTableJoint q = QTableJoint::zeros(g, 0);
    RngStream rng(13, "async");
    async_q_update(g, q, 0, 0, 0, 1.0, ParetoVariant::JointMax, rng);
    CHECK(q.at(0, 0, 0) == 10.0);
    async_q_update(g, q, 0, 1, 1, 1.0, ParetoVariant::JointMax, rng);
    CHECK(q.at(0, 1, 1) == 5.0);
    double before = q.at(0, 0, 1);
    async_q_update(g, q, 0, 0, 1, 0.0, ParetoVariant::JointMax, rng);
    CHECK(q.at(0, 0, 1) == before);
    CHECK_THROWS(async_q_update(g, q, 0, 5, 0, 0.5, ParetoVariant::JointMax, rng));
}

TEST_CASE("asynchronous updates converge to the operator fixed point", "[tabular]") {
    // alpha_k = k^-0.6 satisfies the usual step-size conditions; the harmonic
    // 1/k schedule is too slow to pass this tolerance in 1e5 visits
    auto g = team_game();
    auto fp = iterate_to_fixed_point(g, jointmax_op(), 1e-10, 100000);
    REQUIRE(fp.converged);
    QTableJoint q = QTableJoint::zeros(g, 0);
    std::vector<int> visits(4, 0);
    RngStream rng(14, "async");
    for (int v = 0; v < 100000; ++v) {
        int pair = v % 4;
        visits[pair]++;
        double alpha = std::pow(static_cast<double>(visits[pair]), -0.6);
        async_q_update(g, q, 0, pair / 2, pair % 2, alpha, ParetoVariant::JointMax, rng);
    }
    CHECK(fp.q.max_abs_diff(q) < 1e-2);
}

TEST_CASE("asynchronous updates track a stochastic two-state game", "[tabular]") {
    auto g = random_game(2, 15, 0.8);
    auto fp = iterate_to_fixed_point(g, literal_op(), 1e-10, 100000);
    REQUIRE(fp.converged);
    QTableJoint q = QTableJoint::zeros(g, 0);
    std::vector<int> visits(8, 0);
    RngStream rng(16, "async");
    for (int v = 0; v < 2000000; ++v) {
        int pair = v % 8;
        visits[pair]++;
        double alpha = std::pow(static_cast<double>(visits[pair]), -0.6);
        async_q_update(g, q, pair / 4, (pair / 2) % 2, pair % 2, alpha, ParetoVariant::Literal,
                       rng);
    }
    CHECK(fp.q.max_abs_diff(q) < 0.1);
}

TEST_CASE("optimistic and pessimistic operators select different equilibria", "[tabular]") {
    auto g = penalty_game();
    auto opt = iterate_to_fixed_point(g, jointmax_op(), 1e-9, 10000);
    REQUIRE(opt.converged);
    auto [ai, aj] = greedy_joint(opt.q);
    CHECK(ai == 0);
    CHECK(aj == 0); // the risky high-payoff equilibrium

    auto pess = iterate_to_fixed_point(
        g, [](const FiniteGame& gg, const QTableJoint& q) { return pessimistic_apply(gg, q); },
        1e-9, 10000);
    REQUIRE(pess.converged);
    CHECK(maximin_action(pess.q) == 2); // the safe equilibrium

    // the optimistic pick Pareto-dominates the safe one for both agents
    for (int agent = 0; agent < 2; ++agent)
        CHECK(g.reward[agent][0][g.joint_index(agent, 0, 0)] >
              g.reward[agent][0][g.joint_index(agent, 2, 2)]);
}

TEST_CASE("game definitions round-trip through the config format", "[tabular]") {
    auto g = penalty_game();
    auto j = g.to_json();
    auto g2 = FiniteGame::from_json(j);
    CHECK(g2.states == g.states);
    CHECK(g2.action_counts == g.action_counts);
    CHECK(g2.reward == g.reward);
    CHECK(g2.trans == g.trans);

    j["transitions"][0][0][0] = 0.5; // row no longer sums to 1
    CHECK_THROWS(FiniteGame::from_json(j));
}

TEST_CASE("shape mismatches are rejected", "[tabular]") {
    auto g = team_game();
    auto g3 = penalty_game();
    auto q3 = QTableJoint::zeros(g3, 0);
    CHECK_THROWS(pareto_apply(g, q3, ParetoVariant::Literal));
    RngStream rng(17, "probe");
    CHECK_THROWS(contraction_probe(g, literal_op(), 0, rng));
    CHECK_THROWS(iterate_to_fixed_point(g, literal_op(), 0.0, 10));
}
