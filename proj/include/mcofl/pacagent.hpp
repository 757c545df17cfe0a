#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcofl/envmdp.hpp"
#include "mcofl/neural.hpp"
#include "mcofl/tcad.hpp"

namespace mcofl {

// ---------------------------------------------------------------------------
// action heads
// ---------------------------------------------------------------------------

// The actor emits 4 independent ternary heads (n, f, B, q), 3 logits each.
constexpr int kActorHeads = 4;
constexpr int kHeadArity = 3;

template <typename Scalar>
std::array<std::array<Scalar, kHeadArity>, kActorHeads> head_probs(const VecX<Scalar>& logits) {
    if (logits.size() != kActorHeads * kHeadArity)
        throw std::invalid_argument("actor logits must have 12 entries");
    std::array<std::array<Scalar, kHeadArity>, kActorHeads> probs;
    for (int h = 0; h < kActorHeads; ++h) {
        Scalar mx = logits[h * kHeadArity];
        for (int k = 1; k < kHeadArity; ++k) mx = std::max(mx, logits[h * kHeadArity + k]);
        Scalar denom = 0;
        for (int k = 0; k < kHeadArity; ++k) {
            probs[h][k] = std::exp(logits[h * kHeadArity + k] - mx);
            denom += probs[h][k];
        }
        for (int k = 0; k < kHeadArity; ++k) probs[h][k] /= denom;
    }
    return probs;
}

template <typename Scalar>
Scalar joint_delta_prob(const std::array<std::array<Scalar, kHeadArity>, kActorHeads>& probs,
                        const TernaryDelta& d) {
    Scalar p = 1;
    for (int h = 0; h < kActorHeads; ++h) p *= probs[h][d.psi[h] + 1];
    return p;
}

enum class SelectMode { Sample, Greedy };

template <typename Scalar>
struct ActionChoice {
    TernaryDelta delta;
    Scalar log_prob = 0;
};

// Sample mode draws each head independently; greedy takes per-head argmax
// with ties resolved to the zero increment.
template <typename Scalar>
ActionChoice<Scalar> select_action(Mlp<Scalar>& actor, const VecX<Scalar>& obs_enc,
                                   RngStream& rng, SelectMode mode) {
    VecX<Scalar> logits = actor.forward(obs_enc);
    auto probs = head_probs(logits);
    ActionChoice<Scalar> out;
    for (int h = 0; h < kActorHeads; ++h) {
        int pick = 1;
        if (mode == SelectMode::Sample) {
            double u = rng.uniform();
            double acc = 0.0;
            pick = kHeadArity - 1;
            for (int k = 0; k < kHeadArity; ++k) {
                acc += static_cast<double>(probs[h][k]);
                if (u < acc) {
                    pick = k;
                    break;
                }
            }
        } else {
            Scalar best = probs[h][0];
            pick = 0;
            bool tie = false;
            for (int k = 1; k < kHeadArity; ++k) {
                if (probs[h][k] > best) {
                    best = probs[h][k];
                    pick = k;
                    tie = false;
                } else if (probs[h][k] == best) {
                    tie = true;
                }
            }
            if (tie) pick = 1; // zero delta on ties
        }
        out.delta.psi[h] = static_cast<std::int8_t>(pick - 1);
        out.log_prob += std::log(std::max(probs[h][pick], Scalar(1e-20)));
    }
    return out;
}

// ---------------------------------------------------------------------------
// replay
// ---------------------------------------------------------------------------

template <typename Scalar = float>
struct Transition {
    VecX<Scalar> obs_enc, next_obs_enc;
    Action own_base;  // action state before this round's increment
    Action own_abs;   // executed absolute action
    TernaryDelta delta;
    std::vector<Action> opp_prev; // opponents' actions entering the round
    std::vector<Action> opp_curr; // opponents' executed actions
    Scalar reward = 0;
    double accuracy = 0.0;
    bool terminal = false; // last round of the episode horizon
};

template <typename Scalar = float>
struct EpisodeBatch {
    std::vector<Transition<Scalar>> steps;
};

// Episode-granular FIFO buffer.
template <typename Scalar = float>
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

    void push(EpisodeBatch<Scalar> ep) {
        episodes_.push_back(std::move(ep));
        if (episodes_.size() > capacity_) episodes_.pop_front();
    }

    std::size_t size() const { return episodes_.size(); }

    // k distinct episodes, order of draw preserved
    std::vector<const EpisodeBatch<Scalar>*> sample(std::size_t k, RngStream& rng) const {
        k = std::min(k, episodes_.size());
        std::vector<std::size_t> idx(episodes_.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        for (std::size_t i = 0; i < k; ++i)
            std::swap(idx[i], idx[i + rng.uniform_int(idx.size() - i)]);
        std::vector<const EpisodeBatch<Scalar>*> out;
        for (std::size_t i = 0; i < k; ++i) out.push_back(&episodes_[idx[i]]);
        return out;
    }

private:
    std::size_t capacity_;
    std::deque<EpisodeBatch<Scalar>> episodes_;
};

// ---------------------------------------------------------------------------
// conjecture
// ---------------------------------------------------------------------------

struct ActionEncoder {
    double n_max = 5, f_max_hz = 3.5e9, b_max_hz = 30e6, q_max = 32;

    template <typename Scalar>
    void encode(const Action& a, Scalar* out) const {
        out[0] = static_cast<Scalar>(a.n / n_max);
        out[1] = static_cast<Scalar>(a.f_hz / f_max_hz);
        out[2] = static_cast<Scalar>(a.b_hz / b_max_hz);
        out[3] = static_cast<Scalar>(a.q / q_max);
    }

    template <typename Scalar>
    VecX<Scalar> encode_one(const Action& a) const {
        VecX<Scalar> v(4);
        encode(a, v.data());
        return v;
    }

    template <typename Scalar>
    VecX<Scalar> encode_many(std::span<const Action> as) const {
        VecX<Scalar> v(4 * static_cast<Eigen::Index>(as.size()));
        for (std::size_t j = 0; j < as.size(); ++j) encode(as[j], v.data() + 4 * j);
        return v;
    }
};

template <typename Scalar>
struct OppPick {
    std::vector<Action> actions; // chosen opponent joint action
    VecX<Scalar> opp_enc;        // its encoding (empty when no opponents are modeled)
    Scalar value = 0;            // value of the critic at the pick
    std::uint64_t evals = 0;     // critic evaluations spent
};

namespace detail {

// Batched scores of a feed-forward net over rows of pre-activations for the
// first layer; rows are consumed in place. Returns the column of outputs.
template <typename Scalar>
VecX<Scalar> finish_layers(const Mlp<Scalar>& net, MatX<Scalar>& h_first,
                           MatX<Scalar>& scratch) {
    h_first = h_first.cwiseMax(Scalar(0));
    MatX<Scalar>* cur = &h_first;
    MatX<Scalar>* nxt = &scratch;
    for (std::size_t l = 1; l + 1 < net.layer_count(); ++l) {
        nxt->noalias() = (*cur) * net.weights(l).transpose();
        nxt->rowwise() += net.biases(l).transpose();
        *nxt = nxt->cwiseMax(Scalar(0));
        std::swap(cur, nxt);
    }
    const std::size_t last = net.layer_count() - 1;
    VecX<Scalar> scores(cur->rows());
    scores.noalias() = (*cur) * net.weights(last).row(0).transpose();
    scores.array() += net.biases(last)[0];
    return scores;
}

} // namespace detail

// Exhaustive search over the opponents' joint ternary-increment space,
// applied to their current actions. The critic's first layer is split into
// (observation+own) and per-opponent column blocks so all candidates share
// the fixed part; the last opponent's 81 contributions are written as whole
// blocks and the remaining layers run as chunked matrix products. Ties go to
// the earliest candidate in enumeration order.
template <typename Scalar>
OppPick<Scalar> conjecture_bruteforce(const Mlp<Scalar>& critic, const VecX<Scalar>& obs_enc,
                                      const VecX<Scalar>& own_enc,
                                      std::span<const Action> opp_bases, const Granularity& g,
                                      const ActionBounds& bounds, const ActionEncoder& enc) {
    const int num_opp = static_cast<int>(opp_bases.size());
    if (num_opp < 1) throw std::invalid_argument("conjecture needs at least one opponent");
    const int prefix = static_cast<int>(obs_enc.size() + own_enc.size());
    if (critic.input_dim() != prefix + 4 * num_opp)
        throw std::invalid_argument("critic input dim does not match conjecture layout");

    const MatX<Scalar>& W1 = critic.weights(0);
    const int h1 = static_cast<int>(W1.rows());

    VecX<Scalar> fixed_in(prefix);
    fixed_in << obs_enc, own_enc;
    VecX<Scalar> z_base = W1.leftCols(prefix) * fixed_in + critic.biases(0);

    // candidate actions and first-layer contributions per opponent
    std::vector<std::array<Action, kDeltaCount>> cand(num_opp);
    std::vector<MatX<Scalar>> contrib(num_opp); // h1 x 81
    for (int j = 0; j < num_opp; ++j) {
        MatX<Scalar> encs(4, kDeltaCount);
        for (int d = 0; d < kDeltaCount; ++d) {
            cand[j][d] = apply_delta(opp_bases[j], delta_from_index(d), g, bounds);
            enc.encode(cand[j][d], encs.col(d).data());
        }
        contrib[j].noalias() = W1.middleCols(prefix + 4 * j, 4) * encs;
    }
    // the fastest-varying opponent's block, transposed once
    MatX<Scalar> last_block = contrib[num_opp - 1].transpose(); // 81 x h1

    // chunks sized to keep the widest intermediate in L2
    const std::uint64_t num_blocks = JointDeltaIter::count(num_opp) / kDeltaCount;
    const Eigen::Index chunk_blocks =
        static_cast<Eigen::Index>(std::min<std::uint64_t>(num_blocks, 16));
    MatX<Scalar> H1(chunk_blocks * kDeltaCount, h1), scratch;

    Scalar best = -std::numeric_limits<Scalar>::infinity();
    std::uint64_t best_joint = 0;
    std::vector<int> pdig(static_cast<std::size_t>(num_opp) - 1, 0);
    VecX<Scalar> psum(h1);

    std::uint64_t blk = 0;
    while (blk < num_blocks) {
        const auto nb = static_cast<Eigen::Index>(
            std::min<std::uint64_t>(chunk_blocks, num_blocks - blk));
        for (Eigen::Index ib = 0; ib < nb; ++ib) {
            psum = z_base;
            for (std::size_t j = 0; j < pdig.size(); ++j) psum += contrib[j].col(pdig[j]);
            H1.middleRows(ib * kDeltaCount, kDeltaCount) =
                last_block.rowwise() + psum.transpose();
            for (std::size_t j = pdig.size(); j-- > 0;) { // increment prefix digits
                if (++pdig[j] < kDeltaCount) break;
                pdig[j] = 0;
            }
        }
        VecX<Scalar> scores;
        if (nb == chunk_blocks) {
            scores = detail::finish_layers(critic, H1, scratch);
        } else {
            MatX<Scalar> h_rows = H1.topRows(nb * kDeltaCount);
            scores = detail::finish_layers(critic, h_rows, scratch);
        }
        for (Eigen::Index r = 0; r < scores.size(); ++r) {
            if (scores[r] > best) {
                best = scores[r];
                best_joint = blk * kDeltaCount + static_cast<std::uint64_t>(r);
            }
        }
        blk += static_cast<std::uint64_t>(nb);
    }

    OppPick<Scalar> pick;
    pick.value = best;
    pick.evals = JointDeltaIter::count(num_opp);
    pick.actions.resize(num_opp);
    std::uint64_t idx = best_joint;
    for (int j = num_opp - 1; j >= 0; --j) {
        pick.actions[j] = cand[j][idx % kDeltaCount];
        idx /= kDeltaCount;
    }
    pick.opp_enc = enc.encode_many<Scalar>(pick.actions);
    return pick;
}

// Batched critic scores where one 4-wide input segment sweeps a candidate
// set and the rest of the input is fixed.
template <typename Scalar>
VecX<Scalar> segment_sweep_scores(const Mlp<Scalar>& net, const VecX<Scalar>& input_with_zeros,
                                  int seg_offset, const MatX<Scalar>& seg_encodings) {
    const MatX<Scalar>& W1 = net.weights(0);
    VecX<Scalar> z_base = W1 * input_with_zeros + net.biases(0);
    MatX<Scalar> contrib =
        (W1.middleCols(seg_offset, seg_encodings.rows()) * seg_encodings).transpose();
    contrib.rowwise() += z_base.transpose();
    MatX<Scalar> scratch;
    return detail::finish_layers(net, contrib, scratch);
}

// Pluggable conjecture strategy: maps (value net, observation, own action,
// opponent current actions) to a chosen opponent joint action and value.
template <typename Scalar>
using Conjecturer =
    std::function<OppPick<Scalar>(const Mlp<Scalar>& net, const VecX<Scalar>& obs_enc,
                                  const VecX<Scalar>& own_enc, std::span<const Action> opp_bases)>;

// ---------------------------------------------------------------------------
// expectile loss
// ---------------------------------------------------------------------------

// mean(tau * delta_+^2 + (1-tau) * delta_-^2); the subgradient at 0 is 0.
template <typename Scalar>
Scalar expectile_loss(std::span<const Scalar> deltas, Scalar tau) {
    Scalar acc = 0;
    for (Scalar d : deltas) {
        Scalar dp = std::max(d, Scalar(0));
        Scalar dn = std::min(d, Scalar(0));
        acc += tau * dp * dp + (Scalar(1) - tau) * dn * dn;
    }
    return deltas.empty() ? Scalar(0) : acc / static_cast<Scalar>(deltas.size());
}

// d(sample loss)/d(delta)
template <typename Scalar>
Scalar expectile_grad(Scalar delta, Scalar tau) {
    Scalar dp = std::max(delta, Scalar(0));
    Scalar dn = std::min(delta, Scalar(0));
    return 2 * (tau * dp + (Scalar(1) - tau) * dn);
}

// ---------------------------------------------------------------------------
// the agent
// ---------------------------------------------------------------------------

// Paper-default topologies: actor trunk 64-128-64 with four ternary heads,
// critic 64-128 over (observation, own action, opponents' joint action).
template <typename Scalar = float>
struct PacAgent {
    int sp = 0;
    int num_opp_modeled = 0; // R-1 for conjecture-based variants, 0 otherwise
    Scalar tau = Scalar(0.5);
    Mlp<Scalar> actor;
    Mlp<Scalar> critic;
    Mlp<Scalar> critic_target;
    MlpOptimizer<Scalar> actor_opt, critic_opt;
    ReplayBuffer<Scalar> buffer;
    std::uint64_t conjecture_evals_total = 0;
    std::uint64_t last_conjecture_evals = 0;

    PacAgent(int sp_, int obs_dim, int num_opp, Scalar tau_, Scalar actor_lr, Scalar critic_lr,
             std::size_t buffer_capacity, RngStream& rng)
        : sp(sp_),
          num_opp_modeled(num_opp),
          tau(tau_),
          actor(std::vector<int>{obs_dim, 64, 128, 64, kActorHeads * kHeadArity}, rng),
          critic(std::vector<int>{obs_dim + 4 + 4 * num_opp, 64, 128, 1}, rng),
          critic_target(critic),
          actor_opt(OptMethod::Adam, actor_lr),
          critic_opt(OptMethod::Adam, critic_lr),
          buffer(buffer_capacity) {}

    Scalar critic_value(Mlp<Scalar>& net, const VecX<Scalar>& obs_enc, const VecX<Scalar>& own_enc,
                        const VecX<Scalar>& opp_enc) const {
        VecX<Scalar> in(obs_enc.size() + own_enc.size() + opp_enc.size());
        in << obs_enc, own_enc, opp_enc;
        return net.infer(in)[0];
    }
};

// Plain bootstrap for the no-conjecture baseline: the "pick" is the value of
// (observation, own action) alone.
template <typename Scalar>
Conjecturer<Scalar> no_conjecture() {
    return [](const Mlp<Scalar>& net, const VecX<Scalar>& obs_enc, const VecX<Scalar>& own_enc,
              std::span<const Action>) {
        OppPick<Scalar> pick;
        VecX<Scalar> in(obs_enc.size() + own_enc.size());
        in << obs_enc, own_enc;
        pick.value = net.infer(in)[0];
        pick.opp_enc = VecX<Scalar>(0);
        pick.evals = 1;
        return pick;
    };
}

template <typename Scalar>
Conjecturer<Scalar> brute_force_conjecturer(const Granularity& g, const ActionBounds& b,
                                            const ActionEncoder& enc) {
    return [g, b, enc](const Mlp<Scalar>& net, const VecX<Scalar>& obs_enc,
                       const VecX<Scalar>& own_enc, std::span<const Action> opp_bases) {
        return conjecture_bruteforce<Scalar>(net, obs_enc, own_enc, opp_bases, g, b, enc);
    };
}

struct UpdateStats {
    double critic_loss = 0.0;
    std::uint64_t conjecture_evals = 0;
};

// One expectile-regression critic step over a flattened episode batch. The
// bootstrap target conjectures the opponents' next joint action at o' with
// the online critic (the next own increment sampled from the actor) and
// evaluates the chosen joint action on the target network, which keeps the
// 81^(R-1)-way maximization from chasing the value net's own extrapolation
// noise. Horizon-terminal transitions do not bootstrap.
template <typename Scalar>
UpdateStats critic_update(PacAgent<Scalar>& ag, std::span<const Transition<Scalar>* const> batch,
                          const Conjecturer<Scalar>& conj, Scalar gamma, const Granularity& g,
                          const ActionBounds& bounds, const ActionEncoder& enc, Scalar polyak,
                          RngStream& rng) {
    if (batch.empty()) throw std::invalid_argument("critic_update: empty batch");
    auto grads = ag.critic.zero_grads();
    UpdateStats stats;
    std::vector<Scalar> tds;
    tds.reserve(batch.size());
    const Scalar inv_b = Scalar(1) / static_cast<Scalar>(batch.size());
    for (const Transition<Scalar>* tr : batch) {
        Scalar bootstrap = 0;
        if (!tr->terminal) {
            ActionChoice<Scalar> next_choice = select_action(ag.actor, tr->next_obs_enc, rng,
                                                             SelectMode::Sample);
            Action own_next = apply_delta(tr->own_abs, next_choice.delta, g, bounds);
            VecX<Scalar> own_next_enc = enc.encode_one<Scalar>(own_next);
            OppPick<Scalar> pick = conj(ag.critic, tr->next_obs_enc, own_next_enc,
                                        tr->opp_curr);
            stats.conjecture_evals += pick.evals;
            ag.last_conjecture_evals = pick.evals;
            bootstrap = ag.critic_value(ag.critic_target, tr->next_obs_enc, own_next_enc,
                                        pick.opp_enc);
        }
        Scalar y = tr->reward + gamma * bootstrap;

        VecX<Scalar> own_enc = enc.encode_one<Scalar>(tr->own_abs);
        VecX<Scalar> opp_enc = enc.encode_many<Scalar>(
            std::span<const Action>(tr->opp_curr.data(), std::min<std::size_t>(
                                                             tr->opp_curr.size(),
                                                             static_cast<std::size_t>(
                                                                 ag.num_opp_modeled))));
        VecX<Scalar> in(tr->obs_enc.size() + own_enc.size() + opp_enc.size());
        in << tr->obs_enc, own_enc, opp_enc;
        Scalar pred = ag.critic.forward(in)[0];
        Scalar td = y - pred;
        tds.push_back(td);
        VecX<Scalar> upstream(1);
        upstream[0] = -expectile_grad(td, ag.tau) * inv_b; // d loss / d pred
        ag.critic.backward_into(upstream, grads);
    }
    stats.critic_loss = static_cast<double>(expectile_loss<Scalar>(tds, ag.tau));
    ag.critic_opt.step(ag.critic, grads);
    polyak_update(ag.critic_target, ag.critic, polyak);
    ag.conjecture_evals_total += stats.conjecture_evals;
    return stats;
}

// Policy-gradient ascent with the exact expected-Q baseline over the 81 own
// increments, evaluated against the conjectured opponent joint action. A
// small entropy bonus keeps the factorized heads from collapsing before the
// critic is informative.
template <typename Scalar>
UpdateStats actor_update(PacAgent<Scalar>& ag, std::span<const Transition<Scalar>* const> batch,
                         const Conjecturer<Scalar>& conj, const Granularity& g,
                         const ActionBounds& bounds, const ActionEncoder& enc,
                         Scalar entropy_weight = Scalar(0)) {
    if (batch.empty()) throw std::invalid_argument("actor_update: empty batch");
    auto grads = ag.actor.zero_grads();
    UpdateStats stats;
    const Scalar inv_b = Scalar(1) / static_cast<Scalar>(batch.size());
    MatX<Scalar> own_cands(4, kDeltaCount);
    for (const Transition<Scalar>* tr : batch) {
        VecX<Scalar> own_enc = enc.encode_one<Scalar>(tr->own_abs);
        OppPick<Scalar> pick = conj(ag.critic, tr->obs_enc, own_enc, tr->opp_prev);
        stats.conjecture_evals += pick.evals;

        // expected-Q baseline over all own increments, opponents held at the
        // conjectured joint action
        for (int d = 0; d < kDeltaCount; ++d) {
            Action cand = apply_delta(tr->own_base, delta_from_index(d), g, bounds);
            enc.encode(cand, own_cands.col(d).data());
        }
        VecX<Scalar> tmpl =
            VecX<Scalar>::Zero(tr->obs_enc.size() + 4 + pick.opp_enc.size());
        tmpl.head(tr->obs_enc.size()) = tr->obs_enc;
        tmpl.tail(pick.opp_enc.size()) = pick.opp_enc;
        VecX<Scalar> qvals = segment_sweep_scores(ag.critic, tmpl,
                                                  static_cast<int>(tr->obs_enc.size()),
                                                  own_cands);
        VecX<Scalar> logits = ag.actor.forward(tr->obs_enc);
        auto probs = head_probs(logits);
        // advantage against the exact expected-Q baseline, in the form
        // sum_d pi_d (q_taken - q_d) so a constant critic cancels exactly
        Scalar q_taken = qvals[delta_to_index(tr->delta)];
        Scalar adv = 0;
        for (int d = 0; d < kDeltaCount; ++d)
            adv += joint_delta_prob(probs, delta_from_index(d)) * (q_taken - qvals[d]);

        VecX<Scalar> upstream(kActorHeads * kHeadArity);
        for (int h = 0; h < kActorHeads; ++h) {
            int chosen = tr->delta.psi[h] + 1;
            Scalar head_entropy = 0;
            for (int k = 0; k < kHeadArity; ++k)
                head_entropy -= probs[h][k] * std::log(std::max(probs[h][k], Scalar(1e-20)));
            for (int k = 0; k < kHeadArity; ++k) {
                Scalar onehot = (k == chosen) ? Scalar(1) : Scalar(0);
                // minimize -J - beta*H: policy-gradient term plus the
                // softmax entropy gradient
                Scalar logp = std::log(std::max(probs[h][k], Scalar(1e-20)));
                upstream[h * kHeadArity + k] =
                    ((probs[h][k] - onehot) * adv +
                     entropy_weight * probs[h][k] * (logp + head_entropy)) *
                    inv_b;
            }
        }
        ag.actor.backward_into(upstream, grads);
    }
    ag.actor_opt.step(ag.actor, grads);
    ag.conjecture_evals_total += stats.conjecture_evals;
    return stats;
}

// State-driven expectile adaptation: move toward tau_max while accuracy
// lags the threshold, back toward tau_min otherwise.
inline double adapt_tau(double tau, double accuracy, double threshold, double inc, double dec,
                        double tau_min, double tau_max) {
    if (accuracy < threshold) return std::min(tau_max, tau + inc);
    return std::max(tau_min, tau - dec);
}

} // namespace mcofl
