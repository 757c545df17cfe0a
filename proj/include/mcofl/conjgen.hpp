#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "mcofl/pacagent.hpp"

namespace mcofl {

// Per-opponent, per-dimension running frequency of observed increments; the
// moving-average target the generator's KL term anchors to.
class TargetPolicyEma {
public:
    TargetPolicyEma() = default;
    TargetPolicyEma(int num_opp, double decay, double floor = 1e-6)
        : decay_(decay), floor_(floor),
          probs_(static_cast<std::size_t>(num_opp) * kActorHeads,
                 {1.0 / kHeadArity, 1.0 / kHeadArity, 1.0 / kHeadArity}) {}

    int num_opp() const { return static_cast<int>(probs_.size()) / kActorHeads; }

    const std::array<double, kHeadArity>& head(int opp, int dim) const {
        return probs_[static_cast<std::size_t>(opp) * kActorHeads + dim];
    }

    void observe(int opp, int dim, int delta /* in {-1,0,1} */) {
        auto& p = probs_[static_cast<std::size_t>(opp) * kActorHeads + dim];
        for (int k = 0; k < kHeadArity; ++k)
            p[k] = decay_ * p[k] + (1.0 - decay_) * (k == delta + 1 ? 1.0 : 0.0);
        normalize(p);
    }

    // derive increments from an opponent's consecutive actions
    void observe_actions(int opp, const Action& prev, const Action& curr) {
        auto sgn = [](double d) { return d > 1e-12 ? 1 : (d < -1e-12 ? -1 : 0); };
        observe(opp, 0, sgn(static_cast<double>(curr.n - prev.n)));
        observe(opp, 1, sgn(curr.f_hz - prev.f_hz));
        observe(opp, 2, sgn(curr.b_hz - prev.b_hz));
        observe(opp, 3, sgn(static_cast<double>(curr.q - prev.q)));
    }

private:
    void normalize(std::array<double, kHeadArity>& p) {
        double s = 0.0;
        for (double& v : p) {
            v = std::max(v, floor_);
            s += v;
        }
        for (double& v : p) v /= s;
    }

    double decay_ = 0.99;
    double floor_ = 1e-6;
    std::vector<std::array<double, kHeadArity>> probs_;
};

// Factorized opponent-policy generator: maps (own action, own observation,
// opponents' public summary) to R-1 independent blocks of four ternary
// heads. Keeps conjecture cost at K samples instead of 81^(R-1).
template <typename Scalar = float>
struct Generator {
    int num_opp = 0;
    int obs_dim = 0;
    Mlp<Scalar> net;
    MlpOptimizer<Scalar> opt;
    TargetPolicyEma ema;

    Generator(int obs_dim_, int num_opp_, Scalar lr, double ema_decay, RngStream& rng)
        : num_opp(num_opp_),
          obs_dim(obs_dim_),
          net(std::vector<int>{4 + obs_dim_ + 3 * num_opp_, 64, 64,
                               num_opp_ * kActorHeads * kHeadArity},
              rng),
          opt(OptMethod::Adam, lr),
          ema(num_opp_, ema_decay) {}

    // operator-published opponent summary: (n, q, B) triples, normalized
    VecX<Scalar> encode_summary(std::span<const Action> opps, const ActionEncoder& enc) const {
        VecX<Scalar> h(3 * static_cast<Eigen::Index>(opps.size()));
        for (std::size_t j = 0; j < opps.size(); ++j) {
            h[3 * j + 0] = static_cast<Scalar>(opps[j].n / enc.n_max);
            h[3 * j + 1] = static_cast<Scalar>(opps[j].q / enc.q_max);
            h[3 * j + 2] = static_cast<Scalar>(opps[j].b_hz / enc.b_max_hz);
        }
        return h;
    }

    VecX<Scalar> input(const VecX<Scalar>& own_enc, const VecX<Scalar>& obs_enc,
                       const VecX<Scalar>& summary) const {
        VecX<Scalar> in(own_enc.size() + obs_enc.size() + summary.size());
        in << own_enc, obs_enc, summary;
        return in;
    }
};

enum class GenMode { Sample, Argmax };

template <typename Scalar>
struct GenOutput {
    std::vector<std::array<std::array<Scalar, kHeadArity>, kActorHeads>> probs; // per opponent
    std::vector<TernaryDelta> deltas;                                           // per opponent
};

// Factorized distribution over the opponents' joint increments, with one
// sampled or argmax joint realization.
template <typename Scalar>
GenOutput<Scalar> generate(Generator<Scalar>& gen, const VecX<Scalar>& own_enc,
                           const VecX<Scalar>& obs_enc, const VecX<Scalar>& summary,
                           GenMode mode, RngStream& rng) {
    VecX<Scalar> logits = gen.net.infer(gen.input(own_enc, obs_enc, summary));
    GenOutput<Scalar> out;
    out.probs.resize(gen.num_opp);
    out.deltas.resize(gen.num_opp);
    for (int j = 0; j < gen.num_opp; ++j) {
        VecX<Scalar> block = logits.segment(j * kActorHeads * kHeadArity,
                                            kActorHeads * kHeadArity);
        out.probs[j] = head_probs(block);
        for (int h = 0; h < kActorHeads; ++h) {
            int pick;
            if (mode == GenMode::Sample) {
                double u = rng.uniform();
                double acc = 0.0;
                pick = kHeadArity - 1;
                for (int k = 0; k < kHeadArity; ++k) {
                    acc += static_cast<double>(out.probs[j][h][k]);
                    if (u < acc) {
                        pick = k;
                        break;
                    }
                }
            } else {
                pick = 0;
                Scalar best = out.probs[j][h][0];
                for (int k = 1; k < kHeadArity; ++k)
                    if (out.probs[j][h][k] > best) {
                        best = out.probs[j][h][k];
                        pick = k;
                    }
            }
            out.deltas[j].psi[h] = static_cast<std::int8_t>(pick - 1);
        }
    }
    return out;
}

// Conjecture via the generator: draw K joint candidates, score them on the
// given value network, keep the best. K evaluations per call.
template <typename Scalar>
Conjecturer<Scalar> generator_conjecturer(Generator<Scalar>& gen, int k_samples,
                                          const Granularity& g, const ActionBounds& bounds,
                                          const ActionEncoder& enc, RngStream& rng) {
    return [&gen, k_samples, g, bounds, enc, &rng](
               const Mlp<Scalar>& net, const VecX<Scalar>& obs_enc, const VecX<Scalar>& own_enc,
               std::span<const Action> opp_bases) {
        VecX<Scalar> summary = gen.encode_summary(opp_bases, enc);
        OppPick<Scalar> best;
        best.value = -std::numeric_limits<Scalar>::infinity();
        for (int k = 0; k < k_samples; ++k) {
            GenOutput<Scalar> draw = generate(gen, own_enc, obs_enc, summary, GenMode::Sample, rng);
            std::vector<Action> actions(opp_bases.size());
            for (std::size_t j = 0; j < opp_bases.size(); ++j)
                actions[j] = apply_delta(opp_bases[j], draw.deltas[j], g, bounds);
            VecX<Scalar> opp_enc = enc.encode_many<Scalar>(actions);
            VecX<Scalar> in(obs_enc.size() + own_enc.size() + opp_enc.size());
            in << obs_enc, own_enc, opp_enc;
            Scalar v = net.infer(in)[0];
            if (v > best.value) {
                best.value = v;
                best.actions = std::move(actions);
                best.opp_enc = std::move(opp_enc);
            }
        }
        best.evals = static_cast<std::uint64_t>(k_samples);
        return best;
    };
}

// Compound generator objective on one input: K-sample score-function estimate
// of E[-Q] plus chi-weighted closed-form KL against the EMA target.
// Returns the loss value; accumulates d(loss)/d(logits) into `upstream`.
template <typename Scalar>
Scalar generator_loss_grad(Generator<Scalar>& gen, const Mlp<Scalar>& critic,
                           const VecX<Scalar>& obs_enc, const VecX<Scalar>& own_enc,
                           std::span<const Action> opp_bases, Scalar chi, int k_samples,
                           const Granularity& g, const ActionBounds& bounds,
                           const ActionEncoder& enc, RngStream& rng, VecX<Scalar>& logits_out,
                           VecX<Scalar>& upstream) {
    VecX<Scalar> summary = gen.encode_summary(opp_bases, enc);
    VecX<Scalar> in = gen.input(own_enc, obs_enc, summary);
    logits_out = gen.net.forward(in);

    std::vector<std::array<std::array<Scalar, kHeadArity>, kActorHeads>> probs(gen.num_opp);
    for (int j = 0; j < gen.num_opp; ++j)
        probs[j] = head_probs<Scalar>(
            logits_out.segment(j * kActorHeads * kHeadArity, kActorHeads * kHeadArity).eval());

    // draw K joint samples and score them
    std::vector<std::vector<int>> picks(k_samples,
                                        std::vector<int>(gen.num_opp * kActorHeads, 1));
    std::vector<Scalar> qs(k_samples);
    for (int s = 0; s < k_samples; ++s) {
        std::vector<Action> actions(opp_bases.size());
        for (int j = 0; j < gen.num_opp; ++j) {
            TernaryDelta d;
            for (int h = 0; h < kActorHeads; ++h) {
                double u = rng.uniform();
                double acc = 0.0;
                int pick = kHeadArity - 1;
                for (int k = 0; k < kHeadArity; ++k) {
                    acc += static_cast<double>(probs[j][h][k]);
                    if (u < acc) {
                        pick = k;
                        break;
                    }
                }
                picks[s][j * kActorHeads + h] = pick;
                d.psi[h] = static_cast<std::int8_t>(pick - 1);
            }
            actions[j] = apply_delta(opp_bases[j], d, g, bounds);
        }
        VecX<Scalar> opp_enc = enc.encode_many<Scalar>(actions);
        VecX<Scalar> cin(obs_enc.size() + own_enc.size() + opp_enc.size());
        cin << obs_enc, own_enc, opp_enc;
        qs[s] = critic.infer(cin)[0];
    }
    Scalar qmean = 0;
    for (Scalar q : qs) qmean += q;
    qmean /= static_cast<Scalar>(k_samples);

    upstream = VecX<Scalar>::Zero(logits_out.size());
    const Scalar inv_k = Scalar(1) / static_cast<Scalar>(k_samples);
    for (int s = 0; s < k_samples; ++s) {
        Scalar weight = -(qs[s] - qmean); // score-function term for E[-Q], mean baseline
        for (int j = 0; j < gen.num_opp; ++j)
            for (int h = 0; h < kActorHeads; ++h) {
                int chosen = picks[s][j * kActorHeads + h];
                for (int k = 0; k < kHeadArity; ++k) {
                    Scalar onehot = (k == chosen) ? Scalar(1) : Scalar(0);
                    upstream[(j * kActorHeads + h) * kHeadArity + k] +=
                        weight * (onehot - probs[j][h][k]) * inv_k;
                }
            }
    }

    // closed-form KL(pi_tilde || target) per head and its softmax gradient
    Scalar kl_total = 0;
    for (int j = 0; j < gen.num_opp; ++j)
        for (int h = 0; h < kActorHeads; ++h) {
            const auto& tar = gen.ema.head(j, h);
            Scalar kl = 0;
            std::array<Scalar, kHeadArity> logratio;
            for (int k = 0; k < kHeadArity; ++k) {
                Scalar p = std::max(probs[j][h][k], Scalar(1e-12));
                logratio[k] = std::log(p) - static_cast<Scalar>(std::log(tar[k]));
                kl += p * logratio[k];
            }
            kl_total += kl;
            for (int k = 0; k < kHeadArity; ++k)
                upstream[(j * kActorHeads + h) * kHeadArity + k] +=
                    chi * probs[j][h][k] * (logratio[k] - kl);
        }

    return -qmean + chi * kl_total;
}

// One Adam step of the compound loss over a transition batch.
template <typename Scalar>
double generator_update(Generator<Scalar>& gen, const Mlp<Scalar>& critic,
                        std::span<const Transition<Scalar>* const> batch, Scalar chi,
                        int k_samples, const Granularity& g, const ActionBounds& bounds,
                        const ActionEncoder& enc, RngStream& rng) {
    if (batch.empty()) throw std::invalid_argument("generator_update: empty batch");
    auto grads = gen.net.zero_grads();
    double loss = 0.0;
    const Scalar inv_b = Scalar(1) / static_cast<Scalar>(batch.size());
    VecX<Scalar> logits, upstream;
    for (const Transition<Scalar>* tr : batch) {
        VecX<Scalar> own_enc = enc.encode_one<Scalar>(tr->own_abs);
        loss += static_cast<double>(generator_loss_grad(
            gen, critic, tr->obs_enc, own_enc,
            std::span<const Action>(tr->opp_prev.data(), tr->opp_prev.size()), chi, k_samples, g,
            bounds, enc, rng, logits, upstream));
        upstream *= inv_b;
        gen.net.backward_into(upstream, grads);
    }
    gen.opt.step(gen.net, grads);
    return loss / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------------
// approximation-error bound
// ---------------------------------------------------------------------------

struct BoundCheck {
    double lhs = 0.0; // |E_pi_tilde[Q] - max Q|
    double rhs = 0.0; // C * sqrt(KL(pi_tilde || pi_dagger))
    bool holds = false;
};

// Softened argmax distribution used as the comparison policy; temperature is
// relative to the value range so the construction is scale-free.
inline std::vector<double> softened_argmax(std::span<const double> q, double rel_temperature) {
    double qmax = *std::max_element(q.begin(), q.end());
    double qmin = *std::min_element(q.begin(), q.end());
    double temp = std::max(rel_temperature * (qmax - qmin), 1e-300);
    std::vector<double> p(q.size());
    double denom = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        p[i] = std::exp((q[i] - qmax) / temp);
        denom += p[i];
    }
    for (auto& v : p) v /= denom;
    return p;
}

// Checks |E_{pi_tilde}[Q] - max Q| <= C * sqrt(KL(pi_tilde || pi_dagger)).
// pi_dagger must be strictly positive wherever pi_tilde has mass.
inline BoundCheck kl_bound_check(std::span<const double> q, std::span<const double> pi_tilde,
                                 std::span<const double> pi_dagger, double c_lipschitz) {
    if (q.size() != pi_tilde.size() || q.size() != pi_dagger.size())
        throw std::invalid_argument("kl_bound_check: size mismatch");
    double expect = 0.0, qmax = q[0];
    for (std::size_t i = 0; i < q.size(); ++i) {
        expect += pi_tilde[i] * q[i];
        qmax = std::max(qmax, q[i]);
    }
    double kl = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        if (pi_tilde[i] <= 0.0) continue;
        if (pi_dagger[i] <= 0.0)
            throw std::invalid_argument("kl_bound_check: zero-probability support mismatch");
        kl += pi_tilde[i] * (std::log(pi_tilde[i]) - std::log(pi_dagger[i]));
    }
    kl = std::max(kl, 0.0);
    BoundCheck out;
    out.lhs = std::abs(expect - qmax);
    out.rhs = c_lipschitz * std::sqrt(kl);
    out.holds = out.lhs <= out.rhs;
    return out;
}

} // namespace mcofl
