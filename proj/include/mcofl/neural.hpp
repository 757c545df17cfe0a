#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mcofl/rng.hpp"

namespace mcofl {

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Fully connected network with rectified-linear hidden units and a linear
// output layer. forward() caches layer inputs so backward() can produce
// exact reverse-mode gradients; heads (softmax, expectile losses) live with
// their owners and feed gradients in through `upstream`.
template <typename Scalar = float>
class Mlp {
public:
    struct Grads {
        std::vector<MatX<Scalar>> dW;
        std::vector<VecX<Scalar>> db;
        VecX<Scalar> dx;

        Grads& operator+=(const Grads& o) {
            for (std::size_t l = 0; l < dW.size(); ++l) {
                dW[l] += o.dW[l];
                db[l] += o.db[l];
            }
            return *this;
        }
        void scale(Scalar s) {
            for (auto& m : dW) m *= s;
            for (auto& v : db) v *= s;
        }
    };

    Mlp() = default;

    Mlp(std::vector<int> sizes, RngStream& rng) : sizes_(std::move(sizes)) {
        if (sizes_.size() < 2) throw std::invalid_argument("Mlp needs at least two layer sizes");
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            int in = sizes_[l], out = sizes_[l + 1];
            MatX<Scalar> w(out, in);
            double bound = std::sqrt(6.0 / (in + out));
            for (int i = 0; i < out; ++i)
                for (int j = 0; j < in; ++j)
                    w(i, j) = static_cast<Scalar>(rng.uniform(-bound, bound));
            W_.push_back(std::move(w));
            b_.push_back(VecX<Scalar>::Zero(out));
        }
    }

    const std::vector<int>& sizes() const { return sizes_; }
    int input_dim() const { return sizes_.front(); }
    int output_dim() const { return sizes_.back(); }
    std::size_t layer_count() const { return W_.size(); }
    MatX<Scalar>& weights(std::size_t l) { return W_[l]; }
    VecX<Scalar>& biases(std::size_t l) { return b_[l]; }
    const MatX<Scalar>& weights(std::size_t l) const { return W_[l]; }
    const VecX<Scalar>& biases(std::size_t l) const { return b_[l]; }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < W_.size(); ++l) n += W_[l].size() + b_[l].size();
        return n;
    }

    VecX<Scalar> forward(const VecX<Scalar>& x) {
        if (x.size() != sizes_.front())
            throw std::invalid_argument("Mlp input size mismatch");
        acts_.assign(1, x);
        VecX<Scalar> h = x;
        for (std::size_t l = 0; l < W_.size(); ++l) {
            h = (W_[l] * h + b_[l]).eval();
            if (l + 1 < W_.size()) h = h.cwiseMax(Scalar(0));
            acts_.push_back(h);
        }
        has_cache_ = true;
        return h;
    }

    // Inference without touching the cache; safe for concurrent readers.
    VecX<Scalar> infer(const VecX<Scalar>& x) const {
        if (x.size() != sizes_.front())
            throw std::invalid_argument("Mlp input size mismatch");
        VecX<Scalar> h = x;
        for (std::size_t l = 0; l < W_.size(); ++l) {
            h = (W_[l] * h + b_[l]).eval();
            if (l + 1 < W_.size()) h = h.cwiseMax(Scalar(0));
        }
        return h;
    }

    Grads backward(const VecX<Scalar>& upstream) const {
        Grads g;
        g.dW.resize(W_.size());
        g.db.resize(W_.size());
        for (std::size_t l = 0; l < W_.size(); ++l) {
            g.dW[l] = MatX<Scalar>::Zero(W_[l].rows(), W_[l].cols());
            g.db[l] = VecX<Scalar>::Zero(b_[l].size());
        }
        g.dx = backward_into(upstream, g);
        return g;
    }

    // Accumulates parameter gradients into `g`; returns the input gradient.
    VecX<Scalar> backward_into(const VecX<Scalar>& upstream, Grads& g) const {
        if (!has_cache_) throw std::logic_error("backward without cached forward");
        if (upstream.size() != sizes_.back())
            throw std::invalid_argument("upstream gradient size mismatch");
        VecX<Scalar> delta = upstream;
        for (std::size_t l = W_.size(); l-- > 0;) {
            if (l + 1 < W_.size()) {
                // post-activation of layer l is acts_[l+1]; ReLU gate
                delta = (acts_[l + 1].array() > Scalar(0))
                            .select(delta, VecX<Scalar>::Zero(delta.size()));
            }
            g.dW[l].noalias() += delta * acts_[l].transpose();
            g.db[l] += delta;
            delta = (W_[l].transpose() * delta).eval();
        }
        return delta;
    }

    Grads zero_grads() const {
        Grads g;
        for (std::size_t l = 0; l < W_.size(); ++l) {
            g.dW.push_back(MatX<Scalar>::Zero(W_[l].rows(), W_[l].cols()));
            g.db.push_back(VecX<Scalar>::Zero(b_[l].size()));
        }
        g.dx = VecX<Scalar>::Zero(sizes_.front());
        return g;
    }

    VecX<double> flatten() const {
        VecX<double> out(param_count());
        Eigen::Index k = 0;
        for (std::size_t l = 0; l < W_.size(); ++l) {
            for (Eigen::Index j = 0; j < W_[l].cols(); ++j)
                for (Eigen::Index i = 0; i < W_[l].rows(); ++i)
                    out[k++] = static_cast<double>(W_[l](i, j));
            for (Eigen::Index i = 0; i < b_[l].size(); ++i)
                out[k++] = static_cast<double>(b_[l][i]);
        }
        return out;
    }

    void set_from_flat(const VecX<double>& flat) {
        if (static_cast<std::size_t>(flat.size()) != param_count())
            throw std::invalid_argument("flat parameter size mismatch");
        Eigen::Index k = 0;
        for (std::size_t l = 0; l < W_.size(); ++l) {
            for (Eigen::Index j = 0; j < W_[l].cols(); ++j)
                for (Eigen::Index i = 0; i < W_[l].rows(); ++i)
                    W_[l](i, j) = static_cast<Scalar>(flat[k++]);
            for (Eigen::Index i = 0; i < b_[l].size(); ++i)
                b_[l][i] = static_cast<Scalar>(flat[k++]);
        }
    }

    void save(std::ostream& os) const {
        os << "mcofl-mlp 1\n" << sizes_.size();
        for (int s : sizes_) os << ' ' << s;
        os << '\n' << std::setprecision(17);
        VecX<double> flat = flatten();
        for (Eigen::Index i = 0; i < flat.size(); ++i) os << flat[i] << '\n';
    }

    void save_file(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw std::runtime_error("cannot open " + path);
        save(os);
    }

    static Mlp load(std::istream& is) {
        std::string magic;
        int version = 0;
        is >> magic >> version;
        if (magic != "mcofl-mlp" || version != 1)
            throw std::runtime_error("bad network file header");
        std::size_t n;
        is >> n;
        Mlp m;
        m.sizes_.resize(n);
        for (auto& s : m.sizes_) is >> s;
        for (std::size_t l = 0; l + 1 < n; ++l) {
            m.W_.push_back(MatX<Scalar>::Zero(m.sizes_[l + 1], m.sizes_[l]));
            m.b_.push_back(VecX<Scalar>::Zero(m.sizes_[l + 1]));
        }
        VecX<double> flat(m.param_count());
        for (Eigen::Index i = 0; i < flat.size(); ++i)
            if (!(is >> flat[i])) throw std::runtime_error("truncated network file");
        m.set_from_flat(flat);
        return m;
    }

    static Mlp load_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw std::runtime_error("cannot open " + path);
        return load(is);
    }

private:
    std::vector<int> sizes_;
    std::vector<MatX<Scalar>> W_;
    std::vector<VecX<Scalar>> b_;
    std::vector<VecX<Scalar>> acts_;
    bool has_cache_ = false;
};

enum class OptMethod { Sgd, Adam };

// Flat-vector optimizer state; Adam with the usual defaults.
template <typename Scalar = float>
struct OptimizerState {
    Scalar beta1 = Scalar(0.9), beta2 = Scalar(0.999), eps = Scalar(1e-8);
    std::int64_t t = 0;
    VecX<Scalar> m, v;

    void ensure(Eigen::Index n) {
        if (m.size() != n) {
            m = VecX<Scalar>::Zero(n);
            v = VecX<Scalar>::Zero(n);
        }
    }
};

template <typename Scalar>
void optimizer_step(VecX<Scalar>& params, const VecX<Scalar>& grads, OptMethod method,
                    Scalar rate, OptimizerState<Scalar>& st) {
    if (params.size() != grads.size())
        throw std::invalid_argument("parameter/gradient shape mismatch");
    if (method == OptMethod::Sgd) {
        params -= rate * grads;
        return;
    }
    st.ensure(params.size());
    st.t += 1;
    st.m = st.beta1 * st.m + (Scalar(1) - st.beta1) * grads;
    st.v = st.beta2 * st.v + (Scalar(1) - st.beta2) * grads.cwiseProduct(grads);
    Scalar c1 = Scalar(1) - std::pow(st.beta1, Scalar(st.t));
    Scalar c2 = Scalar(1) - std::pow(st.beta2, Scalar(st.t));
    VecX<Scalar> mhat = st.m / c1;
    VecX<Scalar> vhat = st.v / c2;
    params.array() -= rate * mhat.array() / (vhat.array().sqrt() + st.eps);
}

// Structured optimizer over an Mlp's layers, same update rule as above.
template <typename Scalar = float>
class MlpOptimizer {
public:
    MlpOptimizer() = default;
    explicit MlpOptimizer(OptMethod method, Scalar rate) : method_(method), rate_(rate) {}

    void step(Mlp<Scalar>& net, const typename Mlp<Scalar>::Grads& g) {
        if (method_ == OptMethod::Sgd) {
            for (std::size_t l = 0; l < net.layer_count(); ++l) {
                net.weights(l) -= rate_ * g.dW[l];
                net.biases(l) -= rate_ * g.db[l];
            }
            return;
        }
        if (mW_.empty()) {
            for (std::size_t l = 0; l < net.layer_count(); ++l) {
                mW_.push_back(MatX<Scalar>::Zero(net.weights(l).rows(), net.weights(l).cols()));
                vW_.push_back(MatX<Scalar>::Zero(net.weights(l).rows(), net.weights(l).cols()));
                mB_.push_back(VecX<Scalar>::Zero(net.biases(l).size()));
                vB_.push_back(VecX<Scalar>::Zero(net.biases(l).size()));
            }
        }
        t_ += 1;
        Scalar c1 = Scalar(1) - std::pow(beta1_, Scalar(t_));
        Scalar c2 = Scalar(1) - std::pow(beta2_, Scalar(t_));
        for (std::size_t l = 0; l < net.layer_count(); ++l) {
            mW_[l] = beta1_ * mW_[l] + (Scalar(1) - beta1_) * g.dW[l];
            vW_[l] = beta2_ * vW_[l] + (Scalar(1) - beta2_) * g.dW[l].cwiseProduct(g.dW[l]);
            mB_[l] = beta1_ * mB_[l] + (Scalar(1) - beta1_) * g.db[l];
            vB_[l] = beta2_ * vB_[l] + (Scalar(1) - beta2_) * g.db[l].cwiseProduct(g.db[l]);
            net.weights(l).array() -=
                rate_ * (mW_[l] / c1).array() / ((vW_[l] / c2).array().sqrt() + eps_);
            net.biases(l).array() -=
                rate_ * (mB_[l] / c1).array() / ((vB_[l] / c2).array().sqrt() + eps_);
        }
    }

    OptMethod method() const { return method_; }
    Scalar rate() const { return rate_; }
    void set_rate(Scalar r) { rate_ = r; }

private:
    OptMethod method_ = OptMethod::Adam;
    Scalar rate_ = Scalar(1e-3);
    Scalar beta1_ = Scalar(0.9), beta2_ = Scalar(0.999), eps_ = Scalar(1e-8);
    std::int64_t t_ = 0;
    std::vector<MatX<Scalar>> mW_, vW_;
    std::vector<VecX<Scalar>> mB_, vB_;
};

// Polyak averaging for target networks: target <- rho*target + (1-rho)*online.
template <typename Scalar>
void polyak_update(Mlp<Scalar>& target, const Mlp<Scalar>& online, Scalar rho) {
    for (std::size_t l = 0; l < target.layer_count(); ++l) {
        target.weights(l) = rho * target.weights(l) + (Scalar(1) - rho) * online.weights(l);
        target.biases(l) = rho * target.biases(l) + (Scalar(1) - rho) * online.biases(l);
    }
}

} // namespace mcofl
