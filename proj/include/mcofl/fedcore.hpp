#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcofl/config.hpp"
#include "mcofl/quantizer.hpp"
#include "mcofl/rng.hpp"

namespace mcofl {

// Gaussian-blob classification task. Train and test sets come from disjoint
// sub-streams of the task seed. Class sample counts are balanced.
struct SyntheticTask {
    int classes = 0;
    int features = 0;
    int difficulty = 0;
    std::vector<double> train_x; // row-major, train_n x features
    std::vector<int> train_y;
    std::vector<double> test_x;
    std::vector<int> test_y;

    int train_n() const { return static_cast<int>(train_y.size()); }
    int test_n() const { return static_cast<int>(test_y.size()); }
    const double* train_row(int i) const { return &train_x[static_cast<std::size_t>(i) * features]; }
    const double* test_row(int i) const { return &test_x[static_cast<std::size_t>(i) * features]; }
};

namespace detail {
inline void fill_split(std::vector<double>& xs, std::vector<int>& ys,
                       const std::vector<double>& centers, int n, int classes, int features,
                       RngStream& rng) {
    xs.resize(static_cast<std::size_t>(n) * features);
    ys.resize(n);
    for (int i = 0; i < n; ++i) {
        int y = i % classes; // balanced counts
        ys[i] = y;
        for (int f = 0; f < features; ++f)
            xs[static_cast<std::size_t>(i) * features + f] =
                centers[static_cast<std::size_t>(y) * features + f] + rng.gaussian();
    }
}
} // namespace detail

inline SyntheticTask make_task(const TaskSpec& spec, std::uint64_t seed, int service) {
    SyntheticTask t;
    t.classes = spec.classes;
    t.features = spec.features;
    t.difficulty = spec.difficulty;
    std::string tag = "task" + std::to_string(service);
    RngStream center_rng(seed, tag + "/centers");
    std::vector<double> centers(static_cast<std::size_t>(spec.classes) * spec.features);
    for (auto& c : centers) c = spec.separation * center_rng.gaussian();
    RngStream train_rng(seed, tag + "/train");
    RngStream test_rng(seed, tag + "/test");
    detail::fill_split(t.train_x, t.train_y, centers, spec.train_size, spec.classes,
                       spec.features, train_rng);
    detail::fill_split(t.test_x, t.test_y, centers, spec.test_size, spec.classes, spec.features,
                       test_rng);
    return t;
}

// Multinomial logistic regression parameters, flattened as
// [W(0,:), W(1,:), ..., b] with W row per class.
struct GlobalModel {
    std::vector<double> params;
    int service = 0;
    int classes = 0;
    int features = 0;

    int dim() const { return classes * (features + 1); }
    static GlobalModel zeros(const SyntheticTask& t, int service) {
        GlobalModel m;
        m.service = service;
        m.classes = t.classes;
        m.features = t.features;
        m.params.assign(static_cast<std::size_t>(m.dim()), 0.0);
        return m;
    }
    double weight(int c, int f) const { return params[static_cast<std::size_t>(c) * features + f]; }
    double bias(int c) const {
        return params[static_cast<std::size_t>(classes) * features + c];
    }
};

struct ClientShard {
    int client = 0;
    int service = 0;
    std::vector<int> sample_idx; // indices into the task's train split
    double weight = 0.0;         // kappa, proportional to shard size
};

// Label-skew partitioning: each client covers exactly
// max(1, round(rho * classes)) label categories; samples of each class are
// dealt round-robin among the clients covering it.
inline std::vector<ClientShard> partition(const SyntheticTask& task, int num_clients, double rho,
                                          int service, RngStream& rng) {
    if (num_clients < 1) throw std::invalid_argument("partition needs at least one client");
    if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("rho outside (0, 1]");
    int per_client = std::max(1, static_cast<int>(std::lround(rho * task.classes)));
    per_client = std::min(per_client, task.classes);

    std::vector<std::vector<int>> class_members(task.classes);
    for (int i = 0; i < task.train_n(); ++i) class_members[task.train_y[i]].push_back(i);
    for (auto& v : class_members) { // shuffle within class for varied deals
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[rng.uniform_int(i)]);
    }

    // spread class coverage: client i takes classes {i*stride + j mod C}
    int stride = std::max(1, task.classes / num_clients);
    std::vector<std::vector<int>> client_classes(num_clients);
    std::vector<std::vector<int>> class_clients(task.classes);
    for (int i = 0; i < num_clients; ++i)
        for (int j = 0; j < per_client; ++j) {
            int c = (i * stride + j) % task.classes;
            client_classes[i].push_back(c);
            class_clients[c].push_back(i);
        }

    std::vector<ClientShard> shards(num_clients);
    for (int i = 0; i < num_clients; ++i) {
        shards[i].client = i;
        shards[i].service = service;
    }
    for (int c = 0; c < task.classes; ++c) {
        const auto& owners = class_clients[c];
        if (owners.empty()) continue; // class not covered at this rho/N
        for (std::size_t k = 0; k < class_members[c].size(); ++k)
            shards[owners[k % owners.size()]].sample_idx.push_back(class_members[c][k]);
    }
    double total = 0.0;
    for (auto& s : shards) total += static_cast<double>(s.sample_idx.size());
    if (total == 0.0) throw std::runtime_error("partition produced empty shards");
    for (auto& s : shards) s.weight = static_cast<double>(s.sample_idx.size()) / total;
    return shards;
}

namespace detail {
// softmax cross-entropy gradient accumulation for one sample
inline void accumulate_sample_grad(const GlobalModel& m, const double* x, int y,
                                   std::vector<double>& probs, std::vector<double>& grad) {
    const int C = m.classes, F = m.features;
    double maxlogit = -1e300;
    for (int c = 0; c < C; ++c) {
        double z = m.bias(c);
        const double* w = &m.params[static_cast<std::size_t>(c) * F];
        for (int f = 0; f < F; ++f) z += w[f] * x[f];
        probs[c] = z;
        maxlogit = std::max(maxlogit, z);
    }
    double denom = 0.0;
    for (int c = 0; c < C; ++c) {
        probs[c] = std::exp(probs[c] - maxlogit);
        denom += probs[c];
    }
    for (int c = 0; c < C; ++c) {
        double g = probs[c] / denom - (c == y ? 1.0 : 0.0);
        double* gw = &grad[static_cast<std::size_t>(c) * F];
        for (int f = 0; f < F; ++f) gw[f] += g * x[f];
        grad[static_cast<std::size_t>(C) * F + c] += g;
    }
}
} // namespace detail

// iota steps of mini-batch SGD on the shard's cross-entropy loss, starting
// from the distributed global model. Returns the updated parameter vector.
inline std::vector<double> local_update(const GlobalModel& model, const SyntheticTask& task,
                                        const ClientShard& shard, double eta, int steps,
                                        int batch, RngStream& rng) {
    if (shard.sample_idx.empty()) throw std::invalid_argument("empty client shard");
    if (steps < 1) throw std::invalid_argument("local_steps below 1");
    GlobalModel m = model;
    const int n = static_cast<int>(shard.sample_idx.size());
    const int bsz = std::min(batch, n);
    std::vector<double> probs(m.classes), grad(m.params.size());
    for (int k = 0; k < steps; ++k) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (int b = 0; b < bsz; ++b) {
            int idx = shard.sample_idx[bsz == n ? b : static_cast<int>(rng.uniform_int(n))];
            detail::accumulate_sample_grad(m, task.train_row(idx), task.train_y[idx], probs, grad);
        }
        double scale = eta / bsz;
        for (std::size_t i = 0; i < m.params.size(); ++i) m.params[i] -= scale * grad[i];
    }
    return m.params;
}

// Weighted aggregation of dequantized client uploads; weights renormalized
// over the participating subset.
inline std::vector<double> aggregate(
    std::span<const std::pair<QuantizedVec, double>> uploads) {
    if (uploads.empty()) throw std::invalid_argument("aggregate: no uploads");
    double wsum = 0.0;
    for (const auto& [qv, kappa] : uploads) wsum += kappa;
    if (wsum <= 0.0) throw std::invalid_argument("aggregate: weight sum is zero");
    std::vector<double> out(uploads.front().first.dim, 0.0);
    for (const auto& [qv, kappa] : uploads) {
        if (qv.dim != out.size()) throw std::invalid_argument("aggregate: dimension mismatch");
        std::vector<double> vals = dequantize(qv);
        double w = kappa / wsum;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * vals[i];
    }
    return out;
}

struct EvalResult {
    double accuracy = 0.0;
    double loss = 0.0;
};

inline EvalResult evaluate(const GlobalModel& m, const SyntheticTask& task) {
    if (task.test_n() == 0) throw std::invalid_argument("evaluate: empty test set");
    const int C = m.classes, F = m.features;
    std::vector<double> z(C);
    int correct = 0;
    double loss = 0.0;
    for (int i = 0; i < task.test_n(); ++i) {
        const double* x = task.test_row(i);
        double maxz = -1e300;
        int arg = 0;
        for (int c = 0; c < C; ++c) {
            double v = m.bias(c);
            const double* w = &m.params[static_cast<std::size_t>(c) * F];
            for (int f = 0; f < F; ++f) v += w[f] * x[f];
            z[c] = v;
            if (v > maxz) {
                maxz = v;
                arg = c;
            }
        }
        if (arg == task.test_y[i]) correct++;
        double denom = 0.0;
        for (int c = 0; c < C; ++c) denom += std::exp(z[c] - maxz);
        loss += -(z[task.test_y[i]] - maxz - std::log(denom));
    }
    EvalResult r;
    r.accuracy = static_cast<double>(correct) / task.test_n();
    r.loss = loss / task.test_n();
    return r;
}

// Columnar text export of a partition for inspection:
// client,sample_index,label
inline void export_shards_csv(const SyntheticTask& task,
                              std::span<const ClientShard> shards, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << "client,sample_index,label\n";
    for (const auto& s : shards)
        for (int idx : s.sample_idx) os << s.client << ',' << idx << ',' << task.train_y[idx] << '\n';
}

} // namespace mcofl
