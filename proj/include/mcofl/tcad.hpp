#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace mcofl {

// A provider's decision for one round: client count, CPU frequency,
// bandwidth, quantization level.
struct Action {
    int n = 1;
    double f_hz = 1e9;
    double b_hz = 1e6;
    int q = 2;

    bool operator==(const Action&) const = default;
};

struct ActionBounds {
    int n_max = 5; // n_min is 1
    double f_min_hz = 0.5e9, f_max_hz = 3.5e9;
    double b_min_hz = 0.0, b_max_hz = 30e6;
    int q_min = 2, q_max = 32;
};

struct Granularity {
    double n = 1.0, f_hz = 0.5e9, b_hz = 2e6, q = 4.0;
};

// Per-dimension increment in {-1, 0, +1}, dimension order (n, f, B, q).
struct TernaryDelta {
    std::array<std::int8_t, 4> psi{0, 0, 0, 0};

    bool operator==(const TernaryDelta&) const = default;
};

constexpr int kDeltaCount = 81; // 3^4

// Stable lexicographic enumeration, -1 < 0 < +1 per dimension; index 0 is
// (-1,-1,-1,-1) and index 80 is (+1,+1,+1,+1).
inline TernaryDelta delta_from_index(int idx) {
    if (idx < 0 || idx >= kDeltaCount) throw std::out_of_range("delta index");
    TernaryDelta d;
    d.psi[0] = static_cast<std::int8_t>(idx / 27 - 1);
    d.psi[1] = static_cast<std::int8_t>((idx / 9) % 3 - 1);
    d.psi[2] = static_cast<std::int8_t>((idx / 3) % 3 - 1);
    d.psi[3] = static_cast<std::int8_t>(idx % 3 - 1);
    return d;
}

inline int delta_to_index(const TernaryDelta& d) {
    return (d.psi[0] + 1) * 27 + (d.psi[1] + 1) * 9 + (d.psi[2] + 1) * 3 + (d.psi[3] + 1);
}

inline const std::array<TernaryDelta, kDeltaCount>& enumerate_deltas() {
    static const std::array<TernaryDelta, kDeltaCount> all = [] {
        std::array<TernaryDelta, kDeltaCount> a{};
        for (int i = 0; i < kDeltaCount; ++i) a[i] = delta_from_index(i);
        return a;
    }();
    return all;
}

// One increment step with projection onto the per-dimension domains; n and q
// are integral after projection, f and B stay continuous between bounds.
inline Action apply_delta(const Action& a, const TernaryDelta& d, const Granularity& g,
                          const ActionBounds& b) {
    Action out;
    double n = a.n + d.psi[0] * g.n;
    out.n = std::clamp(static_cast<int>(std::lround(n)), 1, b.n_max);
    out.f_hz = std::clamp(a.f_hz + d.psi[1] * g.f_hz, b.f_min_hz, b.f_max_hz);
    out.b_hz = std::clamp(a.b_hz + d.psi[2] * g.b_hz, b.b_min_hz, b.b_max_hz);
    double q = a.q + d.psi[3] * g.q;
    out.q = std::clamp(static_cast<int>(std::lround(q)), b.q_min, b.q_max);
    return out;
}

// Episode-start action: midpoint of each range on the increment lattice,
// with the shared bandwidth budget split evenly across providers.
inline Action initial_action(const ActionBounds& b, int num_sps) {
    Action a;
    a.n = (b.n_max + 1) / 2; // ceil(N/2)
    a.f_hz = 0.5 * (b.f_min_hz + b.f_max_hz);
    a.b_hz = b.b_max_hz / std::max(1, num_sps);
    a.q = static_cast<int>(std::lround(0.5 * (b.q_min + b.q_max)));
    a.q = std::clamp(a.q, b.q_min, b.q_max);
    return a;
}

// Lazy mixed-radix counter over the opponents' joint delta space; yields
// 81^k combinations without materializing them.
class JointDeltaIter {
public:
    explicit JointDeltaIter(int k) : digits_(static_cast<std::size_t>(k), 0), done_(k <= 0) {
        if (k < 1) throw std::invalid_argument("JointDeltaIter needs k >= 1");
    }

    static std::uint64_t count(int k) {
        std::uint64_t c = 1;
        for (int i = 0; i < k; ++i) c *= kDeltaCount;
        return c;
    }

    bool done() const { return done_; }
    const std::vector<int>& indices() const { return digits_; }

    void next() {
        for (std::size_t i = digits_.size(); i-- > 0;) {
            if (++digits_[i] < kDeltaCount) return;
            digits_[i] = 0;
        }
        done_ = true;
    }

private:
    std::vector<int> digits_;
    bool done_;
};

} // namespace mcofl
