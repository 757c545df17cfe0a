#pragma once

#include <cstdint>
#include <cmath>
#include <string_view>

namespace mcofl {

// 64-bit FNV-1a, used to derive independent stream offsets from labels.
constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic, label-addressed random stream. Two streams with the same
// (seed, label) produce identical sequences; distinct labels or seeds give
// independent sequences. All distributions are generated from raw bits here
// rather than <random> adapters so sequences are pinned by this file alone.
class RngStream {
public:
    RngStream() : state_(0x853c49e6748fea9bULL) {}

    RngStream(std::uint64_t seed, std::string_view label) {
        std::uint64_t s = seed ^ 0x2545f4914f6cdd1dULL;
        std::uint64_t h = fnv1a64(label);
        // a few mixing rounds so that nearby seeds decorrelate
        state_ = splitmix64(s) ^ (h * 0x9e3779b97f4a7c15ULL);
        splitmix64(state_);
        splitmix64(state_);
    }

    std::uint64_t u64() { return splitmix64(state_); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }

    // uniform in (0, 1], safe for log()
    double uniform_pos() { return static_cast<double>((u64() >> 11) + 1) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller without caching; two raw draws per variate.
    double gaussian() {
        double u1 = uniform_pos();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

    // uniform integer in [0, n)
    std::uint64_t uniform_int(std::uint64_t n) {
        // rejection-free multiply-shift; bias < 2^-64, irrelevant at our scales
        unsigned __int128 m = static_cast<unsigned __int128>(u64()) * n;
        return static_cast<std::uint64_t>(m >> 64);
    }

private:
    std::uint64_t state_;
};

} // namespace mcofl
