#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "mcofl/rng.hpp"

namespace mcofl {

// Stochastically quantized parameter vector: per-element sign and level in
// [0, q], plus the source vector's p-norm. Element d reconstructs to
// norm * sign_d * level_d / q.
struct QuantizedVec {
    double norm = 0.0;
    std::vector<std::int8_t> signs;
    std::vector<std::uint32_t> levels;
    std::uint32_t q = 2;
    std::size_t dim = 0;
};

inline double pnorm(std::span<const double> v, double p) {
    if (p == 2.0) {
        double s = 0.0;
        for (double x : v) s += x * x;
        return std::sqrt(s);
    }
    double s = 0.0;
    for (double x : v) s += std::pow(std::abs(x), p);
    return std::pow(s, 1.0 / p);
}

// Unbiased maximum-q-level quantization: element magnitude e = |x|/norm lies
// in [u/q, (u+1)/q] with u = floor(e*q); the level is u with probability
// 1 - (e*q - u) and u+1 otherwise. e = 1 lands on level q deterministically.
inline QuantizedVec quantize(std::span<const double> vec, std::uint32_t q, RngStream& rng,
                             double p = 2.0) {
    if (q < 2) throw std::invalid_argument("quantization level q below 2");
    QuantizedVec out;
    out.q = q;
    out.dim = vec.size();
    out.signs.resize(vec.size());
    out.levels.resize(vec.size());
    for (double x : vec)
        if (!std::isfinite(x)) throw std::invalid_argument("non-finite element in quantize input");
    out.norm = pnorm(vec, p);
    if (out.norm == 0.0) return out; // all levels zero by construction
    for (std::size_t d = 0; d < vec.size(); ++d) {
        double x = vec[d];
        out.signs[d] = static_cast<std::int8_t>(x > 0.0 ? 1 : (x < 0.0 ? -1 : 0));
        double e = std::abs(x) / out.norm;
        double eq = e * static_cast<double>(q);
        auto u = static_cast<std::uint32_t>(std::min(std::floor(eq), static_cast<double>(q)));
        double prob_up = eq - static_cast<double>(u);
        std::uint32_t level = u;
        if (u < q && rng.uniform() < prob_up) level = u + 1;
        out.levels[d] = std::min(level, q);
    }
    return out;
}

inline std::vector<double> dequantize(const QuantizedVec& qv) {
    std::vector<double> out(qv.dim);
    for (std::size_t d = 0; d < qv.dim; ++d)
        out[d] = qv.norm * static_cast<double>(qv.signs[d]) * static_cast<double>(qv.levels[d]) /
                 static_cast<double>(qv.q);
    return out;
}

// ceil(log2 q) for q >= 2
inline std::uint32_t level_bits(std::uint32_t q) {
    return static_cast<std::uint32_t>(std::bit_width(q - 1u));
}

// Upload size: one sign+level field per element plus a 32-bit norm.
inline std::uint64_t payload_bits(std::uint64_t dim, std::uint32_t q) {
    if (q < 2) throw std::invalid_argument("quantization level q below 2");
    return dim * (static_cast<std::uint64_t>(level_bits(q)) + 1u) + 32u;
}

} // namespace mcofl
