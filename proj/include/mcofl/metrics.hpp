#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcofl/rng.hpp"
#include "mcofl/tcad.hpp"

namespace mcofl {

// Reward vectors (one per independent run) for one algorithm.
struct ParetoSet {
    std::string label;
    std::vector<std::vector<double>> points;
};

// Joint normalization across all algorithms under comparison, then inversion
// against the utopian reference so a minimization-oriented hypervolume
// applies: u = v_ref - (v - min) / (max - min).
inline std::vector<ParetoSet> normalize_invert(std::span<const ParetoSet> sets, double v_ref) {
    if (sets.empty()) throw std::invalid_argument("normalize_invert: no sets");
    std::size_t dim = 0;
    for (const auto& s : sets)
        for (const auto& p : s.points) {
            if (dim == 0) dim = p.size();
            if (p.size() != dim) throw std::invalid_argument("normalize_invert: ragged points");
        }
    if (dim == 0) throw std::invalid_argument("normalize_invert: no points");
    std::vector<double> lo(dim, std::numeric_limits<double>::infinity());
    std::vector<double> hi(dim, -std::numeric_limits<double>::infinity());
    for (const auto& s : sets)
        for (const auto& p : s.points)
            for (std::size_t d = 0; d < dim; ++d) {
                lo[d] = std::min(lo[d], p[d]);
                hi[d] = std::max(hi[d], p[d]);
            }
    for (std::size_t d = 0; d < dim; ++d)
        if (!(hi[d] > lo[d]))
            throw std::invalid_argument("normalize_invert: degenerate dimension " +
                                        std::to_string(d) + " (max equals min)");
    std::vector<ParetoSet> out;
    for (const auto& s : sets) {
        ParetoSet inv;
        inv.label = s.label;
        for (const auto& p : s.points) {
            std::vector<double> u(dim);
            for (std::size_t d = 0; d < dim; ++d) u[d] = v_ref - (p[d] - lo[d]) / (hi[d] - lo[d]);
            inv.points.push_back(std::move(u));
        }
        out.push_back(std::move(inv));
    }
    return out;
}

namespace detail {

// 2D union area of boxes [p, ref] for minimization points p <= ref:
// staircase sweep over x with the running best (lowest) y.
inline double hv2d(std::vector<std::array<double, 2>> pts, double rx, double ry) {
    std::sort(pts.begin(), pts.end());
    double area = 0.0;
    double y_best = ry;
    for (const auto& p : pts) {
        if (p[1] < y_best) {
            area += (rx - p[0]) * (y_best - p[1]);
            y_best = p[1];
        }
    }
    return area;
}

} // namespace detail

// Exact dominated hypervolume (minimization orientation) for 2 or 3
// dimensions; 3D is a sweep over z slabs of 2D areas.
inline double hypervolume_exact(std::span<const std::vector<double>> points,
                                std::span<const double> ref) {
    const std::size_t dim = ref.size();
    if (dim != 2 && dim != 3)
        throw std::invalid_argument("hypervolume_exact supports 2 or 3 dimensions");
    for (const auto& p : points) {
        if (p.size() != dim) throw std::invalid_argument("hypervolume point dimension mismatch");
        for (std::size_t d = 0; d < dim; ++d)
            if (p[d] > ref[d])
                throw std::invalid_argument("hypervolume point beyond the reference");
    }
    if (points.empty()) return 0.0;

    if (dim == 2) {
        std::vector<std::array<double, 2>> pts;
        for (const auto& p : points) pts.push_back({p[0], p[1]});
        return detail::hv2d(std::move(pts), ref[0], ref[1]);
    }

    // dim == 3: sort by z; between consecutive z values the active set is
    // fixed, contributing (z_next - z) times its 2D area.
    std::vector<std::size_t> order(points.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return points[a][2] < points[b][2]; });
    double volume = 0.0;
    std::vector<std::array<double, 2>> active;
    for (std::size_t i = 0; i < order.size(); ++i) {
        active.push_back({points[order[i]][0], points[order[i]][1]});
        double z0 = points[order[i]][2];
        double z1 = (i + 1 < order.size()) ? points[order[i + 1]][2] : ref[2];
        if (z1 > z0) volume += detail::hv2d(active, ref[0], ref[1]) * (z1 - z0);
    }
    return volume;
}

struct McEstimate {
    double volume = 0.0;
    double std_error = 0.0;
};

// Monte Carlo estimate of the same measure: uniform sampling over the
// bounding box between the point-wise minimum corner and the reference.
inline McEstimate hypervolume_mc(std::span<const std::vector<double>> points,
                                 std::span<const double> ref, std::uint64_t samples,
                                 RngStream& rng) {
    if (samples < 1) throw std::invalid_argument("hypervolume_mc: samples below 1");
    McEstimate est;
    if (points.empty()) return est;
    const std::size_t dim = ref.size();
    std::vector<double> lo(dim, std::numeric_limits<double>::infinity());
    for (const auto& p : points) {
        if (p.size() != dim) throw std::invalid_argument("hypervolume point dimension mismatch");
        for (std::size_t d = 0; d < dim; ++d) {
            if (p[d] > ref[d])
                throw std::invalid_argument("hypervolume point beyond the reference");
            lo[d] = std::min(lo[d], p[d]);
        }
    }
    double box = 1.0;
    for (std::size_t d = 0; d < dim; ++d) box *= ref[d] - lo[d];
    if (box <= 0.0) return est;

    std::uint64_t hits = 0;
    std::vector<double> x(dim);
    for (std::uint64_t s = 0; s < samples; ++s) {
        for (std::size_t d = 0; d < dim; ++d) x[d] = rng.uniform(lo[d], ref[d]);
        for (const auto& p : points) {
            bool dominated = true;
            for (std::size_t d = 0; d < dim; ++d)
                if (x[d] < p[d]) {
                    dominated = false;
                    break;
                }
            if (dominated) {
                hits++;
                break;
            }
        }
    }
    double frac = static_cast<double>(hits) / static_cast<double>(samples);
    est.volume = frac * box;
    est.std_error = box * std::sqrt(std::max(frac * (1.0 - frac), 0.0) /
                                    static_cast<double>(samples));
    return est;
}

// Wire cost of sharing one provider's action: two float32 fields (f, B), two
// int16 fields (n, q), one int16 provider id.
inline std::size_t action_payload_bytes(const Action&) {
    return 2 * sizeof(float) + 2 * sizeof(std::int16_t) + sizeof(std::int16_t);
}

} // namespace mcofl
