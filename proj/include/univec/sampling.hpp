#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "univec/types.hpp"

namespace univec {

enum class Orientation { Canonical, Reversed };

struct SampledSequence {
    std::vector<Point> points;   // exactly M samples
    std::vector<bool> key_flags; // true where a sample carries an original key point
    std::int64_t source_id = 0;
    Orientation orientation = Orientation::Canonical;
};

inline double arc_length(const VectorInstance& v) {
    double total = 0.0;
    const auto& p = v.points;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) total += dist(p[i], p[i + 1]);
    if (is_closed(v.kind) && p.size() >= 2) total += dist(p.back(), p.front());
    return total;
}

// Index of the vertex minimizing (y, then x).
inline int top_left_start(std::span<const Point> pts) {
    if (pts.size() < 3)
        throw std::invalid_argument("top_left_start: need at least 3 points");
    int best = 0;
    for (int i = 1; i < static_cast<int>(pts.size()); ++i) {
        const Point& p = pts[i];
        const Point& q = pts[best];
        if (p.y < q.y || (p.y == q.y && p.x < q.x)) best = i;
    }
    return best;
}

namespace detail {

// Canonical key-point order: polygons start at the top-left vertex and run
// clockwise (shoelace >= 0 under y-down); open kinds keep their direction.
inline std::vector<Point> canonical_keys(const VectorInstance& v) {
    std::vector<Point> keys = v.points;
    if (!is_closed(v.kind)) return keys;
    if (signed_area(keys) < 0) std::reverse(keys.begin(), keys.end());
    const int s = top_left_start(keys);
    std::rotate(keys.begin(), keys.begin() + s, keys.end());
    return keys;
}

// Point at arc position s along the (optionally closed) chain.
inline Point point_at(const std::vector<Point>& keys, bool closed, double s) {
    const std::size_t n = keys.size();
    const std::size_t edges = closed ? n : n - 1;
    for (std::size_t i = 0; i < edges; ++i) {
        const Point& a = keys[i];
        const Point& b = keys[(i + 1) % n];
        const double len = dist(a, b);
        if (s <= len || i + 1 == edges) {
            const double t = len > 0 ? std::min(s / len, 1.0) : 0.0;
            return a + t * (b - a);
        }
        s -= len;
    }
    return keys.back();
}

} // namespace detail

inline SampledSequence resample_uniform(const VectorInstance& v, int M) {
    const int T = static_cast<int>(v.points.size());
    if (M < T)
        throw std::invalid_argument("resample_uniform: insufficient resolution");
    const bool closed = is_closed(v.kind);
    const std::vector<Point> keys = detail::canonical_keys(v);
    const double total = arc_length(v);
    const double spacing = closed ? total / M : total / (M - 1);

    SampledSequence out;
    out.source_id = v.id;
    out.points.resize(M);
    out.key_flags.assign(M, false);
    for (int j = 0; j < M; ++j)
        out.points[j] = detail::point_at(keys, closed, spacing * j);

    // Snap each key point onto its nearest sample slot (by arc position,
    // ties toward the lower index); a taken slot falls through to the next.
    double s = 0.0;
    int last_slot = -1;
    for (int i = 0; i < T; ++i) {
        if (i > 0) s += dist(keys[i - 1], keys[i]);
        int slot = static_cast<int>(std::floor(s / spacing + 0.5));
        // half-integer arc positions round down (lower index wins ties)
        if (slot > 0 && (slot - 0.5) * spacing == s) --slot;
        slot = std::max(slot, last_slot + 1);
        const int max_slot = M - (T - i); // leave room for remaining keys
        slot = std::min(slot, max_slot);
        out.points[slot] = keys[i];
        out.key_flags[slot] = true;
        last_slot = slot;
    }
    return out;
}

// Polygons have a single canonical candidate; open kinds yield forward and
// reversed sequences, the caller keeps whichever predicts better.
inline std::vector<SampledSequence> orientation_candidates(const VectorInstance& v,
                                                           int M) {
    std::vector<SampledSequence> out;
    out.push_back(resample_uniform(v, M));
    if (!is_closed(v.kind)) {
        // Mirror the forward candidate so reversal is exact (i -> M-1-i).
        SampledSequence rev = out.front();
        std::reverse(rev.points.begin(), rev.points.end());
        std::reverse(rev.key_flags.begin(), rev.key_flags.end());
        rev.orientation = Orientation::Reversed;
        out.push_back(std::move(rev));
    }
    return out;
}

} // namespace univec
