#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace univec {

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
    friend Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
    friend Point operator*(double s, Point p) { return {s * p.x, s * p.y}; }
    friend bool operator==(Point a, Point b) { return a.x == b.x && a.y == b.y; }
};

inline double dist(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }
inline double l1_dist(Point a, Point b) {
    return std::abs(a.x - b.x) + std::abs(a.y - b.y);
}

// Closed shapes are stored without a repeated closing vertex; the closing
// edge is implied by the kind.
enum class StructureKind { Polygon, Polyline, Segment };

inline bool is_closed(StructureKind k) { return k == StructureKind::Polygon; }

inline int min_points(StructureKind k) {
    switch (k) {
    case StructureKind::Polygon: return 3;
    case StructureKind::Polyline: return 2;
    case StructureKind::Segment: return 2;
    }
    return 2;
}

inline const char* kind_name(StructureKind k) {
    switch (k) {
    case StructureKind::Polygon: return "polygon";
    case StructureKind::Polyline: return "polyline";
    case StructureKind::Segment: return "segment";
    }
    return "?";
}

struct VectorInstance {
    StructureKind kind = StructureKind::Polygon;
    int class_id = 0; // 0=building, 1=road boundary, 2=center line
    std::vector<Point> points;
    std::int64_t id = 0;
};

// A prediction-side instance: geometry plus detection score and the
// per-kept-point key-point probabilities.
struct ScoredInstance {
    VectorInstance v;
    double score = 0.0;
    std::vector<double> kp_prob;
};

struct Scene {
    std::int64_t image_id = 0;
    int raster_size = 256;
    std::vector<VectorInstance> instances;
};

struct BBox {
    double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
    bool valid() const {
        return x_min <= x_max && y_min <= y_max && x_min >= 0 && y_min >= 0 &&
               x_max <= 1 && y_max <= 1;
    }
};

// class_id -> required structure kind
struct ClassTable {
    std::vector<StructureKind> kinds = {StructureKind::Polygon,
                                        StructureKind::Polyline,
                                        StructureKind::Segment};
    int num_classes() const { return static_cast<int>(kinds.size()); }
    bool contains(int class_id) const {
        return class_id >= 0 && class_id < num_classes();
    }
    StructureKind kind_of(int class_id) const { return kinds.at(class_id); }
};

struct Config {
    int N = 50;            // max instances per image
    int M = 40;            // points per vector
    int C = 64;            // channel width
    int E = 16;            // sampling points per query (split across levels)
    int L = 6;             // decoder layers
    int K = 900;           // coarse query count
    std::vector<int> scales = {8, 16, 32, 64};
    double keypoint_threshold = 0.5;
    double instance_threshold = 0.5;
    int heads = 8;
    ClassTable class_table;

    void check() const {
        if (N < 1 || M < 2 || C < 4 || C % 2 != 0 || E < 1 || L < 1 || K < N)
            throw std::invalid_argument("Config: invalid dimensions");
        if (scales.empty()) throw std::invalid_argument("Config: no scales");
    }
};

constexpr double kDistinctTol = 1e-9;

struct Violation {
    std::string what;
};

struct ValidationResult {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
};

inline ValidationResult validate_instance(const VectorInstance& v,
                                          const Config& cfg) {
    ValidationResult r;
    auto add = [&](std::string s) { r.violations.push_back({std::move(s)}); };

    const int n = static_cast<int>(v.points.size());
    if (v.kind == StructureKind::Segment) {
        if (n != 2) add("point count: segment requires exactly 2 points");
    } else if (n < min_points(v.kind)) {
        add("point count: below minimum for kind");
    }
    for (const Point& p : v.points) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
            add("non-finite coordinate");
            break;
        }
        if (p.x < 0 || p.x > 1 || p.y < 0 || p.y > 1) {
            add("out of range: coordinate outside [0,1]");
            break;
        }
    }
    for (int i = 0; i + 1 < n; ++i)
        if (dist(v.points[i], v.points[i + 1]) <= kDistinctTol) {
            add("duplicate consecutive points");
            break;
        }
    if (is_closed(v.kind) && n >= 2 &&
        dist(v.points.front(), v.points.back()) <= kDistinctTol)
        add("duplicate consecutive points (closing edge)");
    if (!cfg.class_table.contains(v.class_id))
        add("unknown class id");
    else if (cfg.class_table.kind_of(v.class_id) != v.kind)
        add("class/structure mismatch");
    return r;
}

// Shoelace value with wraparound; positive iff screen-clockwise under the
// y-down image convention.
inline double signed_area(std::span<const Point> pts) {
    if (pts.size() < 3)
        throw std::invalid_argument("signed_area: need at least 3 points");
    double acc = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Point& a = pts[i];
        const Point& b = pts[(i + 1) % pts.size()];
        acc += a.x * b.y - b.x * a.y;
    }
    return 0.5 * acc;
}

inline BBox bbox_of(const VectorInstance& v) {
    BBox b{1, 1, 0, 0};
    for (const Point& p : v.points) {
        b.x_min = std::min(b.x_min, p.x);
        b.y_min = std::min(b.y_min, p.y);
        b.x_max = std::max(b.x_max, p.x);
        b.y_max = std::max(b.y_max, p.y);
    }
    return b;
}

} // namespace univec
