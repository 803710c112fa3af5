#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <queue>
#include <vector>

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/geometries/polygon.hpp>

#include "univec/raster.hpp"
#include "univec/rng.hpp"
#include "univec/types.hpp"

namespace univec {

struct ScoredScene {
    std::int64_t image_id = 0;
    int raster_size = 256;
    std::vector<ScoredInstance> instances;
};

namespace detail {

inline double point_segment_dist(Point p, Point a, Point b) {
    const Point ab = b - a;
    const double len2 = ab.x * ab.x + ab.y * ab.y;
    if (len2 == 0.0) return dist(p, a);
    const double t =
        std::clamp(((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2, 0.0, 1.0);
    return dist(p, {a.x + t * ab.x, a.y + t * ab.y});
}

inline double point_boundary_dist(Point p, const std::vector<Point>& poly) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < poly.size(); ++i)
        best = std::min(best,
                        point_segment_dist(p, poly[i], poly[(i + 1) % poly.size()]));
    return best;
}

inline bool segments_intersect(Point a, Point b, Point c, Point d) {
    auto cross = [](Point o, Point p, Point q) {
        return (p.x - o.x) * (q.y - o.y) - (p.y - o.y) * (q.x - o.x);
    };
    const double d1 = cross(c, d, a), d2 = cross(c, d, b);
    const double d3 = cross(a, b, c), d4 = cross(a, b, d);
    return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
           ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

inline bool is_simple_polygon(const std::vector<Point>& poly) {
    const std::size_t n = poly.size();
    if (n < 3) return false;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
            if (segments_intersect(poly[i], poly[(i + 1) % n], poly[j],
                                   poly[(j + 1) % n]))
                return false;
        }
    return true;
}

namespace bg = boost::geometry;
using BgPoint = bg::model::d2::point_xy<double>;
using BgPolygon = bg::model::polygon<BgPoint>;

inline BgPolygon to_bg(const std::vector<Point>& poly) {
    BgPolygon out;
    for (const Point& p : poly) bg::append(out.outer(), BgPoint(p.x, p.y));
    bg::append(out.outer(), BgPoint(poly.front().x, poly.front().y));
    bg::correct(out);
    return out;
}

} // namespace detail

// Symmetric mean vertex-to-boundary distance.
inline double polis(const std::vector<Point>& A, const std::vector<Point>& B) {
    if (A.size() < 3 || B.size() < 3)
        throw std::invalid_argument("polis: degenerate polygon");
    double a = 0.0, b = 0.0;
    for (const Point& p : A) a += detail::point_boundary_dist(p, B);
    for (const Point& p : B) b += detail::point_boundary_dist(p, A);
    return a / (2.0 * A.size()) + b / (2.0 * B.size());
}

// Exact intersection-over-union for simple polygons (clipping via
// Boost.Geometry); degenerate/empty union yields 0.
inline double polygon_iou(const std::vector<Point>& A, const std::vector<Point>& B) {
    if (!detail::is_simple_polygon(A) || !detail::is_simple_polygon(B))
        throw std::invalid_argument("polygon_iou: self-intersecting input");
    const auto pa = detail::to_bg(A);
    const auto pb = detail::to_bg(B);
    std::vector<detail::BgPolygon> inter;
    boost::geometry::intersection(pa, pb, inter);
    double ai = 0.0;
    for (const auto& p : inter) ai += boost::geometry::area(p);
    const double au = boost::geometry::area(pa) + boost::geometry::area(pb) - ai;
    return au > 0.0 ? ai / au : 0.0;
}

// Forgiving variant for scoring arbitrary detections: a self-intersecting
// polygon can never match, so it scores 0 instead of raising.
inline double polygon_iou_safe(const std::vector<Point>& A,
                               const std::vector<Point>& B) {
    if (!detail::is_simple_polygon(A) || !detail::is_simple_polygon(B)) return 0.0;
    return polygon_iou(A, B);
}

// Complexity-aware IoU: IoU discounted by the relative vertex-count gap.
inline double ciou(const std::vector<Point>& A, const std::vector<Point>& B) {
    const double iou = polygon_iou(A, B);
    const double na = static_cast<double>(A.size());
    const double nb = static_cast<double>(B.size());
    return iou * (1.0 - std::abs(na - nb) / (na + nb));
}

// ---------------------------------------------------------------------------
// COCO-style mAP over polygon instances
// ---------------------------------------------------------------------------

struct DetPoly {
    int scene = 0;
    int class_id = 0;
    double score = 0.0;
    std::vector<Point> poly;
};

struct GtPoly {
    int scene = 0;
    int class_id = 0;
    std::vector<Point> poly;
};

namespace detail {

// 101-point interpolated AP from (recall, precision) samples in rank order.
inline double interpolated_ap(const std::vector<double>& recall,
                              const std::vector<double>& precision) {
    double ap = 0.0;
    for (int k = 0; k <= 100; ++k) {
        const double r = k / 100.0;
        double best = 0.0;
        for (std::size_t i = 0; i < recall.size(); ++i)
            if (recall[i] >= r) best = std::max(best, precision[i]);
        ap += best;
    }
    return ap / 101.0;
}

// Score-sorted greedy matching at one IoU threshold for one class.
inline double ap_single(const std::vector<DetPoly>& dets, const std::vector<GtPoly>& gts,
                        double iou_thr) {
    if (gts.empty()) return 0.0;
    std::vector<int> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return dets[a].score > dets[b].score; });
    std::vector<char> gt_used(gts.size(), 0);
    std::vector<double> recall, precision;
    int tp = 0, fp = 0;
    for (int di : order) {
        int best_gt = -1;
        double best_iou = iou_thr;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (gt_used[g] || gts[g].scene != dets[di].scene ||
                gts[g].class_id != dets[di].class_id)
                continue;
            const double iou = polygon_iou_safe(dets[di].poly, gts[g].poly);
            if (iou >= best_iou) {
                best_iou = iou;
                best_gt = static_cast<int>(g);
            }
        }
        if (best_gt >= 0) {
            gt_used[best_gt] = 1;
            ++tp;
        } else {
            ++fp;
        }
        recall.push_back(static_cast<double>(tp) / gts.size());
        precision.push_back(static_cast<double>(tp) / (tp + fp));
    }
    return interpolated_ap(recall, precision);
}

} // namespace detail

// COCO protocol: AP averaged over IoU thresholds .50:.05:.95 and over the
// classes present in the ground truth.
inline double coco_map(const std::vector<DetPoly>& dets, const std::vector<GtPoly>& gts,
                       const std::vector<double>& thresholds = {
                           0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95}) {
    std::map<int, std::vector<GtPoly>> gt_by_class;
    for (const GtPoly& g : gts) gt_by_class[g.class_id].push_back(g);
    if (gt_by_class.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& [cls, class_gts] : gt_by_class) {
        std::vector<DetPoly> class_dets;
        for (const DetPoly& d : dets)
            if (d.class_id == cls) class_dets.push_back(d);
        double class_ap = 0.0;
        for (double thr : thresholds)
            class_ap += detail::ap_single(class_dets, class_gts, thr);
        acc += class_ap / thresholds.size();
    }
    return acc / gt_by_class.size();
}

// ---------------------------------------------------------------------------
// Pixel metrics with tolerance (polyline/segment classes)
// ---------------------------------------------------------------------------

struct PixelCounts {
    std::int64_t pred_total = 0, pred_hit = 0;
    std::int64_t gt_total = 0, gt_hit = 0;
};

namespace detail {

inline Scene open_kinds_only(const Scene& s) {
    Scene out = s;
    out.instances.clear();
    for (const VectorInstance& v : s.instances)
        if (v.kind != StructureKind::Polygon) out.instances.push_back(v);
    return out;
}

} // namespace detail

inline PixelCounts pixel_counts(const Scene& pred, const Scene& gt, double tol_px,
                                int stroke_px = 1) {
    const RasterImage pr = rasterize(detail::open_kinds_only(pred), stroke_px);
    const RasterImage gr = rasterize(detail::open_kinds_only(gt), stroke_px);
    const std::vector<double> dist_to_gt = distance_transform(gr);
    const std::vector<double> dist_to_pred = distance_transform(pr);
    PixelCounts c;
    const int S = pr.size;
    for (int i = 0; i < S * S; ++i) {
        if (pr.data[i] > 0.5) {
            ++c.pred_total;
            if (dist_to_gt[i] <= tol_px) ++c.pred_hit;
        }
        if (gr.data[i] > 0.5) {
            ++c.gt_total;
            if (dist_to_pred[i] <= tol_px) ++c.gt_hit;
        }
    }
    return c;
}

struct Prf {
    double precision = 1.0, recall = 1.0, f1 = 1.0;
};

inline Prf prf_from_counts(const PixelCounts& c) {
    Prf out;
    // empty-side conventions: a vacuous ratio counts as 1
    out.precision = c.pred_total ? static_cast<double>(c.pred_hit) / c.pred_total : 1.0;
    out.recall = c.gt_total ? static_cast<double>(c.gt_hit) / c.gt_total : 1.0;
    if (c.pred_total == 0 && c.gt_total == 0) {
        out.f1 = 1.0;
    } else if (out.precision + out.recall == 0.0) {
        out.f1 = 0.0;
    } else {
        out.f1 = 2 * out.precision * out.recall / (out.precision + out.recall);
    }
    if (c.pred_total == 0 && c.gt_total > 0) out.f1 = 0.0;
    if (c.gt_total == 0 && c.pred_total > 0) out.f1 = 0.0;
    return out;
}

// Precision / recall / F1 at a pixel tolerance (10 px default per the
// road-boundary evaluation protocol).
inline Prf pixel_prf(const Scene& pred, const Scene& gt, double tol_px = 10.0,
                     int stroke_px = 1) {
    return prf_from_counts(pixel_counts(pred, gt, tol_px, stroke_px));
}

// ---------------------------------------------------------------------------
// APLS over road graphs (polylines + segments; pixel units)
// ---------------------------------------------------------------------------

struct RoadGraph {
    std::vector<Point> nodes; // pixel coordinates
    std::vector<std::vector<std::pair<int, double>>> adj;

    int add_node(Point p) {
        for (std::size_t i = 0; i < nodes.size(); ++i)
            if (dist(nodes[i], p) < 1e-9) return static_cast<int>(i);
        nodes.push_back(p);
        adj.emplace_back();
        return static_cast<int>(nodes.size()) - 1;
    }

    void add_edge(int a, int b) {
        const double w = dist(nodes[a], nodes[b]);
        adj[a].push_back({b, w});
        adj[b].push_back({a, w});
    }
};

inline RoadGraph build_graph(const Scene& s) {
    RoadGraph g;
    const double S = static_cast<double>(s.raster_size);
    for (const VectorInstance& v : s.instances) {
        if (v.kind == StructureKind::Polygon) continue;
        int prev = -1;
        for (const Point& p : v.points) {
            const int n = g.add_node({p.x * S, p.y * S});
            if (prev >= 0 && prev != n) g.add_edge(prev, n);
            prev = n;
        }
    }
    return g;
}

namespace detail {

inline constexpr double kInfApls() { return std::numeric_limits<double>::infinity(); }

inline std::vector<double> dijkstra(const RoadGraph& g, int src) {
    std::vector<double> d(g.nodes.size(), kInfApls());
    std::priority_queue<std::pair<double, int>, std::vector<std::pair<double, int>>,
                        std::greater<>>
        q;
    d[src] = 0.0;
    q.push({0.0, src});
    while (!q.empty()) {
        auto [du, u] = q.top();
        q.pop();
        if (du > d[u]) continue;
        for (auto [v, w] : g.adj[u])
            if (du + w < d[v]) {
                d[v] = du + w;
                q.push({d[v], v});
            }
    }
    return d;
}

inline int nearest_node(const RoadGraph& g, Point p, double radius) {
    int best = -1;
    double best_d = radius;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const double d = dist(g.nodes[i], p);
        if (d <= best_d) {
            best_d = d;
            best = static_cast<int>(i);
        }
    }
    return best;
}

// Snap p onto the nearest point of the graph (node or interior of an edge,
// within radius). Edge hits insert a control node splitting the edge so path
// lengths stay exact. Returns the node index or -1 when nothing is in range.
inline int snap_to_graph(RoadGraph& g, Point p, double radius) {
    int best_node = nearest_node(g, p, radius);
    double best_d = best_node >= 0 ? dist(g.nodes[best_node], p) : radius;
    int ea = -1, eb = -1;
    Point proj;
    const int n = static_cast<int>(g.nodes.size());
    for (int u = 0; u < n; ++u)
        for (const auto& [v, w] : g.adj[u]) {
            if (v <= u) continue;
            const Point a = g.nodes[u], b = g.nodes[v];
            const Point ab = b - a;
            const double len2 = ab.x * ab.x + ab.y * ab.y;
            if (len2 == 0.0) continue;
            const double t =
                std::clamp(((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2, 0.0, 1.0);
            const Point q{a.x + t * ab.x, a.y + t * ab.y};
            const double d = dist(p, q);
            if (d < best_d) {
                best_d = d;
                best_node = -1;
                ea = u;
                eb = v;
                proj = q;
            }
        }
    if (ea >= 0) {
        const int m = g.add_node(proj); // merges with an endpoint if coincident
        if (m != ea && m != eb) {
            g.add_edge(m, ea);
            g.add_edge(m, eb);
        }
        return m;
    }
    return best_node;
}

// Penalties for GT-side sampled pairs against the proposal graph.
inline void apls_direction(const RoadGraph& ref, const RoadGraph& prop, int n_samples,
                           Rng& rng, double snap_radius,
                           std::vector<double>& penalties) {
    const int n = static_cast<int>(ref.nodes.size());
    if (n < 2) return;
    for (int s = 0; s < n_samples; ++s) {
        const int a = static_cast<int>(rng.uniform_int(0, n - 1));
        int b = a;
        while (b == a) b = static_cast<int>(rng.uniform_int(0, n - 1));
        const double L = dijkstra(ref, a)[b];
        if (!std::isfinite(L) || L <= 0.0) continue; // disconnected in the reference
        RoadGraph snapped = prop; // per-pair copy: snapping may insert nodes
        const int pa = snap_to_graph(snapped, ref.nodes[a], snap_radius);
        const int pb = snap_to_graph(snapped, ref.nodes[b], snap_radius);
        if (pa < 0 || pb < 0) {
            penalties.push_back(1.0);
            continue;
        }
        const double Lp = dijkstra(snapped, pa)[pb];
        if (!std::isfinite(Lp)) {
            penalties.push_back(1.0);
            continue;
        }
        penalties.push_back(std::min(1.0, std::abs(L - Lp) / L));
    }
}

} // namespace detail

// Average Path Length Similarity, symmetrized over both graph directions.
inline double apls(const RoadGraph& pred, const RoadGraph& gt, int n_samples = 200,
                   std::uint64_t seed = 0, double snap_radius = 10.0) {
    std::vector<double> penalties;
    Rng rng(seed, 0x61706c73ULL); // "apls"
    if (gt.nodes.size() >= 2 && pred.nodes.empty()) return 0.0;
    detail::apls_direction(gt, pred, n_samples, rng, snap_radius, penalties);
    detail::apls_direction(pred, gt, n_samples, rng, snap_radius, penalties);
    if (penalties.empty()) return 1.0;
    const double mean =
        std::accumulate(penalties.begin(), penalties.end(), 0.0) / penalties.size();
    return 1.0 - mean;
}

// ---------------------------------------------------------------------------
// sAP / sF for line segments
// ---------------------------------------------------------------------------

struct DetSegment {
    int scene = 0;
    double score = 0.0;
    Point a, b; // pixel coordinates
};

struct GtSegment {
    int scene = 0;
    Point a, b;
};

struct SapSf {
    double sap10 = 0, sap15 = 0, sf10 = 0, sf15 = 0;
};

namespace detail {

// min over endpoint orderings of the summed squared endpoint distances
inline double segment_sq_error(const DetSegment& d, const GtSegment& g) {
    auto sq = [](Point p, Point q) {
        const double dx = p.x - q.x, dy = p.y - q.y;
        return dx * dx + dy * dy;
    };
    return std::min(sq(d.a, g.a) + sq(d.b, g.b), sq(d.a, g.b) + sq(d.b, g.a));
}

inline std::pair<double, double> sap_sf_at(const std::vector<DetSegment>& dets,
                                           const std::vector<GtSegment>& gts,
                                           double thr_px) {
    if (gts.empty()) return {0.0, 0.0};
    std::vector<int> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return dets[a].score > dets[b].score; });
    std::vector<char> used(gts.size(), 0);
    std::vector<double> recall, precision;
    int tp = 0, fp = 0;
    const double thr2 = thr_px * thr_px;
    for (int di : order) {
        int best = -1;
        double best_e = thr2;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (used[g] || gts[g].scene != dets[di].scene) continue;
            const double e = segment_sq_error(dets[di], gts[g]);
            if (e <= best_e) {
                best_e = e;
                best = static_cast<int>(g);
            }
        }
        if (best >= 0) {
            used[best] = 1;
            ++tp;
        } else {
            ++fp;
        }
        recall.push_back(static_cast<double>(tp) / gts.size());
        precision.push_back(static_cast<double>(tp) / (tp + fp));
    }
    double sf = 0.0;
    for (std::size_t i = 0; i < recall.size(); ++i)
        if (precision[i] + recall[i] > 0)
            sf = std::max(sf, 2 * precision[i] * recall[i] / (precision[i] + recall[i]));
    return {interpolated_ap(recall, precision), sf};
}

} // namespace detail

inline SapSf sap_sf(const std::vector<DetSegment>& dets,
                    const std::vector<GtSegment>& gts, double thr_lo = 10.0,
                    double thr_hi = 15.0) {
    SapSf out;
    std::tie(out.sap10, out.sf10) = detail::sap_sf_at(dets, gts, thr_lo);
    std::tie(out.sap15, out.sf15) = detail::sap_sf_at(dets, gts, thr_hi);
    return out;
}

// ---------------------------------------------------------------------------
// Aggregated report
// ---------------------------------------------------------------------------

struct EvalOptions {
    double pixel_tol = 10.0;
    int stroke_px = 1;
    int apls_samples = 200;
    std::uint64_t seed = 0;
    double sap_thr_lo = 10.0;
    double sap_thr_hi = 15.0;
};

struct MetricReport {
    double map = 0, iou = 0, ciou = 0, polis = 0;
    double precision = 0, recall = 0, f1 = 0, apls = 0;
    double sap10 = 0, sap15 = 0, sf10 = 0, sf15 = 0;
    int n_polygons = 0, n_polylines = 0, n_segments = 0;
    // ECM is intentionally absent: its formula lives in external work that is
    // not part of this suite; the CLI reports null for it.
};

inline MetricReport evaluate(const std::vector<ScoredScene>& preds,
                             const std::vector<Scene>& gts,
                             const EvalOptions& opt = {}) {
    MetricReport rep;
    std::map<std::int64_t, const ScoredScene*> pred_by_id;
    for (const auto& p : preds) pred_by_id[p.image_id] = &p;

    std::vector<DetPoly> det_polys;
    std::vector<GtPoly> gt_polys;
    std::vector<DetSegment> det_segs;
    std::vector<GtSegment> gt_segs;
    double iou_acc = 0, ciou_acc = 0, polis_acc = 0;
    int iou_n = 0, polis_n = 0;
    PixelCounts pix;
    std::vector<double> apls_values;

    int scene_idx = 0;
    for (const Scene& gt : gts) {
        static const ScoredScene empty_pred;
        const ScoredScene* pred = pred_by_id.count(gt.image_id)
                                      ? pred_by_id[gt.image_id]
                                      : &empty_pred;
        const double S = static_cast<double>(gt.raster_size);

        Scene pred_scene;
        pred_scene.image_id = gt.image_id;
        pred_scene.raster_size = gt.raster_size;
        for (const ScoredInstance& si : pred->instances)
            pred_scene.instances.push_back(si.v);

        for (const VectorInstance& v : gt.instances) {
            if (v.kind == StructureKind::Polygon) {
                ++rep.n_polygons;
                gt_polys.push_back({scene_idx, v.class_id, v.points});
            } else if (v.kind == StructureKind::Polyline) {
                ++rep.n_polylines;
            } else {
                ++rep.n_segments;
                gt_segs.push_back({scene_idx,
                                   {v.points[0].x * S, v.points[0].y * S},
                                   {v.points[1].x * S, v.points[1].y * S}});
            }
        }
        for (const ScoredInstance& si : pred->instances) {
            if (si.v.kind == StructureKind::Polygon && si.v.points.size() >= 3)
                det_polys.push_back({scene_idx, si.v.class_id, si.score, si.v.points});
            if (si.v.kind == StructureKind::Segment)
                det_segs.push_back({scene_idx, si.score,
                                    {si.v.points[0].x * S, si.v.points[0].y * S},
                                    {si.v.points[1].x * S, si.v.points[1].y * S}});
        }

        // per-GT-polygon best-IoU pairing for IoU / C-IoU / PoLiS
        for (const VectorInstance& v : gt.instances) {
            if (v.kind != StructureKind::Polygon) continue;
            double best_iou = 0.0;
            const VectorInstance* best = nullptr;
            for (const ScoredInstance& si : pred->instances) {
                if (si.v.kind != StructureKind::Polygon ||
                    si.v.class_id != v.class_id || si.v.points.size() < 3)
                    continue;
                const double iou = polygon_iou_safe(v.points, si.v.points);
                if (iou > best_iou) {
                    best_iou = iou;
                    best = &si.v;
                }
            }
            iou_acc += best_iou;
            ciou_acc += best ? ciou(v.points, best->points) : 0.0;
            ++iou_n;
            if (best) {
                polis_acc += polis(v.points, best->points);
                ++polis_n;
            }
        }

        const PixelCounts c =
            pixel_counts(pred_scene, gt, opt.pixel_tol, opt.stroke_px);
        pix.pred_total += c.pred_total;
        pix.pred_hit += c.pred_hit;
        pix.gt_total += c.gt_total;
        pix.gt_hit += c.gt_hit;

        const RoadGraph gt_graph = build_graph(gt);
        if (!gt_graph.nodes.empty())
            apls_values.push_back(apls(build_graph(pred_scene), gt_graph,
                                       opt.apls_samples, opt.seed + scene_idx));
        ++scene_idx;
    }

    rep.map = coco_map(det_polys, gt_polys);
    rep.iou = iou_n ? iou_acc / iou_n : 1.0;
    rep.ciou = iou_n ? ciou_acc / iou_n : 1.0;
    rep.polis = polis_n ? polis_acc / polis_n : 0.0;
    const Prf prf = prf_from_counts(pix);
    rep.precision = prf.precision;
    rep.recall = prf.recall;
    rep.f1 = prf.f1;
    rep.apls = apls_values.empty()
                   ? 1.0
                   : std::accumulate(apls_values.begin(), apls_values.end(), 0.0) /
                         apls_values.size();
    const SapSf s = sap_sf(det_segs, gt_segs, opt.sap_thr_lo, opt.sap_thr_hi);
    rep.sap10 = s.sap10;
    rep.sap15 = s.sap15;
    rep.sf10 = s.sf10;
    rep.sf15 = s.sf15;
    return rep;
}

} // namespace univec
