#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "univec/decoder.hpp"
#include "univec/sampling.hpp"
#include "univec/types.hpp"

namespace univec {

struct LossWeights {
    double alpha_p = 1.0;   // point term in the matching cost
    double alpha_c = 1.0;   // key-point-probability term in the matching cost
    double alpha_dir = 0.1; // direction loss
    double alpha_kp = 1.0;  // key-point l1 loss (kp : dir kept at 10 : 1)
    double alpha_cls = 1.0; // key-point classification loss
};

enum class MatchMode { Monotone, Hungarian };

struct MatchProblem {
    std::vector<Point> pred_points; // M predicted points
    std::vector<double> pred_probs; // M key-point probabilities
    std::vector<Point> gt_points;   // T ground-truth key points (forward order)
    StructureKind kind = StructureKind::Polygon;
};

struct MatchResult {
    std::vector<int> beta;       // beta[i] = matched prediction index for GT point i
    double cost = 0.0;           // matching cost at beta (Eq.-7 style, mean over T)
    Orientation orientation = Orientation::Canonical;
    std::vector<Point> matched;  // the matched key sequence from the predictions
    std::vector<Point> gt_used;  // GT sequence in the chosen orientation
};

namespace detail {

constexpr double kInf = std::numeric_limits<double>::infinity();

inline std::vector<std::vector<double>> match_costs(const std::vector<Point>& gt,
                                                    const std::vector<Point>& pred,
                                                    const std::vector<double>& probs,
                                                    double alpha_p, double alpha_c) {
    const std::size_t T = gt.size(), M = pred.size();
    std::vector<std::vector<double>> c(T, std::vector<double>(M));
    for (std::size_t i = 0; i < T; ++i)
        for (std::size_t j = 0; j < M; ++j)
            c[i][j] = alpha_p * l1_dist(gt[i], pred[j]) +
                      alpha_c * std::abs(1.0 - probs[j]); // GT key labels are 1
    return c;
}

// Order-preserving alignment by DP over strictly increasing injections,
// O(T*M). Ties resolve to the lexicographically smallest beta.
inline std::pair<std::vector<int>, double> monotone_align(
    const std::vector<std::vector<double>>& cost) {
    const int T = static_cast<int>(cost.size());
    const int M = static_cast<int>(cost[0].size());
    // D[i][j]: best cost matching gt i.. against preds j..
    std::vector<std::vector<double>> D(T + 1, std::vector<double>(M + 1, 0.0));
    for (int i = T - 1; i >= 0; --i)
        for (int j = M; j >= 0; --j) {
            if (M - j < T - i) {
                D[i][j] = kInf;
                continue;
            }
            D[i][j] = cost[i][j] + D[i + 1][j + 1];
            if (j + 1 <= M && M - (j + 1) >= T - i)
                D[i][j] = std::min(D[i][j], D[i][j + 1]);
        }
    std::vector<int> beta(T);
    int j = 0;
    for (int i = 0; i < T; ++i) {
        while (true) {
            const double take = cost[i][j] + D[i + 1][j + 1];
            const bool can_skip = M - (j + 1) >= T - i;
            if (!can_skip || take <= D[i][j + 1]) break;
            ++j;
        }
        beta[i] = j++;
    }
    return {beta, D[0][0]};
}

// Shortest-augmenting-path assignment for rectangular costs (rows <= cols).
inline std::pair<std::vector<int>, double> hungarian(
    const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    const int m = static_cast<int>(cost[0].size());
    if (n > m) throw std::invalid_argument("hungarian: more rows than columns");
    std::vector<double> u(n + 1), v(m + 1);
    std::vector<int> p(m + 1, 0), way(m + 1, 0); // p[col] = row (1-based)
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(m + 1, kInf);
        std::vector<char> used(m + 1, false);
        do {
            used[j0] = true;
            const int i0 = p[j0];
            double delta = kInf;
            int j1 = -1;
            for (int j = 1; j <= m; ++j)
                if (!used[j]) {
                    const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if (cur < minv[j]) {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if (minv[j] < delta) {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            for (int j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> row_to_col(n, -1);
    double total = 0.0;
    for (int j = 1; j <= m; ++j)
        if (p[j] != 0) {
            row_to_col[p[j] - 1] = j - 1;
            total += cost[p[j] - 1][j - 1];
        }
    return {row_to_col, total};
}

} // namespace detail

// Eq.-7/8 key-point dynamic matching. Open kinds are matched against both GT
// orientations and the cheaper one wins (ties -> forward).
inline MatchResult point_match(const MatchProblem& prob, double alpha_p,
                               double alpha_c, MatchMode mode = MatchMode::Monotone) {
    const std::size_t T = prob.gt_points.size();
    const std::size_t M = prob.pred_points.size();
    if (T > M) throw std::invalid_argument("point_match: T > M");
    if (T == 0) throw std::invalid_argument("point_match: empty ground truth");

    std::vector<std::pair<Orientation, std::vector<Point>>> candidates;
    candidates.emplace_back(Orientation::Canonical, prob.gt_points);
    if (!is_closed(prob.kind)) {
        std::vector<Point> rev(prob.gt_points.rbegin(), prob.gt_points.rend());
        candidates.emplace_back(Orientation::Reversed, std::move(rev));
    }

    MatchResult best;
    best.cost = detail::kInf;
    for (auto& [orient, gt] : candidates) {
        const auto cost =
            detail::match_costs(gt, prob.pred_points, prob.pred_probs, alpha_p, alpha_c);
        auto [beta, raw] = mode == MatchMode::Monotone ? detail::monotone_align(cost)
                                                       : detail::hungarian(cost);
        const double mean_cost = raw / static_cast<double>(T);
        if (mean_cost < best.cost) { // strict: ties keep the forward orientation
            best.beta = std::move(beta);
            best.cost = mean_cost;
            best.orientation = orient;
            best.gt_used = gt;
        }
    }
    best.matched.resize(T);
    for (std::size_t i = 0; i < T; ++i) best.matched[i] = prob.pred_points[best.beta[i]];
    return best;
}

// Eq. 9, implemented as mean(1 - cos) over paired edges so that perfectly
// aligned shapes score 0. Closed kinds wrap around (T edges), open kinds have
// T-1 edges; a zero-length edge contributes the worst case 1.
inline double loss_dir(const std::vector<Point>& pred_keys,
                       const std::vector<Point>& gt_keys, StructureKind kind) {
    const std::size_t T = gt_keys.size();
    if (pred_keys.size() != T) throw std::invalid_argument("loss_dir: length mismatch");
    if (T < 2) throw std::invalid_argument("loss_dir: need at least 2 points");
    const std::size_t edges = is_closed(kind) ? T : T - 1;
    double acc = 0.0;
    for (std::size_t e = 0; e < edges; ++e) {
        const Point u = pred_keys[(e + 1) % T] - pred_keys[e];
        const Point v = gt_keys[(e + 1) % T] - gt_keys[e];
        const double nu = std::hypot(u.x, u.y), nv = std::hypot(v.x, v.y);
        if (nu < 1e-12 || nv < 1e-12) {
            acc += 1.0;
            continue;
        }
        acc += 1.0 - (u.x * v.x + u.y * v.y) / (nu * nv);
    }
    return acc / static_cast<double>(edges);
}

// Eq. 10: mean l1 distance over matched pairs.
inline double loss_kp(const std::vector<Point>& pred_keys,
                      const std::vector<Point>& gt_keys) {
    if (pred_keys.size() != gt_keys.size())
        throw std::invalid_argument("loss_kp: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred_keys.size(); ++i)
        acc += l1_dist(pred_keys[i], gt_keys[i]);
    return acc / static_cast<double>(pred_keys.size());
}

constexpr double kProbClamp = 1e-7;

// Eq. 11: BCE on key-point probabilities against matched-set membership,
// normalized by M.
inline double loss_cls(const std::vector<double>& probs,
                       const std::vector<int>& matched_indices) {
    const std::size_t M = probs.size();
    std::vector<char> is_key(M, 0);
    for (int j : matched_indices) is_key[j] = 1;
    double acc = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
        const double c = std::clamp(probs[i], kProbClamp, 1.0 - kProbClamp);
        acc += is_key[i] ? -std::log(c) : -std::log(1.0 - c);
    }
    return acc / static_cast<double>(M);
}

struct VslResult {
    double total = 0.0;
    double dir = 0.0, kp = 0.0, cls = 0.0;
    MatchResult match;
    std::vector<Point> grad_points; // d total / d pred_points, M entries
    std::vector<double> grad_probs; // d total / d pred_probs, M entries
};

namespace detail {
inline double sgn(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }
}

// Eq. 12 with analytic gradients; the matching beta* is held fixed during
// differentiation.
inline VslResult loss_vsl(const MatchProblem& prob, const LossWeights& w,
                          MatchMode mode = MatchMode::Monotone) {
    VslResult r;
    r.match = point_match(prob, w.alpha_p, w.alpha_c, mode);
    const std::size_t T = r.match.beta.size();
    const std::size_t M = prob.pred_points.size();
    const auto& pk = r.match.matched;
    const auto& gt = r.match.gt_used;

    r.dir = loss_dir(pk, gt, prob.kind);
    r.kp = loss_kp(pk, gt);
    r.cls = loss_cls(prob.pred_probs, r.match.beta);
    r.total = w.alpha_dir * r.dir + w.alpha_kp * r.kp + w.alpha_cls * r.cls;

    r.grad_points.assign(M, Point{0, 0});
    r.grad_probs.assign(M, 0.0);

    // L_kp: l1 subgradient on matched points
    for (std::size_t i = 0; i < T; ++i) {
        Point& g = r.grad_points[r.match.beta[i]];
        g.x += w.alpha_kp / T * detail::sgn(pk[i].x - gt[i].x);
        g.y += w.alpha_kp / T * detail::sgn(pk[i].y - gt[i].y);
    }

    // L_dir: gradient of 1 - cos through each predicted edge
    const std::size_t edges = is_closed(prob.kind) ? T : T - 1;
    for (std::size_t e = 0; e < edges; ++e) {
        const std::size_t a = e, b = (e + 1) % T;
        const Point u = pk[b] - pk[a];
        const Point v = gt[b] - gt[a];
        const double nu = std::hypot(u.x, u.y), nv = std::hypot(v.x, v.y);
        if (nu < 1e-12 || nv < 1e-12) continue; // flat worst-case region
        const double c = (u.x * v.x + u.y * v.y) / (nu * nv);
        const double s = w.alpha_dir / static_cast<double>(edges);
        const Point dcos_du{v.x / (nu * nv) - c * u.x / (nu * nu),
                            v.y / (nu * nv) - c * u.y / (nu * nu)};
        const Point g{-s * dcos_du.x, -s * dcos_du.y};
        r.grad_points[r.match.beta[b]].x += g.x;
        r.grad_points[r.match.beta[b]].y += g.y;
        r.grad_points[r.match.beta[a]].x -= g.x;
        r.grad_points[r.match.beta[a]].y -= g.y;
    }

    // L_cls: BCE derivative, flat inside the clamp margins
    std::vector<char> is_key(M, 0);
    for (int j : r.match.beta) is_key[j] = 1;
    for (std::size_t i = 0; i < M; ++i) {
        const double c = prob.pred_probs[i];
        if (c <= kProbClamp || c >= 1.0 - kProbClamp) continue;
        r.grad_probs[i] = w.alpha_cls / M * (is_key[i] ? -1.0 / c : 1.0 / (1.0 - c));
    }
    return r;
}

struct FitResult {
    std::vector<Point> points;
    std::vector<double> probs;
    std::vector<double> loss_trajectory;
    MatchResult final_match;
};

// Plain gradient descent on the vector shape loss, re-solving beta* each step.
inline FitResult descent_fit(std::vector<Point> points, std::vector<double> probs,
                             const std::vector<Point>& gt, StructureKind kind,
                             const LossWeights& w, int steps, double lr,
                             MatchMode mode = MatchMode::Monotone) {
    if (steps < 1) throw std::invalid_argument("descent_fit: steps >= 1");
    FitResult out;
    for (int step = 0; step < steps; ++step) {
        MatchProblem prob{points, probs, gt, kind};
        VslResult r = loss_vsl(prob, w, mode);
        out.loss_trajectory.push_back(r.total);
        for (std::size_t i = 0; i < points.size(); ++i) {
            points[i].x = std::clamp(points[i].x - lr * r.grad_points[i].x, 0.0, 1.0);
            points[i].y = std::clamp(points[i].y - lr * r.grad_points[i].y, 0.0, 1.0);
            probs[i] = std::clamp(probs[i] - lr * r.grad_probs[i], 0.0, 1.0);
        }
        if (step + 1 == steps) out.final_match = std::move(r.match);
    }
    out.points = std::move(points);
    out.probs = std::move(probs);
    return out;
}

// ---------------------------------------------------------------------------
// Instance-level assignment (set-prediction style)
// ---------------------------------------------------------------------------

struct InstanceAssignment {
    std::vector<int> gt_to_pred; // per GT instance, matched prediction index
    double total_cost = 0.0;
};

// One-to-one assignment between decoder predictions and GT instances via
// exact optimal assignment on class + best-orientation point costs.
inline InstanceAssignment instance_match(const Prediction& pred, const Scene& gt,
                                         const Config& cfg, double lambda_cls = 2.0,
                                         double lambda_pts = 5.0) {
    const int N = static_cast<int>(pred.points.size());
    const int G = static_cast<int>(gt.instances.size());
    InstanceAssignment out;
    if (G == 0) return out;
    if (G > N) throw std::invalid_argument("instance_match: more GT than predictions");

    std::vector<std::vector<double>> cost(G, std::vector<double>(N));
    for (int g = 0; g < G; ++g) {
        const VectorInstance& v = gt.instances[g];
        const auto candidates = orientation_candidates(v, cfg.M);
        for (int i = 0; i < N; ++i) {
            Eigen::VectorXd probs =
                nn::softmax_rows(pred.class_logits.row(i)).row(0).transpose();
            double pts_best = detail::kInf;
            for (const auto& cand : candidates) {
                double acc = 0.0;
                for (int j = 0; j < cfg.M; ++j)
                    acc += l1_dist(pred.points[i][j], cand.points[j]);
                pts_best = std::min(pts_best, acc / cfg.M);
            }
            cost[g][i] = lambda_cls * (1.0 - probs[v.class_id]) + lambda_pts * pts_best;
        }
    }
    auto [assign, total] = detail::hungarian(cost);
    out.gt_to_pred = std::move(assign);
    out.total_cost = total;
    return out;
}

} // namespace univec
