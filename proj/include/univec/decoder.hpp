#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "univec/encoder.hpp"
#include "univec/nn.hpp"

namespace univec {

struct ReferenceState {
    std::vector<Point> r_ins;              // N
    std::vector<std::vector<Point>> r_geo; // N x M
    int layer = 0;
};

struct Prediction {
    Eigen::MatrixXd class_logits;            // N x (num_classes + 1), background last
    std::vector<std::array<double, 4>> bbox; // (cx, cy, w, h) in (0,1)
    std::vector<std::vector<Point>> points;  // N x M
    Eigen::MatrixXd keypoint_prob;           // N x M, in (0,1)
    int layer = 0;

    BBox corner_box(int i) const {
        const auto& b = bbox[i];
        return {std::clamp(b[0] - b[2] / 2, 0.0, 1.0),
                std::clamp(b[1] - b[3] / 2, 0.0, 1.0),
                std::clamp(b[0] + b[2] / 2, 0.0, 1.0),
                std::clamp(b[1] + b[3] / 2, 0.0, 1.0)};
    }
};

struct DecodeState {
    Eigen::MatrixXd q_ins;                // N x C
    std::vector<Eigen::MatrixXd> q_geo;   // N of M x C
    std::vector<Point> r_ins;             // N
    std::vector<std::vector<Point>> r_geo; // N x M
};

constexpr double kDefaultBoxSize = 0.1;

// Eq.-style sigmoid-space reference update: layer 0 broadcasts R_ins, later
// layers refine the previous layer's R_geo.
inline std::vector<std::vector<Point>> update_geo_refs(
    int layer, const std::vector<Point>& r_ins,
    const std::vector<std::vector<Point>>& r_geo_prev,
    const std::vector<Eigen::MatrixXd>& q_geo, const ParameterSet& p,
    const std::string& prefix) {
    const int N = static_cast<int>(q_geo.size());
    std::vector<std::vector<Point>> out(N);
    for (int i = 0; i < N; ++i) {
        const Eigen::MatrixXd off = nn::mlp2(q_geo[i], p, prefix); // M x 2
        const int M = static_cast<int>(off.rows());
        out[i].resize(M);
        for (int j = 0; j < M; ++j) {
            const Point base = layer == 0 ? r_ins[i] : r_geo_prev[i][j];
            out[i][j] = {sigmoid_shift(base.x, off(j, 0)),
                        sigmoid_shift(base.y, off(j, 1))};
        }
    }
    return out;
}

// Structured deformable feature extraction over all N x (M+1) queries;
// the weighted feature sum is added residually.
inline void structured_deform_attn(DecodeState& st, const FeaturePyramid& pyr,
                                   const ParameterSet& p, const std::string& prefix) {
    const int N = static_cast<int>(st.q_geo.size());
    for (int i = 0; i < N; ++i) {
        st.q_ins.row(i) +=
            nn::deform_update(st.q_ins.row(i), st.r_ins[i], pyr, p, prefix).transpose();
        const int M = static_cast<int>(st.q_geo[i].rows());
        for (int j = 0; j < M; ++j)
            st.q_geo[i].row(j) +=
                nn::deform_update(st.q_geo[i].row(j), st.r_geo[i][j], pyr, p, prefix)
                    .transpose();
    }
}

// Single-level interaction: self-attention across instances for Q_ins and
// per-instance self-attention across the M points for Q_geo.
inline void intra_level_interaction(DecodeState& st, const ParameterSet& p,
                                    const std::string& layer_prefix, int heads) {
    st.q_ins = nn::attn_block(st.q_ins, p, layer_prefix + ".intra_ins", heads);
    for (auto& g : st.q_geo)
        g = nn::attn_block(g, p, layer_prefix + ".intra_geo", heads);
}

// Cross-level interaction; both directions read the primed inputs so the two
// updates commute.
inline void cross_level_interaction(DecodeState& st, const ParameterSet& p,
                                    const std::string& layer_prefix, int heads) {
    const Eigen::MatrixXd q_ins_in = st.q_ins;
    const std::vector<Eigen::MatrixXd> q_geo_in = st.q_geo;
    const int N = static_cast<int>(q_geo_in.size());
    for (int i = 0; i < N; ++i) {
        st.q_ins.row(i) = nn::cross_block(q_ins_in.row(i), q_geo_in[i], p,
                                          layer_prefix + ".cross_ins", heads);
        st.q_geo[i] = nn::cross_block(q_geo_in[i], q_ins_in.row(i), p,
                                      layer_prefix + ".cross_geo", heads);
    }
}

inline Prediction predict_heads(const DecodeState& st, const ParameterSet& p,
                                const std::string& layer_prefix, int layer) {
    const int N = static_cast<int>(st.q_geo.size());
    Prediction pred;
    pred.layer = layer;
    pred.class_logits = st.q_ins * p.get(layer_prefix + ".head.cls.w").transpose();
    pred.class_logits.rowwise() +=
        p.get(layer_prefix + ".head.cls.b").col(0).transpose();

    const Eigen::MatrixXd box_off = nn::mlp2(st.q_ins, p, layer_prefix + ".head.bbox");
    pred.bbox.resize(N);
    pred.points.resize(N);
    const auto& kw = p.get(layer_prefix + ".head.kp.w");
    const double kb = p.get(layer_prefix + ".head.kp.b")(0, 0);
    for (int i = 0; i < N; ++i) {
        pred.bbox[i] = {sigmoid_shift(st.r_ins[i].x, box_off(i, 0)),
                        sigmoid_shift(st.r_ins[i].y, box_off(i, 1)),
                        sigmoid_shift(kDefaultBoxSize, box_off(i, 2)),
                        sigmoid_shift(kDefaultBoxSize, box_off(i, 3))};
        const Eigen::MatrixXd pt_off = nn::mlp2(st.q_geo[i], p, layer_prefix + ".head.pts");
        const int M = static_cast<int>(pt_off.rows());
        pred.points[i].resize(M);
        if (pred.keypoint_prob.rows() != N) pred.keypoint_prob.resize(N, M);
        for (int j = 0; j < M; ++j) {
            pred.points[i][j] = {sigmoid_shift(st.r_geo[i][j].x, pt_off(j, 0)),
                                sigmoid_shift(st.r_geo[i][j].y, pt_off(j, 1))};
            pred.keypoint_prob(i, j) =
                sigmoid((kw * st.q_geo[i].row(j).transpose())(0) + kb);
        }
    }
    return pred;
}

// Full instance-geometry interactive decoding: L layers of reference update,
// structured deformable extraction, intra- and cross-level interaction, with
// per-layer auxiliary predictions. The last prediction is the final one.
inline std::vector<Prediction> decode(const InstanceState& init,
                                      const FeaturePyramid& pyr,
                                      const ParameterSet& p, const Config& cfg) {
    DecodeState st;
    st.q_ins = init.q_ins;
    st.r_ins = init.r_ins;
    st.q_geo = shape_deformation(init_geometric_queries(st.q_ins, p.get("embed.V")), p,
                                 cfg.heads);
    st.r_geo.assign(st.q_geo.size(), {});

    std::vector<Prediction> out;
    for (int l = 0; l < cfg.L; ++l) {
        const std::string pre = "dec" + std::to_string(l);
        st.r_geo = update_geo_refs(l, st.r_ins, st.r_geo, st.q_geo, p, pre + ".georef");
        structured_deform_attn(st, pyr, p, pre + ".deform");
        intra_level_interaction(st, p, pre, cfg.heads);
        cross_level_interaction(st, p, pre, cfg.heads);
        Prediction pred = predict_heads(st, p, pre, l);
        // instance references follow the box center, as in detection decoders
        for (std::size_t i = 0; i < st.r_ins.size(); ++i)
            st.r_ins[i] = {pred.bbox[i][0], pred.bbox[i][1]};
        out.push_back(std::move(pred));
    }
    return out;
}

// Key-point filtering: keep points with probability >= tau in sequence order,
// backfilling the kind's minimum from the highest-probability points.
inline std::vector<ScoredInstance> extract_vectors(const Prediction& pred,
                                                   const Config& cfg) {
    std::vector<ScoredInstance> out;
    const int N = static_cast<int>(pred.points.size());
    const int ncls = cfg.class_table.num_classes();
    for (int i = 0; i < N; ++i) {
        Eigen::VectorXd probs =
            nn::softmax_rows(pred.class_logits.row(i)).row(0).transpose();
        // detection convention: score = best foreground probability, with the
        // background column only competing through the softmax normalization
        int best = 0;
        for (int c = 1; c < ncls; ++c)
            if (probs[c] > probs[best]) best = c;
        if (probs[best] < cfg.instance_threshold) continue;

        const StructureKind kind = cfg.class_table.kind_of(best);
        const int M = static_cast<int>(pred.points[i].size());
        std::vector<int> keep;
        for (int j = 0; j < M; ++j)
            if (pred.keypoint_prob(i, j) >= cfg.keypoint_threshold) keep.push_back(j);
        const int need = min_points(kind);
        if (static_cast<int>(keep.size()) < need) {
            std::vector<int> order(M);
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
                return pred.keypoint_prob(i, a) > pred.keypoint_prob(i, b);
            });
            keep.assign(order.begin(), order.begin() + need);
            std::sort(keep.begin(), keep.end());
        }
        if (kind == StructureKind::Segment && keep.size() > 2) {
            // segments carry exactly two key points: keep the strongest pair
            std::stable_sort(keep.begin(), keep.end(), [&](int a, int b) {
                return pred.keypoint_prob(i, a) > pred.keypoint_prob(i, b);
            });
            keep.resize(2);
            std::sort(keep.begin(), keep.end());
        }

        ScoredInstance si;
        si.v.kind = kind;
        si.v.class_id = best;
        si.v.id = i;
        si.score = probs[best];
        for (int j : keep) {
            si.v.points.push_back(pred.points[i][j]);
            si.kp_prob.push_back(pred.keypoint_prob(i, j));
        }
        out.push_back(std::move(si));
    }
    return out;
}

} // namespace univec
