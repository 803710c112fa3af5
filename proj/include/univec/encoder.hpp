#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "univec/featstub.hpp"
#include "univec/nn.hpp"
#include "univec/params.hpp"

namespace univec {

struct CoarseTokens {
    Eigen::MatrixXd features;     // K x C
    std::vector<Point> locations; // token centers, normalized
    Eigen::VectorXd scores;       // non-increasing
};

struct InstanceState {
    Eigen::MatrixXd q_ins;        // N x C
    std::vector<Point> r_ins;     // N reference points in (0,1)
    Eigen::VectorXd coarse_scores;
};

namespace nn {

// Deformable sampling update for one query: offsets and weights are linear
// in the query, the E points are split evenly across pyramid levels and the
// softmax runs jointly over all E.
inline Eigen::VectorXd deform_update(const Eigen::VectorXd& q, Point ref,
                                     const FeaturePyramid& pyr,
                                     const ParameterSet& p,
                                     const std::string& prefix) {
    const Eigen::VectorXd off =
        p.get(prefix + ".offset_w") * q + p.get(prefix + ".offset_b").col(0);
    Eigen::VectorXd logits =
        p.get(prefix + ".weight_w") * q + p.get(prefix + ".weight_b").col(0);
    const int E = static_cast<int>(logits.size());
    logits.array() -= logits.maxCoeff();
    Eigen::VectorXd w = logits.array().exp();
    w /= w.sum();

    const int n_levels = static_cast<int>(pyr.levels.size());
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(q.size());
    for (int k = 0; k < E; ++k) {
        const int level = k * n_levels / E; // even split across levels
        const Point s{ref.x + off[2 * k], ref.y + off[2 * k + 1]};
        acc += w[k] * bilinear_sample(pyr.levels[level], s);
    }
    return acc;
}

} // namespace nn

// Flattens every pyramid cell as a token in (level, row, col) order, scores
// them linearly, and keeps the top K (ties broken by flat index).
inline CoarseTokens select_coarse_queries(const FeaturePyramid& pyr,
                                          const ParameterSet& p, int K) {
    const int total = pyr.total_tokens();
    if (K > total)
        throw std::invalid_argument("select_coarse_queries: K exceeds token count");

    const auto& sw = p.get("scorer.w");
    const double sb = p.get("scorer.b")(0, 0);

    std::vector<double> scores(total);
    std::vector<const double*> cells(total);
    std::vector<Point> locs(total);
    int idx = 0;
    for (const FeatureLevel& lvl : pyr.levels)
        for (int y = 0; y < lvl.size; ++y)
            for (int x = 0; x < lvl.size; ++x, ++idx) {
                const double* c = lvl.cell(x, y);
                double s = sb;
                for (int i = 0; i < lvl.channels; ++i) s += sw(0, i) * c[i];
                scores[idx] = s;
                cells[idx] = c;
                locs[idx] = {(x + 0.5) / lvl.size, (y + 0.5) / lvl.size};
            }

    std::vector<int> order(total);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });

    const int C = pyr.levels.front().channels;
    CoarseTokens out;
    out.features.resize(K, C);
    out.locations.resize(K);
    out.scores.resize(K);
    for (int k = 0; k < K; ++k) {
        const int i = order[k];
        for (int c = 0; c < C; ++c) out.features(k, c) = cells[i][c];
        out.locations[k] = locs[i];
        out.scores[k] = scores[i];
    }
    return out;
}

// Two-layer refinement decoder over the coarse tokens, then re-score and keep
// the top N as instance queries. R_ins = token center nudged by a learned
// offset in inverse-sigmoid space.
inline InstanceState refine_instance_queries(const CoarseTokens& coarse,
                                             const FeaturePyramid& pyr,
                                             const ParameterSet& p, int N,
                                             int heads = 8) {
    const int K = static_cast<int>(coarse.features.rows());
    if (N > K) throw std::invalid_argument("refine_instance_queries: N > K");

    Eigen::MatrixXd X = coarse.features;
    for (int l = 0; l < 2; ++l) {
        const std::string pre = "refine" + std::to_string(l);
        X = X + nn::mha(X, X, p, pre + ".self", heads);
        const auto& out_w = p.get(pre + ".cross.out_w");
        for (int k = 0; k < K; ++k)
            X.row(k) += (out_w * nn::deform_update(X.row(k), coarse.locations[k], pyr,
                                                   p, pre + ".cross"))
                            .transpose();
        X = X + nn::ffn(X, p, pre + ".ffn");
    }

    Eigen::VectorXd rescored =
        (X * p.get("rescore.w").transpose()).col(0).array() + p.get("rescore.b")(0, 0);
    std::vector<int> order(K);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (rescored[a] != rescored[b]) return rescored[a] > rescored[b];
        return a < b;
    });

    const auto& ow = p.get("rins_offset.w");
    const auto& ob = p.get("rins_offset.b");
    InstanceState st;
    st.q_ins.resize(N, X.cols());
    st.r_ins.resize(N);
    st.coarse_scores = coarse.scores;
    for (int i = 0; i < N; ++i) {
        const int k = order[i];
        st.q_ins.row(i) = X.row(k);
        const Eigen::VectorXd d = ow * X.row(k).transpose() + ob.col(0);
        st.r_ins[i] = {sigmoid_shift(coarse.locations[k].x, d[0]),
                       sigmoid_shift(coarse.locations[k].y, d[1])};
    }
    return st;
}

// Q_geo^c[i, j] = Q_ins[i] + V[j]
inline std::vector<Eigen::MatrixXd> init_geometric_queries(const Eigen::MatrixXd& q_ins,
                                                           const Eigen::MatrixXd& V) {
    std::vector<Eigen::MatrixXd> out;
    out.reserve(q_ins.rows());
    for (Eigen::Index i = 0; i < q_ins.rows(); ++i) {
        Eigen::MatrixXd g = V;
        g.rowwise() += q_ins.row(i);
        out.push_back(std::move(g));
    }
    return out;
}

// Intra-instance self-attention over the M point queries (no flow across
// instances), residual + feed-forward.
inline std::vector<Eigen::MatrixXd> shape_deformation(
    const std::vector<Eigen::MatrixXd>& q_geo_coarse, const ParameterSet& p,
    int heads = 8) {
    std::vector<Eigen::MatrixXd> out;
    out.reserve(q_geo_coarse.size());
    for (const auto& g : q_geo_coarse)
        out.push_back(nn::attn_block(g, p, "shapedef", heads));
    return out;
}

} // namespace univec
