#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "univec/params.hpp"

namespace univec {

constexpr double kSigmoidEps = 1e-6;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// clamped logit: input is pulled into [eps, 1-eps] before inversion
inline double inverse_sigmoid(double p, double eps = kSigmoidEps) {
    p = std::clamp(p, eps, 1.0 - eps);
    return std::log(p / (1.0 - p));
}

// sigmoid-space update sigma(sigma^-1(base) + off), kept strictly inside
// (0, 1) and exact (not just up to rounding) when the offset is zero
inline double sigmoid_shift(double base, double off) {
    if (off == 0.0) return std::clamp(base, kSigmoidEps, 1.0 - kSigmoidEps);
    return std::clamp(sigmoid(inverse_sigmoid(base) + off), kSigmoidEps,
                      1.0 - kSigmoidEps);
}

namespace nn {

// row-wise softmax
inline Eigen::MatrixXd softmax_rows(Eigen::MatrixXd logits) {
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        Eigen::ArrayXd row = logits.row(r).array();
        row -= row.maxCoeff();
        row = row.exp();
        logits.row(r) = row / row.sum();
    }
    return logits;
}

// Multi-head scaled dot-product attention over token rows. Returns the
// attention update only; residual wiring is the caller's business.
inline Eigen::MatrixXd mha(const Eigen::MatrixXd& query_tokens,
                           const Eigen::MatrixXd& kv_tokens,
                           const ParameterSet& p, const std::string& prefix,
                           int heads) {
    const Eigen::MatrixXd Q = query_tokens * p.get(prefix + ".wq").transpose();
    const Eigen::MatrixXd K = kv_tokens * p.get(prefix + ".wk").transpose();
    const Eigen::MatrixXd V = kv_tokens * p.get(prefix + ".wv").transpose();
    const int C = static_cast<int>(Q.cols());
    const int d = C / heads;

    Eigen::MatrixXd concat(Q.rows(), C);
    for (int h = 0; h < heads; ++h) {
        const auto Qh = Q.middleCols(h * d, d);
        const auto Kh = K.middleCols(h * d, d);
        const auto Vh = V.middleCols(h * d, d);
        const Eigen::MatrixXd attn =
            softmax_rows(Qh * Kh.transpose() / std::sqrt(static_cast<double>(d)));
        concat.middleCols(h * d, d) = attn * Vh;
    }
    return concat * p.get(prefix + ".wo").transpose();
}

inline Eigen::MatrixXd ffn(const Eigen::MatrixXd& x, const ParameterSet& p,
                           const std::string& prefix) {
    Eigen::MatrixXd h = x * p.get(prefix + ".w1").transpose();
    h.rowwise() += p.get(prefix + ".b1").col(0).transpose();
    h = h.cwiseMax(0.0);
    Eigen::MatrixXd out = h * p.get(prefix + ".w2").transpose();
    out.rowwise() += p.get(prefix + ".b2").col(0).transpose();
    return out;
}

// two-layer ReLU MLP
inline Eigen::MatrixXd mlp2(const Eigen::MatrixXd& x, const ParameterSet& p,
                            const std::string& prefix) {
    Eigen::MatrixXd h = x * p.get(prefix + ".w1").transpose();
    h.rowwise() += p.get(prefix + ".b1").col(0).transpose();
    h = h.cwiseMax(0.0);
    Eigen::MatrixXd out = h * p.get(prefix + ".w2").transpose();
    out.rowwise() += p.get(prefix + ".b2").col(0).transpose();
    return out;
}

// self-attention + FFN, both residual
inline Eigen::MatrixXd attn_block(const Eigen::MatrixXd& x, const ParameterSet& p,
                                  const std::string& prefix, int heads) {
    Eigen::MatrixXd y = x + mha(x, x, p, prefix, heads);
    return y + ffn(y, p, prefix + ".ffn");
}

// cross-attention + FFN, both residual
inline Eigen::MatrixXd cross_block(const Eigen::MatrixXd& q, const Eigen::MatrixXd& kv,
                                   const ParameterSet& p, const std::string& prefix,
                                   int heads) {
    Eigen::MatrixXd y = q + mha(q, kv, p, prefix, heads);
    return y + ffn(y, p, prefix + ".ffn");
}

} // namespace nn
} // namespace univec
