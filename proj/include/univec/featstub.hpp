#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "univec/raster.hpp"
#include "univec/rng.hpp"
#include "univec/types.hpp"

namespace univec {

struct FeatureLevel {
    int size = 0;   // cells per side (square)
    int factor = 1; // down-sampling factor relative to the raster
    int channels = 0;
    std::vector<double> data; // row-major, data[(y*size + x)*channels + c]

    const double* cell(int x, int y) const {
        return data.data() + (static_cast<std::size_t>(y) * size + x) * channels;
    }
};

struct FeaturePyramid {
    std::vector<FeatureLevel> levels;
    int total_tokens() const {
        int n = 0;
        for (const auto& l : levels) n += l.size * l.size;
        return n;
    }
};

namespace detail {

constexpr int kRawChannels = 6;

// raw channels: intensity, horizontal gradient, vertical gradient,
// normalized distance-to-lit, x coordinate map, y coordinate map
inline std::vector<double> raw_channels(const RasterImage& img) {
    const int S = img.size;
    const std::vector<double> dt = distance_transform(img);
    std::vector<double> raw(static_cast<std::size_t>(S) * S * kRawChannels);
    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
            double* c = raw.data() + (static_cast<std::size_t>(y) * S + x) * kRawChannels;
            c[0] = img.at(x, y);
            c[1] = 0.5 * (img.at(std::min(x + 1, S - 1), y) - img.at(std::max(x - 1, 0), y));
            c[2] = 0.5 * (img.at(x, std::min(y + 1, S - 1)) - img.at(x, std::max(y - 1, 0)));
            c[3] = std::min(dt[static_cast<std::size_t>(y) * S + x] / S, 1.0);
            c[4] = (x + 0.5) / S;
            c[5] = (y + 0.5) / S;
        }
    return raw;
}

} // namespace detail

inline FeaturePyramid build_pyramid(const RasterImage& img, const Config& cfg,
                                    std::uint64_t seed) {
    const int S = img.size;
    const std::vector<double> raw = detail::raw_channels(img);

    // seeded fixed projection, scaled-uniform by fan-in/out
    Rng rng(seed, 0x66656174ULL); // "feat" stream
    const double limit = std::sqrt(6.0 / (detail::kRawChannels + cfg.C));
    Eigen::MatrixXd W(cfg.C, detail::kRawChannels);
    for (int i = 0; i < cfg.C; ++i)
        for (int j = 0; j < detail::kRawChannels; ++j)
            W(i, j) = rng.uniform(-limit, limit);

    FeaturePyramid pyr;
    for (int factor : cfg.scales) {
        FeatureLevel lvl;
        lvl.factor = factor;
        lvl.size = (S + factor - 1) / factor;
        lvl.channels = cfg.C;
        lvl.data.assign(static_cast<std::size_t>(lvl.size) * lvl.size * cfg.C, 0.0);

        // average-pool the raw channels into each cell, then project to C
        std::vector<double> pooled(detail::kRawChannels);
        std::vector<int> counts;
        for (int cy = 0; cy < lvl.size; ++cy)
            for (int cx = 0; cx < lvl.size; ++cx) {
                std::fill(pooled.begin(), pooled.end(), 0.0);
                int count = 0;
                for (int y = cy * factor; y < std::min((cy + 1) * factor, S); ++y)
                    for (int x = cx * factor; x < std::min((cx + 1) * factor, S); ++x) {
                        const double* c =
                            raw.data() + (static_cast<std::size_t>(y) * S + x) * detail::kRawChannels;
                        for (int k = 0; k < detail::kRawChannels; ++k) pooled[k] += c[k];
                        ++count;
                    }
                for (double& v : pooled) v /= std::max(count, 1);
                double* out =
                    lvl.data.data() + (static_cast<std::size_t>(cy) * lvl.size + cx) * cfg.C;
                for (int i = 0; i < cfg.C; ++i) {
                    double acc = 0.0;
                    for (int j = 0; j < detail::kRawChannels; ++j)
                        acc += W(i, j) * pooled[j];
                    out[i] = acc;
                }
            }
        pyr.levels.push_back(std::move(lvl));
    }
    return pyr;
}

// Bilinear read with half-pixel alignment: normalized u maps to pixel
// u*W - 0.5. Reads outside the grid are zero-padded.
inline Eigen::VectorXd bilinear_sample(const FeatureLevel& lvl, Point xy) {
    const int W = lvl.size;
    const double fx = xy.x * W - 0.5;
    const double fy = xy.y * W - 0.5;
    const int x0 = static_cast<int>(std::floor(fx));
    const int y0 = static_cast<int>(std::floor(fy));
    const double tx = fx - x0;
    const double ty = fy - y0;

    Eigen::VectorXd out = Eigen::VectorXd::Zero(lvl.channels);
    auto accum = [&](int x, int y, double w) {
        if (w == 0.0 || x < 0 || x >= W || y < 0 || y >= W) return;
        const double* c = lvl.cell(x, y);
        for (int i = 0; i < lvl.channels; ++i) out[i] += w * c[i];
    };
    accum(x0, y0, (1 - tx) * (1 - ty));
    accum(x0 + 1, y0, tx * (1 - ty));
    accum(x0, y0 + 1, (1 - tx) * ty);
    accum(x0 + 1, y0 + 1, tx * ty);
    return out;
}

} // namespace univec
