#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "univec/types.hpp"

namespace univec {

struct RasterImage {
    int size = 0;
    std::vector<double> data; // row-major, data[y * size + x], values in [0,1]

    double at(int x, int y) const { return data[static_cast<std::size_t>(y) * size + x]; }
    double& at(int x, int y) { return data[static_cast<std::size_t>(y) * size + x]; }
};

namespace detail {

// normalized coordinate -> pixel index, clamped to the grid
inline int to_px(double v, int S) {
    int i = static_cast<int>(std::floor(v * S));
    return std::clamp(i, 0, S - 1);
}

inline void stamp(RasterImage& img, int x, int y, int stroke_px) {
    const int r = (stroke_px - 1) / 2;
    const int r2 = stroke_px / 2;
    for (int dy = -r; dy <= r2; ++dy)
        for (int dx = -r; dx <= r2; ++dx) {
            const int px = x + dx, py = y + dy;
            if (px >= 0 && px < img.size && py >= 0 && py < img.size)
                img.at(px, py) = 1.0;
        }
}

// Bresenham between pixel cells, widened by the stroke stamp.
inline void draw_line(RasterImage& img, Point a, Point b, int stroke_px) {
    int x0 = to_px(a.x, img.size), y0 = to_px(a.y, img.size);
    int x1 = to_px(b.x, img.size), y1 = to_px(b.y, img.size);
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        stamp(img, x0, y0, stroke_px);
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) { err += dy; x0 += sx; }
        if (e2 <= dx) { err += dx; y0 += sy; }
    }
}

// Even-odd scanline fill sampled at pixel centers.
inline void fill_polygon(RasterImage& img, const std::vector<Point>& pts) {
    const int S = img.size;
    const std::size_t n = pts.size();
    for (int row = 0; row < S; ++row) {
        const double yc = (row + 0.5) / S;
        std::vector<double> xs;
        for (std::size_t i = 0; i < n; ++i) {
            const Point& p = pts[i];
            const Point& q = pts[(i + 1) % n];
            if ((p.y <= yc && q.y > yc) || (q.y <= yc && p.y > yc))
                xs.push_back(p.x + (yc - p.y) / (q.y - p.y) * (q.x - p.x));
        }
        std::sort(xs.begin(), xs.end());
        for (std::size_t i = 0; i + 1 < xs.size(); i += 2) {
            for (int col = 0; col < S; ++col) {
                const double xc = (col + 0.5) / S;
                if (xc >= xs[i] && xc < xs[i + 1]) img.at(col, row) = 1.0;
            }
        }
    }
}

} // namespace detail

// Polygons are filled (even-odd at pixel centers); polylines and segments are
// stroked with Bresenham widened to stroke_px.
inline RasterImage rasterize(const Scene& scene, int stroke_px = 1) {
    if (stroke_px < 1) throw std::invalid_argument("rasterize: stroke_px >= 1");
    RasterImage img;
    img.size = scene.raster_size;
    img.data.assign(static_cast<std::size_t>(img.size) * img.size, 0.0);
    for (const VectorInstance& v : scene.instances) {
        if (v.kind == StructureKind::Polygon) {
            detail::fill_polygon(img, v.points);
        } else {
            for (std::size_t i = 0; i + 1 < v.points.size(); ++i)
                detail::draw_line(img, v.points[i], v.points[i + 1], stroke_px);
        }
    }
    return img;
}

namespace detail {

// Felzenszwalb-Huttenlocher 1D squared distance transform.
inline void edt_1d(const std::vector<double>& f, std::vector<double>& d) {
    const int n = static_cast<int>(f.size());
    std::vector<int> v(n);
    std::vector<double> z(n + 1);
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
        double s;
        while (true) {
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
            if (s > z[k]) break;
            --k;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        d[q] = (q - v[k]) * static_cast<double>(q - v[k]) + f[v[k]];
    }
}

} // namespace detail

// Exact Euclidean distance (in pixels) from every cell to the nearest cell
// where mask(x, y) is true. All-false mask -> +inf everywhere.
inline std::vector<double> distance_transform(const RasterImage& img,
                                              double lit_threshold = 0.5) {
    const int S = img.size;
    const double inf = 1e18;
    std::vector<double> g(static_cast<std::size_t>(S) * S);
    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x)
            g[static_cast<std::size_t>(y) * S + x] = img.at(x, y) > lit_threshold ? 0.0 : inf;

    std::vector<double> col(S), out(S);
    for (int x = 0; x < S; ++x) { // columns
        for (int y = 0; y < S; ++y) col[y] = g[static_cast<std::size_t>(y) * S + x];
        detail::edt_1d(col, out);
        for (int y = 0; y < S; ++y) g[static_cast<std::size_t>(y) * S + x] = out[y];
    }
    for (int y = 0; y < S; ++y) { // rows
        for (int x = 0; x < S; ++x) col[x] = g[static_cast<std::size_t>(y) * S + x];
        detail::edt_1d(col, out);
        for (int x = 0; x < S; ++x)
            g[static_cast<std::size_t>(y) * S + x] = std::sqrt(out[x]);
    }
    return g;
}

} // namespace univec
