#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <unordered_map>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "univec/rng.hpp"
#include "univec/types.hpp"

namespace univec {

struct GenParams {
    std::uint64_t seed = 0;
    int n_scenes = 1;
    int min_instances = 5;
    int max_instances = 15;
    // Multi-structure class mix: building / road boundary / center line
    std::array<double, 3> class_mix = {0.706, 0.189, 0.105};
    int raster_size = 256;
    double jitter = 0.0; // positional noise for "predicted-like" copies

    void check() const {
        const double s = class_mix[0] + class_mix[1] + class_mix[2];
        if (std::abs(s - 1.0) > 1e-9)
            throw std::invalid_argument("GenParams: class_mix must sum to 1");
        if (min_instances < 0 || max_instances < min_instances || n_scenes < 0)
            throw std::invalid_argument("GenParams: empty range");
    }
};

namespace detail {

inline VectorInstance gen_polygon(Rng& rng, std::int64_t id) {
    VectorInstance v;
    v.kind = StructureKind::Polygon;
    v.class_id = 0;
    v.id = id;
    if (rng.uniform() < 0.3) {
        // axis-aligned rectangle
        const double cx = rng.uniform(0.15, 0.85), cy = rng.uniform(0.15, 0.85);
        const double w = rng.uniform(0.03, 0.12), h = rng.uniform(0.03, 0.12);
        v.points = {{cx - w, cy - h}, {cx + w, cy - h}, {cx + w, cy + h}, {cx - w, cy + h}};
    } else {
        // star-shaped polygon on jittered regular angles (always simple)
        const int k = static_cast<int>(rng.uniform_int(4, 12));
        const double cx = rng.uniform(0.18, 0.82), cy = rng.uniform(0.18, 0.82);
        const double R = rng.uniform(0.04, 0.15);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (int i = 0; i < k; ++i) {
            const double th = phase + 2.0 * std::numbers::pi * (i + 0.35 * rng.uniform()) / k;
            const double r = R * rng.uniform(0.65, 1.0);
            v.points.push_back({std::clamp(cx + r * std::cos(th), 0.0, 1.0),
                                std::clamp(cy + r * std::sin(th), 0.0, 1.0)});
        }
    }
    return v;
}

inline VectorInstance gen_polyline(Rng& rng, std::int64_t id) {
    VectorInstance v;
    v.kind = StructureKind::Polyline;
    v.class_id = 1;
    v.id = id;
    const int k = static_cast<int>(rng.uniform_int(3, 15));
    Point p{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
    double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
    v.points.push_back(p);
    for (int i = 1; i < k; ++i) {
        const double step = rng.uniform(0.03, 0.08);
        for (int tries = 0; tries < 16; ++tries) {
            const Point q{p.x + step * std::cos(heading), p.y + step * std::sin(heading)};
            if (q.x > 0.02 && q.x < 0.98 && q.y > 0.02 && q.y < 0.98) {
                p = q;
                break;
            }
            heading += 0.7; // steer away from the border
        }
        heading += rng.uniform(-0.5, 0.5);
        v.points.push_back(p);
    }
    return v;
}

inline VectorInstance gen_segment(Rng& rng, std::int64_t id) {
    VectorInstance v;
    v.kind = StructureKind::Segment;
    v.class_id = 2;
    v.id = id;
    Point a{rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
    Point b = a;
    while (dist(a, b) < 0.05)
        b = {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
    v.points = {a, b};
    return v;
}

} // namespace detail

inline std::vector<Scene> generate_scenes(const GenParams& p) {
    p.check();
    std::vector<Scene> scenes(p.n_scenes);
    for (int s = 0; s < p.n_scenes; ++s) {
        Scene& scene = scenes[s];
        scene.image_id = s;
        scene.raster_size = p.raster_size;
        Rng scene_rng(p.seed, static_cast<std::uint64_t>(s), ~0ULL);
        const int count = static_cast<int>(
            scene_rng.uniform_int(p.min_instances, p.max_instances));
        for (int i = 0; i < count; ++i) {
            Rng rng(p.seed, static_cast<std::uint64_t>(s),
                    static_cast<std::uint64_t>(i));
            const double u = rng.uniform();
            VectorInstance v;
            if (u < p.class_mix[0])
                v = detail::gen_polygon(rng, i);
            else if (u < p.class_mix[0] + p.class_mix[1])
                v = detail::gen_polyline(rng, i);
            else
                v = detail::gen_segment(rng, i);
            if (p.jitter > 0) {
                for (Point& pt : v.points) {
                    // Box-Muller jitter, clamped back into the frame
                    const double u1 = std::max(rng.uniform(), 1e-12);
                    const double u2 = rng.uniform();
                    const double r = p.jitter * std::sqrt(-2.0 * std::log(u1));
                    pt.x = std::clamp(pt.x + r * std::cos(2 * std::numbers::pi * u2), 0.0, 1.0);
                    pt.y = std::clamp(pt.y + r * std::sin(2 * std::numbers::pi * u2), 0.0, 1.0);
                }
            }
            scene.instances.push_back(std::move(v));
        }
    }
    return scenes;
}

// ---------------------------------------------------------------------------
// COCO-like JSON (extended with a per-annotation "structure" field)
// ---------------------------------------------------------------------------

inline StructureKind kind_from_name(const std::string& s) {
    if (s == "polygon") return StructureKind::Polygon;
    if (s == "polyline") return StructureKind::Polyline;
    if (s == "segment") return StructureKind::Segment;
    throw std::runtime_error("unknown structure: \"" + s + "\"");
}

inline nlohmann::json scenes_to_json(const std::vector<Scene>& scenes) {
    nlohmann::json j;
    j["images"] = nlohmann::json::array();
    j["annotations"] = nlohmann::json::array();
    j["categories"] = {{{"id", 0}, {"name", "building"}, {"structure", "polygon"}},
                       {{"id", 1}, {"name", "road_boundary"}, {"structure", "polyline"}},
                       {{"id", 2}, {"name", "center_line"}, {"structure", "segment"}}};
    std::int64_t ann_id = 0;
    for (const Scene& s : scenes) {
        j["images"].push_back({{"id", s.image_id},
                               {"width", s.raster_size},
                               {"height", s.raster_size}});
        for (const VectorInstance& v : s.instances) {
            nlohmann::json pts = nlohmann::json::array();
            for (const Point& p : v.points) {
                pts.push_back(p.x);
                pts.push_back(p.y);
            }
            j["annotations"].push_back({{"id", ann_id++},
                                        {"image_id", s.image_id},
                                        {"instance_id", v.id},
                                        {"category_id", v.class_id},
                                        {"structure", kind_name(v.kind)},
                                        {"points", std::move(pts)}});
        }
    }
    return j;
}

inline std::vector<Scene> scenes_from_json(const nlohmann::json& j,
                                           bool pixel_coords = false) {
    std::vector<Scene> scenes;
    std::unordered_map<std::int64_t, std::size_t> index;
    for (const auto& im : j.at("images")) {
        Scene s;
        s.image_id = im.at("id").get<std::int64_t>();
        s.raster_size = im.at("width").get<int>();
        index[s.image_id] = scenes.size();
        scenes.push_back(std::move(s));
    }
    for (const auto& a : j.at("annotations")) {
        const std::int64_t ann_id = a.at("id").get<std::int64_t>();
        VectorInstance v;
        v.kind = kind_from_name(a.at("structure").get<std::string>());
        v.class_id = a.at("category_id").get<int>();
        v.id = a.contains("instance_id") ? a.at("instance_id").get<std::int64_t>()
                                         : ann_id;
        const auto& pts = a.at("points");
        if (pts.size() % 2 != 0)
            throw std::runtime_error("annotation " + std::to_string(ann_id) +
                                     ": odd coordinate count");
        auto it = index.find(a.at("image_id").get<std::int64_t>());
        if (it == index.end())
            throw std::runtime_error("annotation " + std::to_string(ann_id) +
                                     ": unknown image_id");
        Scene& s = scenes[it->second];
        const double div = pixel_coords ? static_cast<double>(s.raster_size) : 1.0;
        for (std::size_t i = 0; i < pts.size(); i += 2) {
            const double x = pts[i].get<double>() / div;
            const double y = pts[i + 1].get<double>() / div;
            if (!(x >= 0 && x <= 1 && y >= 0 && y <= 1))
                throw std::runtime_error("annotation " + std::to_string(ann_id) +
                                         ": coordinate out of range");
            v.points.push_back({x, y});
        }
        s.instances.push_back(std::move(v));
    }
    return scenes;
}

inline void save_scenes(const std::vector<Scene>& scenes,
                        const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
    f << scenes_to_json(scenes).dump(2) << "\n";
}

inline std::vector<Scene> load_scenes(const std::filesystem::path& path,
                                      bool pixel_coords = false) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path.string());
    nlohmann::json j;
    f >> j;
    return scenes_from_json(j, pixel_coords);
}

// ---------------------------------------------------------------------------
// SVG / GeoJSON export
// ---------------------------------------------------------------------------

inline std::string scene_to_svg(const Scene& s) {
    static const char* colors[] = {"#d43f3f", "#3f6fd4", "#2f9e44"};
    const int S = s.raster_size;
    std::ostringstream out;
    out.precision(17);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << S
        << "\" height=\"" << S << "\" viewBox=\"0 0 " << S << " " << S << "\">\n";
    for (const VectorInstance& v : s.instances) {
        const char* color = colors[v.class_id % 3];
        if (v.kind == StructureKind::Segment) {
            out << "  <line x1=\"" << v.points[0].x * S << "\" y1=\"" << v.points[0].y * S
                << "\" x2=\"" << v.points[1].x * S << "\" y2=\"" << v.points[1].y * S
                << "\" stroke=\"" << color << "\" fill=\"none\"/>\n";
        } else {
            out << (v.kind == StructureKind::Polygon ? "  <polygon points=\""
                                                     : "  <polyline points=\"");
            for (std::size_t i = 0; i < v.points.size(); ++i) {
                if (i) out << " ";
                out << v.points[i].x * S << "," << v.points[i].y * S;
            }
            out << "\" stroke=\"" << color << "\" fill=\""
                << (v.kind == StructureKind::Polygon ? color : "none") << "\" fill-opacity=\"0.4\"/>\n";
        }
    }
    out << "</svg>\n";
    return out.str();
}

inline nlohmann::json scene_to_geojson(const Scene& s) {
    nlohmann::json fc;
    fc["type"] = "FeatureCollection";
    fc["image_id"] = s.image_id;
    fc["raster_size"] = s.raster_size;
    fc["features"] = nlohmann::json::array();
    for (const VectorInstance& v : s.instances) {
        nlohmann::json coords = nlohmann::json::array();
        for (const Point& p : v.points) coords.push_back({p.x, p.y});
        nlohmann::json geom;
        if (v.kind == StructureKind::Polygon) {
            coords.push_back({v.points.front().x, v.points.front().y}); // close ring
            geom = {{"type", "Polygon"}, {"coordinates", {coords}}};
        } else {
            geom = {{"type", "LineString"}, {"coordinates", coords}};
        }
        fc["features"].push_back(
            {{"type", "Feature"},
             {"geometry", geom},
             {"properties",
              {{"class_id", v.class_id}, {"id", v.id}, {"structure", kind_name(v.kind)}}}});
    }
    return fc;
}

inline Scene scene_from_geojson(const nlohmann::json& fc) {
    Scene s;
    s.image_id = fc.value("image_id", 0);
    s.raster_size = fc.value("raster_size", 256);
    for (const auto& f : fc.at("features")) {
        VectorInstance v;
        const auto& props = f.at("properties");
        v.class_id = props.at("class_id").get<int>();
        v.id = props.at("id").get<std::int64_t>();
        v.kind = kind_from_name(props.at("structure").get<std::string>());
        const auto& geom = f.at("geometry");
        const auto& coords = geom.at("type") == "Polygon"
                                 ? geom.at("coordinates").at(0)
                                 : geom.at("coordinates");
        for (const auto& c : coords) v.points.push_back({c[0], c[1]});
        if (v.kind == StructureKind::Polygon) v.points.pop_back(); // drop closing vertex
        s.instances.push_back(std::move(v));
    }
    return s;
}

inline void export_scenes(const std::vector<Scene>& scenes, const std::string& format,
                          const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const Scene& s : scenes) {
        const std::string stem = "scene_" + std::to_string(s.image_id);
        if (format == "svg") {
            std::ofstream f(dir / (stem + ".svg"));
            if (!f) throw std::runtime_error("cannot write SVG in " + dir.string());
            f << scene_to_svg(s);
        } else if (format == "geojson") {
            std::ofstream f(dir / (stem + ".geojson"));
            if (!f) throw std::runtime_error("cannot write GeoJSON in " + dir.string());
            f << scene_to_geojson(s).dump(2) << "\n";
        } else {
            throw std::invalid_argument("unknown export format: " + format);
        }
    }
}

} // namespace univec
