#pragma once

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "univec/metrics.hpp"
#include "univec/scene_io.hpp"

namespace univec {

// Prediction files mirror the scene schema plus per-instance "score",
// per-point "keypoint_prob", and the decoder "layer" the output came from.
inline nlohmann::json predictions_to_json(const std::vector<ScoredScene>& scenes,
                                          int layer = -1) {
    nlohmann::json j;
    j["images"] = nlohmann::json::array();
    j["annotations"] = nlohmann::json::array();
    std::int64_t ann_id = 0;
    for (const ScoredScene& s : scenes) {
        j["images"].push_back({{"id", s.image_id},
                               {"width", s.raster_size},
                               {"height", s.raster_size}});
        for (const ScoredInstance& si : s.instances) {
            nlohmann::json pts = nlohmann::json::array();
            for (const Point& p : si.v.points) {
                pts.push_back(p.x);
                pts.push_back(p.y);
            }
            j["annotations"].push_back({{"id", ann_id++},
                                        {"image_id", s.image_id},
                                        {"instance_id", si.v.id},
                                        {"category_id", si.v.class_id},
                                        {"structure", kind_name(si.v.kind)},
                                        {"points", std::move(pts)},
                                        {"score", si.score},
                                        {"keypoint_prob", si.kp_prob},
                                        {"layer", layer}});
        }
    }
    return j;
}

inline std::vector<ScoredScene> predictions_from_json(const nlohmann::json& j) {
    std::vector<ScoredScene> scenes;
    std::unordered_map<std::int64_t, std::size_t> index;
    for (const auto& im : j.at("images")) {
        ScoredScene s;
        s.image_id = im.at("id").get<std::int64_t>();
        s.raster_size = im.at("width").get<int>();
        index[s.image_id] = scenes.size();
        scenes.push_back(std::move(s));
    }
    for (const auto& a : j.at("annotations")) {
        ScoredInstance si;
        si.v.kind = kind_from_name(a.at("structure").get<std::string>());
        si.v.class_id = a.at("category_id").get<int>();
        si.v.id = a.value("instance_id", a.at("id").get<std::int64_t>());
        si.score = a.value("score", 1.0);
        if (a.contains("keypoint_prob"))
            si.kp_prob = a.at("keypoint_prob").get<std::vector<double>>();
        const auto& pts = a.at("points");
        for (std::size_t i = 0; i + 1 < pts.size(); i += 2)
            si.v.points.push_back({pts[i].get<double>(), pts[i + 1].get<double>()});
        scenes[index.at(a.at("image_id").get<std::int64_t>())].instances.push_back(
            std::move(si));
    }
    return scenes;
}

inline void save_predictions(const std::vector<ScoredScene>& scenes,
                             const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
    f << predictions_to_json(scenes).dump(2) << "\n";
}

inline std::vector<ScoredScene> load_predictions(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path.string());
    nlohmann::json j;
    f >> j;
    return predictions_from_json(j);
}

// Treats a plain scene as a perfect-score prediction set (useful for
// identity checks and evaluating external data).
inline std::vector<ScoredScene> scenes_as_predictions(const std::vector<Scene>& scenes) {
    std::vector<ScoredScene> out;
    for (const Scene& s : scenes) {
        ScoredScene ss;
        ss.image_id = s.image_id;
        ss.raster_size = s.raster_size;
        for (const VectorInstance& v : s.instances) {
            ScoredInstance si;
            si.v = v;
            si.score = 1.0;
            si.kp_prob.assign(v.points.size(), 1.0);
            ss.instances.push_back(std::move(si));
        }
        out.push_back(std::move(ss));
    }
    return out;
}

} // namespace univec
