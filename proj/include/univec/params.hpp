#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "univec/rng.hpp"
#include "univec/types.hpp"

namespace univec {

// Flat registry of named real arrays. Shapes form the manifest; a loaded file
// must carry exactly the same names and shapes as the Config implies.
class ParameterSet {
public:
    Eigen::MatrixXd& add(const std::string& name, int rows, int cols) {
        auto [it, fresh] = arrays_.emplace(name, Eigen::MatrixXd::Zero(rows, cols));
        if (!fresh) throw std::logic_error("duplicate parameter: " + name);
        return it->second;
    }

    const Eigen::MatrixXd& get(const std::string& name) const {
        auto it = arrays_.find(name);
        if (it == arrays_.end()) throw std::out_of_range("missing parameter: " + name);
        return it->second;
    }

    bool has(const std::string& name) const { return arrays_.count(name) != 0; }
    std::uint64_t seed() const { return seed_; }
    void set_seed(std::uint64_t s) { seed_ = s; }
    const std::map<std::string, Eigen::MatrixXd>& arrays() const { return arrays_; }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["seed"] = seed_;
        auto& arr = j["arrays"];
        for (const auto& [name, m] : arrays_) {
            nlohmann::json e;
            e["shape"] = {m.rows(), m.cols()};
            auto& d = e["data"] = nlohmann::json::array();
            for (Eigen::Index r = 0; r < m.rows(); ++r)
                for (Eigen::Index c = 0; c < m.cols(); ++c) d.push_back(m(r, c));
            arr[name] = std::move(e);
        }
        return j;
    }

    // Loads values into an already-shaped set; any name or shape mismatch is an error.
    void load_values(const nlohmann::json& j) {
        seed_ = j.value("seed", std::uint64_t{0});
        const auto& arr = j.at("arrays");
        if (arr.size() != arrays_.size())
            throw std::runtime_error("parameter file: array count mismatch");
        for (auto& [name, m] : arrays_) {
            if (!arr.contains(name))
                throw std::runtime_error("parameter file: missing array " + name);
            const auto& e = arr.at(name);
            const auto& shape = e.at("shape");
            if (shape[0].get<Eigen::Index>() != m.rows() ||
                shape[1].get<Eigen::Index>() != m.cols())
                throw std::runtime_error("parameter file: shape mismatch for " + name);
            const auto& d = e.at("data");
            if (static_cast<Eigen::Index>(d.size()) != m.size())
                throw std::runtime_error("parameter file: data size mismatch for " + name);
            std::size_t k = 0;
            for (Eigen::Index r = 0; r < m.rows(); ++r)
                for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = d[k++].get<double>();
        }
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream f(path);
        if (!f) throw std::runtime_error("cannot write: " + path.string());
        f << to_json().dump() << "\n";
    }

private:
    std::map<std::string, Eigen::MatrixXd> arrays_;
    std::uint64_t seed_ = 0;
};

namespace detail {

inline std::uint64_t name_hash(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
    return h;
}

inline void seeded_init(ParameterSet& p, const std::string& name, int rows, int cols,
                        std::uint64_t seed, double scale) {
    Eigen::MatrixXd& m = p.add(name, rows, cols);
    if (scale == 0.0) return;
    Rng rng(seed, name_hash(name));
    const double limit = scale * std::sqrt(6.0 / (rows + cols));
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform(-limit, limit);
}

inline void add_attention(ParameterSet& p, const std::string& prefix, int C,
                          std::uint64_t seed, double scale) {
    for (const char* w : {"wq", "wk", "wv", "wo"})
        seeded_init(p, prefix + "." + w, C, C, seed, scale);
}

inline void add_ffn(ParameterSet& p, const std::string& prefix, int C,
                    std::uint64_t seed, double scale) {
    seeded_init(p, prefix + ".w1", 4 * C, C, seed, scale);
    seeded_init(p, prefix + ".b1", 4 * C, 1, seed, 0.0);
    seeded_init(p, prefix + ".w2", C, 4 * C, seed, scale);
    seeded_init(p, prefix + ".b2", C, 1, seed, 0.0);
}

inline void add_mlp2(ParameterSet& p, const std::string& prefix, int in, int hidden,
                     int out, std::uint64_t seed, double scale) {
    seeded_init(p, prefix + ".w1", hidden, in, seed, scale);
    seeded_init(p, prefix + ".b1", hidden, 1, seed, 0.0);
    seeded_init(p, prefix + ".w2", out, hidden, seed, scale);
    seeded_init(p, prefix + ".b2", out, 1, seed, 0.0);
}

inline void add_deform(ParameterSet& p, const std::string& prefix, const Config& cfg,
                       std::uint64_t seed, double scale) {
    seeded_init(p, prefix + ".offset_w", 2 * cfg.E, cfg.C, seed, scale);
    seeded_init(p, prefix + ".offset_b", 2 * cfg.E, 1, seed, 0.0);
    seeded_init(p, prefix + ".weight_w", cfg.E, cfg.C, seed, scale);
    seeded_init(p, prefix + ".weight_b", cfg.E, 1, seed, 0.0);
}

} // namespace detail

// Builds the full manifest for the encoder + decoder stack. scale = 0 yields
// the all-zero network used by the fixed-point tests.
inline ParameterSet make_parameter_set(const Config& cfg, std::uint64_t seed,
                                       double scale = 0.05) {
    using namespace detail;
    ParameterSet p;
    p.set_seed(seed);
    const int C = cfg.C;
    const int ncls = cfg.class_table.num_classes();

    seeded_init(p, "scorer.w", 1, C, seed, scale);
    seeded_init(p, "scorer.b", 1, 1, seed, 0.0);
    seeded_init(p, "rescore.w", 1, C, seed, scale);
    seeded_init(p, "rescore.b", 1, 1, seed, 0.0);
    seeded_init(p, "rins_offset.w", 2, C, seed, scale);
    seeded_init(p, "rins_offset.b", 2, 1, seed, 0.0);
    for (int l = 0; l < 2; ++l) {
        const std::string pre = "refine" + std::to_string(l);
        add_attention(p, pre + ".self", C, seed, scale);
        add_deform(p, pre + ".cross", cfg, seed, scale);
        seeded_init(p, pre + ".cross.out_w", C, C, seed, scale);
        add_ffn(p, pre + ".ffn", C, seed, scale);
    }

    seeded_init(p, "embed.V", cfg.M, C, seed, scale);
    add_attention(p, "shapedef", C, seed, scale);
    add_ffn(p, "shapedef.ffn", C, seed, scale);

    for (int l = 0; l < cfg.L; ++l) {
        const std::string pre = "dec" + std::to_string(l);
        add_mlp2(p, pre + ".georef", C, C, 2, seed, scale);
        add_deform(p, pre + ".deform", cfg, seed, scale);
        for (const char* blk : {"intra_ins", "intra_geo", "cross_ins", "cross_geo"}) {
            add_attention(p, pre + "." + blk, C, seed, scale);
            add_ffn(p, pre + "." + blk + ".ffn", C, seed, scale);
        }
        add_mlp2(p, pre + ".head.bbox", C, C, 4, seed, scale);
        add_mlp2(p, pre + ".head.pts", C, C, 2, seed, scale);
        seeded_init(p, pre + ".head.cls.w", ncls + 1, C, seed, scale);
        seeded_init(p, pre + ".head.cls.b", ncls + 1, 1, seed, 0.0);
        seeded_init(p, pre + ".head.kp.w", 1, C, seed, scale);
        seeded_init(p, pre + ".head.kp.b", 1, 1, seed, 0.0);
    }
    return p;
}

inline ParameterSet load_parameter_set(const std::filesystem::path& path,
                                       const Config& cfg) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path.string());
    nlohmann::json j;
    f >> j;
    ParameterSet p = make_parameter_set(cfg, 0, 0.0);
    p.load_values(j);
    return p;
}

} // namespace univec
