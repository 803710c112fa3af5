// univec: batch CLI over the vector-extraction library.
//
// Exit codes: 0 success, 1 validation/usage error, 2 IO error.
// stdout carries machine-readable results; stderr carries the resolved run
// configuration as JSON plus diagnostics.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "univec/univec.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace univec;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// temp file + rename so readers never observe a partial file
void atomic_write(const fs::path& path, const std::string& body) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp);
        if (!f) throw IoError("cannot open for writing: " + tmp.string());
        f << body;
        if (!f) throw IoError("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

json load_json(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open: " + path.string());
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
    return j;
}

void log_run_config(const std::string& subcommand, json cfg) {
    cfg["subcommand"] = subcommand;
    std::cerr << cfg.dump() << "\n";
}

// shared Config flags (names mirror the symbols in the interface contract)
struct ConfigFlags {
    Config cfg;

    void attach(CLI::App* app) {
        app->add_option("--n-instances", cfg.N, "max instances per image (N)");
        app->add_option("--m-points", cfg.M, "points per vector (M)");
        app->add_option("--channels", cfg.C, "channel width (C)");
        app->add_option("--e-samples", cfg.E, "deformable sampling points (E)");
        app->add_option("--layers", cfg.L, "decoder layers (L)");
        app->add_option("--k-queries", cfg.K, "coarse query count (K)");
        app->add_option("--heads", cfg.heads, "attention heads");
        app->add_option("--scales", cfg.scales, "pyramid downsampling factors")
            ->delimiter(',');
        app->add_option("--keypoint-threshold", cfg.keypoint_threshold,
                        "key-point probability threshold (tau)");
        app->add_option("--instance-threshold", cfg.instance_threshold,
                        "instance score threshold");
    }

    json to_json() const {
        return {{"N", cfg.N},      {"M", cfg.M},
                {"C", cfg.C},      {"E", cfg.E},
                {"L", cfg.L},      {"K", cfg.K},
                {"heads", cfg.heads}, {"scales", cfg.scales},
                {"keypoint_threshold", cfg.keypoint_threshold},
                {"instance_threshold", cfg.instance_threshold}};
    }
};

struct LossFlags {
    LossWeights w;
    std::string mode = "monotone";

    void attach(CLI::App* app) {
        app->add_option("--alpha-p", w.alpha_p, "matching cost point weight");
        app->add_option("--alpha-c", w.alpha_c, "matching cost probability weight");
        app->add_option("--alpha-dir", w.alpha_dir, "direction loss weight");
        app->add_option("--alpha-kp", w.alpha_kp, "key-point loss weight");
        app->add_option("--alpha-cls", w.alpha_cls, "classification loss weight");
        app->add_option("--mode", mode, "matching mode")
            ->check(CLI::IsMember({"monotone", "hungarian"}));
    }

    MatchMode match_mode() const {
        return mode == "hungarian" ? MatchMode::Hungarian : MatchMode::Monotone;
    }

    json to_json() const {
        return {{"alpha_p", w.alpha_p},     {"alpha_c", w.alpha_c},
                {"alpha_dir", w.alpha_dir}, {"alpha_kp", w.alpha_kp},
                {"alpha_cls", w.alpha_cls}, {"mode", mode}};
    }
};

std::vector<Scene> load_scene_file(const fs::path& path, bool pixel_coords) {
    return scenes_from_json(load_json(path), pixel_coords);
}

// simple fan-out over scene indices
void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
    jobs = std::max(1, jobs);
    if (jobs == 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(jobs);
    for (int t = 0; t < jobs; ++t)
        pool.emplace_back([&, t] {
            try {
                for (int i = next++; i < n; i = next++) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

int run_gen(const GenParams& gp, const fs::path& out) {
    log_run_config("gen", {{"seed", gp.seed},
                           {"count", gp.n_scenes},
                           {"min_instances", gp.min_instances},
                           {"max_instances", gp.max_instances},
                           {"raster_size", gp.raster_size},
                           {"class_mix", gp.class_mix},
                           {"out", out.string()}});
    const auto scenes = generate_scenes(gp);
    atomic_write(out, scenes_to_json(scenes).dump(2) + "\n");
    int n_inst = 0;
    for (const auto& s : scenes) n_inst += static_cast<int>(s.instances.size());
    std::cout << json{{"scenes", scenes.size()},
                      {"instances", n_inst},
                      {"out", out.string()}}
                     .dump()
              << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// rasterize (PGM output per scene)
// ---------------------------------------------------------------------------

int run_rasterize(const fs::path& scenes_path, const fs::path& out_dir, int stroke,
                  bool pixel_coords) {
    log_run_config("rasterize", {{"scenes", scenes_path.string()},
                                 {"out_dir", out_dir.string()},
                                 {"stroke", stroke}});
    const auto scenes = load_scene_file(scenes_path, pixel_coords);
    json files = json::array();
    for (const Scene& s : scenes) {
        const RasterImage img = rasterize(s, stroke);
        std::string pgm = "P2\n" + std::to_string(img.size) + " " +
                          std::to_string(img.size) + "\n255\n";
        for (int y = 0; y < img.size; ++y) {
            for (int x = 0; x < img.size; ++x) {
                pgm += std::to_string(static_cast<int>(img.at(x, y) * 255));
                pgm += x + 1 == img.size ? '\n' : ' ';
            }
        }
        const fs::path f =
            out_dir / ("scene_" + std::to_string(s.image_id) + ".pgm");
        atomic_write(f, pgm);
        files.push_back(f.string());
    }
    std::cout << json{{"rasters", files}}.dump() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

int run_infer(const fs::path& scenes_path, const fs::path& out,
              const ConfigFlags& cf, const std::string& params_path,
              std::uint64_t seed, int layer, int jobs, bool pixel_coords) {
    const Config& cfg = cf.cfg;
    cfg.check();
    json rc = cf.to_json();
    rc["scenes"] = scenes_path.string();
    rc["out"] = out.string();
    rc["seed"] = seed;
    rc["params"] = params_path;
    rc["layer"] = layer;
    rc["jobs"] = jobs;
    log_run_config("infer", rc);

    const ParameterSet params = params_path.empty()
                                    ? make_parameter_set(cfg, seed)
                                    : load_parameter_set(params_path, cfg);
    const auto scenes = load_scene_file(scenes_path, pixel_coords);
    std::vector<ScoredScene> preds(scenes.size());
    parallel_for(static_cast<int>(scenes.size()), jobs, [&](int i) {
        const Scene& s = scenes[i];
        const FeaturePyramid pyr = build_pyramid(rasterize(s, 1), cfg, seed);
        const CoarseTokens coarse = select_coarse_queries(pyr, params, cfg.K);
        const InstanceState st =
            refine_instance_queries(coarse, pyr, params, cfg.N, cfg.heads);
        const auto layers = decode(st, pyr, params, cfg);
        const int pick = layer < 0 ? static_cast<int>(layers.size()) - 1 : layer;
        if (pick >= static_cast<int>(layers.size()))
            throw std::invalid_argument("--layer out of range");
        preds[i].image_id = s.image_id;
        preds[i].raster_size = s.raster_size;
        preds[i].instances = extract_vectors(layers[pick], cfg);
    });
    const int pick = layer < 0 ? cfg.L - 1 : layer;
    atomic_write(out, predictions_to_json(preds, pick).dump(2) + "\n");
    int n_inst = 0;
    for (const auto& p : preds) n_inst += static_cast<int>(p.instances.size());
    std::cout << json{{"scenes", preds.size()},
                      {"instances", n_inst},
                      {"layer", pick},
                      {"out", out.string()}}
                     .dump()
              << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// match / loss
// ---------------------------------------------------------------------------

json orientation_name(Orientation o) {
    return o == Orientation::Canonical ? "canonical" : "reversed";
}

int run_match(const fs::path& gt_path, const fs::path& pred_path,
              const LossFlags& lf, bool with_losses, bool pixel_coords) {
    json rc = lf.to_json();
    rc["gt"] = gt_path.string();
    rc["pred"] = pred_path.string();
    log_run_config(with_losses ? "loss" : "match", rc);

    const auto gts = load_scene_file(gt_path, pixel_coords);
    const auto preds = predictions_from_json(load_json(pred_path));
    std::map<std::int64_t, const ScoredScene*> by_id;
    for (const auto& p : preds) by_id[p.image_id] = &p;

    json records = json::array();
    int skipped = 0;
    for (const Scene& gt : gts) {
        const auto it = by_id.find(gt.image_id);
        for (std::size_t g = 0; g < gt.instances.size(); ++g) {
            const VectorInstance& v = gt.instances[g];
            // pair by index order; instances without a counterpart or with too
            // few predicted points are skipped with a warning
            if (it == by_id.end() || g >= it->second->instances.size()) {
                ++skipped;
                continue;
            }
            const ScoredInstance& si = it->second->instances[g];
            if (si.v.points.size() < v.points.size()) {
                std::cerr << "skip: image " << gt.image_id << " gt " << g
                          << ": prediction has fewer points than GT key points\n";
                ++skipped;
                continue;
            }
            MatchProblem prob;
            prob.pred_points = si.v.points;
            prob.pred_probs = si.kp_prob.size() == si.v.points.size()
                                  ? si.kp_prob
                                  : std::vector<double>(si.v.points.size(), 1.0);
            prob.gt_points = v.points;
            prob.kind = v.kind;

            json rec{{"image_id", gt.image_id},
                     {"gt_index", g},
                     {"pred_index", g}};
            if (with_losses) {
                const VslResult r = loss_vsl(prob, lf.w, lf.match_mode());
                json pairs = json::array();
                for (std::size_t i = 0; i < r.match.beta.size(); ++i)
                    pairs.push_back({i, r.match.beta[i]});
                rec["pairs"] = pairs;
                rec["cost"] = r.match.cost;
                rec["orientation"] = orientation_name(r.match.orientation);
                rec["losses"] = {{"dir", r.dir},
                                 {"kp", r.kp},
                                 {"cls", r.cls},
                                 {"total", r.total}};
            } else {
                const MatchResult m =
                    point_match(prob, lf.w.alpha_p, lf.w.alpha_c, lf.match_mode());
                json pairs = json::array();
                for (std::size_t i = 0; i < m.beta.size(); ++i)
                    pairs.push_back({i, m.beta[i]});
                rec["pairs"] = pairs;
                rec["cost"] = m.cost;
                rec["orientation"] = orientation_name(m.orientation);
            }
            records.push_back(std::move(rec));
        }
    }
    std::cout << json{{"records", records}, {"skipped", skipped}}.dump() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

int run_fit(const fs::path& gt_path, std::int64_t image_id, int gt_index, int M,
            int steps, double lr, double jitter, std::uint64_t seed,
            const LossFlags& lf, bool pixel_coords) {
    json rc = lf.to_json();
    rc["gt"] = gt_path.string();
    rc["image_id"] = image_id;
    rc["gt_index"] = gt_index;
    rc["m_points"] = M;
    rc["steps"] = steps;
    rc["lr"] = lr;
    rc["jitter"] = jitter;
    rc["seed"] = seed;
    log_run_config("fit", rc);

    const auto gts = load_scene_file(gt_path, pixel_coords);
    const Scene* scene = nullptr;
    for (const Scene& s : gts)
        if (image_id < 0 || s.image_id == image_id) {
            scene = &s;
            break;
        }
    if (!scene) throw std::invalid_argument("image id not found");
    if (gt_index < 0 || gt_index >= static_cast<int>(scene->instances.size()))
        throw std::invalid_argument("gt index out of range");
    const VectorInstance& v = scene->instances[gt_index];

    const SampledSequence base = resample_uniform(v, M);
    std::vector<Point> pts = base.points;
    std::vector<double> probs(M, 0.5);
    Rng rng(seed, 0x666974ULL); // "fit"
    for (Point& p : pts) {
        p.x = std::clamp(p.x + rng.uniform(-jitter, jitter), 0.0, 1.0);
        p.y = std::clamp(p.y + rng.uniform(-jitter, jitter), 0.0, 1.0);
    }
    const FitResult fit =
        descent_fit(pts, probs, v.points, v.kind, lf.w, steps, lr, lf.match_mode());
    double worst = 0.0, mean = 0.0;
    for (std::size_t i = 0; i < fit.final_match.beta.size(); ++i) {
        const double d =
            dist(fit.final_match.matched[i], fit.final_match.gt_used[i]);
        worst = std::max(worst, d);
        mean += d / fit.final_match.beta.size();
    }
    json out{{"initial_loss", fit.loss_trajectory.front()},
             {"final_loss", fit.loss_trajectory.back()},
             {"final_cost", fit.final_match.cost},
             {"worst_keypoint_dist", worst},
             {"mean_keypoint_dist", mean}};
    if (v.kind == StructureKind::Polygon && fit.final_match.matched.size() >= 3)
        out["polis"] = polis(fit.final_match.matched, v.points);
    std::cout << out.dump() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

const char* kMetricDescriptions = R"(Metric definitions used by this suite:
  PoLiS(A,B)   = (1/2|A|) sum_{a in A} d(a, boundary(B))
               + (1/2|B|) sum_{b in B} d(b, boundary(A)), vertex-to-boundary.
  IoU(A,B)     = area(A intersect B) / area(A union B), exact polygon clipping.
  C-IoU(A,B)   = IoU(A,B) * (1 - |N_A - N_B| / (N_A + N_B)), N = vertex counts.
  mAP          = COCO protocol: greedy score-sorted matching per IoU threshold
                 .50:.05:.95, 101-point interpolated AP, averaged over GT classes.
  P/R/F1       = pixel precision/recall at a Euclidean tolerance (default 10 px)
                 over rasterized polyline/segment classes, stroke width 1.
  APLS         = 1 - mean(min(1, |L - L'| / L)) over sampled node pairs, both
                 graph directions pooled; unreachable/unsnappable pairs count 1.
                 Endpoints snap to the nearest point of the other graph (node
                 or edge interior) within a 10 px radius.
  sAP/sF       = segment AP / max-F1 where a prediction matches iff the minimum
                 over endpoint orderings of summed squared endpoint distances is
                 <= threshold^2 (thresholds 10 and 15 px).
  ECM          = not implemented (defined in external work); reported as null.
)";

int run_eval(const fs::path& gt_path, const fs::path& pred_path,
             const EvalOptions& opt, const fs::path& csv_out, bool pixel_coords) {
    log_run_config("eval", {{"gt", gt_path.string()},
                            {"pred", pred_path.string()},
                            {"pixel_tol", opt.pixel_tol},
                            {"stroke", opt.stroke_px},
                            {"apls_samples", opt.apls_samples},
                            {"seed", opt.seed},
                            {"csv", csv_out.string()}});
    const auto gts = load_scene_file(gt_path, pixel_coords);
    const auto preds = predictions_from_json(load_json(pred_path));
    const MetricReport r = evaluate(preds, gts, opt);

    json out{{"map", r.map},
             {"iou", r.iou},
             {"ciou", r.ciou},
             {"polis", r.polis},
             {"precision", r.precision},
             {"recall", r.recall},
             {"f1", r.f1},
             {"apls", r.apls},
             {"sap10", r.sap10},
             {"sap15", r.sap15},
             {"sf10", r.sf10},
             {"sf15", r.sf15},
             {"ecm", nullptr},
             {"ecm_note", "ECM is defined in external work and intentionally "
                          "not implemented here"},
             {"counts",
              {{"polygons", r.n_polygons},
               {"polylines", r.n_polylines},
               {"segments", r.n_segments}}}};
    if (!csv_out.empty()) {
        std::string csv = "metric,value\n";
        for (const auto& [k, val] : out.items())
            if (val.is_number()) csv += k + "," + std::to_string(val.get<double>()) + "\n";
        atomic_write(csv_out, csv);
    }
    std::cout << out.dump() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// export
// ---------------------------------------------------------------------------

int run_export(const fs::path& scenes_path, const std::string& format,
               const fs::path& out_dir, bool pixel_coords) {
    log_run_config("export", {{"scenes", scenes_path.string()},
                              {"format", format},
                              {"out_dir", out_dir.string()}});
    const auto scenes = load_scene_file(scenes_path, pixel_coords);
    export_scenes(scenes, format, out_dir);
    std::cout << json{{"scenes", scenes.size()},
                      {"format", format},
                      {"out_dir", out_dir.string()}}
                     .dump()
              << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// selftest
// ---------------------------------------------------------------------------

int run_selftest() {
    log_run_config("selftest", json::object());
    int failures = 0;
    auto check = [&](const std::string& name, bool ok) {
        std::cout << (ok ? "ok   " : "FAIL ") << name << "\n";
        if (!ok) ++failures;
    };

    try {
        // sampling: canonical orientation + uniform square expectations
        VectorInstance sq;
        sq.kind = StructureKind::Polygon;
        sq.points = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
        const SampledSequence s = resample_uniform(sq, 8);
        check("sampling.square", dist(s.points[1], {0.5, 0}) < 1e-12 &&
                                     signed_area(s.points) > 0);

        // matching: worked example
        MatchProblem mp;
        mp.pred_points = {{0, 0}, {0.5, 0.5}, {1, 1}};
        mp.pred_probs = {0.9, 0.1, 0.9};
        mp.gt_points = {{0, 0}, {1, 1}};
        const MatchResult m = point_match(mp, 1.0, 1.0);
        check("dsc.match_example",
              m.beta == std::vector<int>{0, 2} && std::abs(m.cost - 0.1) < 1e-12);

        // gradients vs finite differences on a few problems
        Rng rng(1);
        bool grad_ok = true;
        for (int t = 0; t < 10; ++t) {
            MatchProblem p;
            p.kind = StructureKind::Polygon;
            for (int j = 0; j < 8; ++j) {
                p.pred_points.push_back({rng.uniform(), rng.uniform()});
                p.pred_probs.push_back(rng.uniform(0.1, 0.9));
            }
            for (int i = 0; i < 4; ++i)
                p.gt_points.push_back({rng.uniform(), rng.uniform()});
            const VslResult r = loss_vsl(p, LossWeights{});
            const double h = 1e-6;
            MatchProblem hi = p, lo = p;
            hi.pred_probs[0] += h;
            lo.pred_probs[0] -= h;
            const VslResult rh = loss_vsl(hi, LossWeights{});
            const VslResult rl = loss_vsl(lo, LossWeights{});
            if (rh.match.beta != r.match.beta || rl.match.beta != r.match.beta)
                continue;
            const double fd = (rh.total - rl.total) / (2 * h);
            if (std::abs(fd - r.grad_probs[0]) > 1e-4 * std::max(1.0, std::abs(fd)))
                grad_ok = false;
        }
        check("dsc.gradients", grad_ok);

        // metrics: self-evaluation identities
        GenParams gp;
        gp.seed = 9;
        gp.n_scenes = 3;
        const auto scenes = generate_scenes(gp);
        const MetricReport rep = evaluate(scenes_as_predictions(scenes), scenes);
        check("metrics.identity",
              std::abs(rep.map - 1.0) < 1e-9 && std::abs(rep.f1 - 1.0) < 1e-9 &&
                  rep.polis < 1e-9 && std::abs(rep.apls - 1.0) < 1e-9);

        // decoder: zero-parameter fixed point on a small config
        Config cfg;
        cfg.N = 4;
        cfg.M = 6;
        cfg.C = 8;
        cfg.E = 4;
        cfg.L = 2;
        cfg.K = 8;
        cfg.heads = 2;
        cfg.scales = {16, 32};
        const FeaturePyramid pyr = build_pyramid(rasterize(scenes[0], 1), cfg, 3);
        const ParameterSet zero = make_parameter_set(cfg, 3, 0.0);
        const InstanceState st = refine_instance_queries(
            select_coarse_queries(pyr, zero, cfg.K), pyr, zero, cfg.N, cfg.heads);
        bool fixed = true;
        for (const Prediction& pr : decode(st, pyr, zero, cfg))
            for (int i = 0; i < cfg.N; ++i)
                for (int j = 0; j < cfg.M; ++j)
                    if (dist(pr.points[i][j], st.r_ins[i]) > 1e-12) fixed = false;
        check("decoder.fixed_point", fixed);

        // IO: bit-exact scene round trip
        check("io.roundtrip",
              scenes_to_json(scenes_from_json(scenes_to_json(scenes))) ==
                  scenes_to_json(scenes));
    } catch (const std::exception& e) {
        std::cout << "FAIL exception: " << e.what() << "\n";
        ++failures;
    }
    std::cout << (failures ? "selftest: FAILED\n" : "selftest: all passed\n");
    return failures ? kExitValidation : kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"univec: structured vector extraction, matching and evaluation"};
    app.require_subcommand(1);

    // gen
    GenParams gp;
    fs::path gen_out = "scenes.json";
    std::vector<double> mix_flag;
    auto* gen = app.add_subcommand("gen", "generate synthetic multi-structure scenes");
    gen->add_option("--seed", gp.seed, "generator seed");
    gen->add_option("--count", gp.n_scenes, "number of scenes");
    gen->add_option("--min-instances", gp.min_instances, "min instances per scene");
    gen->add_option("--max-instances", gp.max_instances, "max instances per scene");
    gen->add_option("--raster-size", gp.raster_size, "raster edge in pixels");
    gen->add_option("--jitter", gp.jitter, "positional noise");
    gen->add_option("--mix", mix_flag, "class mix: polygon,polyline,segment")
        ->delimiter(',')
        ->expected(3);
    gen->add_option("--out", gen_out, "output scene JSON");

    // rasterize
    fs::path ras_scenes, ras_dir = "rasters";
    int ras_stroke = 1;
    bool ras_px = false;
    auto* ras = app.add_subcommand("rasterize", "write PGM rasters for scenes");
    ras->add_option("--scenes", ras_scenes, "scene JSON")->required();
    ras->add_option("--out-dir", ras_dir, "output directory");
    ras->add_option("--stroke", ras_stroke, "stroke width in pixels");
    ras->add_flag("--pixel-coords", ras_px, "scene coordinates are in pixels");

    // infer
    ConfigFlags inf_cfg;
    fs::path inf_scenes, inf_out = "predictions.json";
    std::string inf_params;
    std::uint64_t inf_seed = 0;
    int inf_layer = -1, inf_jobs = 1;
    bool inf_px = false;
    auto* inf = app.add_subcommand("infer", "run the extraction forward pass");
    inf->add_option("--scenes", inf_scenes, "scene JSON")->required();
    inf->add_option("--out", inf_out, "prediction JSON output");
    inf->add_option("--params", inf_params, "parameter manifest JSON");
    inf->add_option("--seed", inf_seed, "seed for deterministic parameter init");
    inf->add_option("--layer", inf_layer, "decoder layer to export (-1 = last)");
    inf->add_option("--jobs", inf_jobs, "parallel scenes");
    inf->add_flag("--pixel-coords", inf_px, "scene coordinates are in pixels");
    inf_cfg.attach(inf);

    // match / loss
    LossFlags match_lf, loss_lf;
    fs::path match_gt, match_pred, loss_gt, loss_pred;
    bool match_px = false, loss_px = false;
    auto* match = app.add_subcommand("match", "key-point dynamic matching");
    match->add_option("--gt", match_gt, "ground-truth scene JSON")->required();
    match->add_option("--pred", match_pred, "prediction JSON")->required();
    match->add_flag("--pixel-coords", match_px, "GT coordinates are in pixels");
    match_lf.attach(match);
    auto* loss = app.add_subcommand("loss", "vector shape loss per instance");
    loss->add_option("--gt", loss_gt, "ground-truth scene JSON")->required();
    loss->add_option("--pred", loss_pred, "prediction JSON")->required();
    loss->add_flag("--pixel-coords", loss_px, "GT coordinates are in pixels");
    loss_lf.attach(loss);

    // fit
    LossFlags fit_lf;
    fs::path fit_gt;
    std::int64_t fit_image = -1;
    int fit_index = 0, fit_m = 12, fit_steps = 2000;
    double fit_lr = 0.05, fit_jitter = 0.05;
    std::uint64_t fit_seed = 0;
    bool fit_px = false;
    auto* fit = app.add_subcommand("fit", "gradient-descent shape fitting sanity run");
    fit->add_option("--gt", fit_gt, "ground-truth scene JSON")->required();
    fit->add_option("--image-id", fit_image, "scene to use (-1 = first)");
    fit->add_option("--gt-index", fit_index, "instance index in the scene");
    fit->add_option("--m-points", fit_m, "number of fitted points (M)");
    fit->add_option("--steps", fit_steps, "descent steps");
    fit->add_option("--lr", fit_lr, "learning rate");
    fit->add_option("--jitter", fit_jitter, "initial point noise");
    fit->add_option("--seed", fit_seed, "jitter seed");
    fit->add_flag("--pixel-coords", fit_px, "GT coordinates are in pixels");
    fit_lf.attach(fit);

    // eval
    EvalOptions eopt;
    fs::path eval_gt, eval_pred, eval_csv;
    bool eval_describe = false, eval_px = false;
    auto* eval = app.add_subcommand("eval", "compute the metric report");
    eval->add_option("--gt", eval_gt, "ground-truth scene JSON");
    eval->add_option("--pred", eval_pred, "prediction JSON");
    eval->add_option("--pixel-tol", eopt.pixel_tol, "pixel metric tolerance");
    eval->add_option("--stroke", eopt.stroke_px, "pixel metric stroke width");
    eval->add_option("--apls-samples", eopt.apls_samples, "APLS node pairs per scene");
    eval->add_option("--seed", eopt.seed, "APLS sampling seed");
    eval->add_option("--csv", eval_csv, "also write a CSV summary");
    eval->add_flag("--describe", eval_describe, "print metric definitions and exit");
    eval->add_flag("--pixel-coords", eval_px, "GT coordinates are in pixels");

    // export
    fs::path exp_scenes, exp_dir = "exports";
    std::string exp_format = "svg";
    bool exp_px = false;
    auto* exp = app.add_subcommand("export", "export scenes to svg or geojson");
    exp->add_option("--scenes", exp_scenes, "scene JSON")->required();
    exp->add_option("--format", exp_format, "output format")
        ->check(CLI::IsMember({"svg", "geojson"}));
    exp->add_option("--out-dir", exp_dir, "output directory");
    exp->add_flag("--pixel-coords", exp_px, "scene coordinates are in pixels");

    auto* selftest = app.add_subcommand("selftest", "run built-in invariant checks");
    (void)selftest;

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (gen->parsed()) {
            if (!mix_flag.empty())
                gp.class_mix = {mix_flag[0], mix_flag[1], mix_flag[2]};
            gp.check();
            return run_gen(gp, gen_out);
        }
        if (ras->parsed()) return run_rasterize(ras_scenes, ras_dir, ras_stroke, ras_px);
        if (inf->parsed())
            return run_infer(inf_scenes, inf_out, inf_cfg, inf_params, inf_seed,
                             inf_layer, inf_jobs, inf_px);
        if (match->parsed())
            return run_match(match_gt, match_pred, match_lf, false, match_px);
        if (loss->parsed()) return run_match(loss_gt, loss_pred, loss_lf, true, loss_px);
        if (fit->parsed())
            return run_fit(fit_gt, fit_image, fit_index, fit_m, fit_steps, fit_lr,
                           fit_jitter, fit_seed, fit_lf, fit_px);
        if (eval->parsed()) {
            if (eval_describe) {
                std::cout << kMetricDescriptions;
                return kExitOk;
            }
            if (eval_gt.empty() || eval_pred.empty())
                throw std::invalid_argument("eval requires --gt and --pred");
            return run_eval(eval_gt, eval_pred, eopt, eval_csv, eval_px);
        }
        if (exp->parsed()) return run_export(exp_scenes, exp_format, exp_dir, exp_px);
        if (selftest->parsed()) return run_selftest();
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitValidation;
}
