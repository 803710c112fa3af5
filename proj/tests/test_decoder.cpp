#include <catch_amalgamated.hpp>

#include "univec/decoder.hpp"
#include "univec/scene_io.hpp"

using namespace univec;

namespace {

Config small_cfg() {
    Config cfg;
    cfg.N = 3;
    cfg.M = 5;
    cfg.C = 8;
    cfg.E = 4;
    cfg.L = 3;
    cfg.K = 6;
    cfg.heads = 2;
    cfg.scales = {16, 32};
    return cfg;
}

FeaturePyramid scene_pyramid(const Config& cfg, std::uint64_t seed) {
    GenParams gp;
    gp.seed = seed;
    gp.n_scenes = 1;
    gp.raster_size = 64;
    const auto scenes = generate_scenes(gp);
    return build_pyramid(rasterize(scenes[0], 1), cfg, seed);
}

FeaturePyramid constant_pyramid(int C, double value) {
    FeaturePyramid pyr;
    FeatureLevel lvl;
    lvl.size = 4;
    lvl.channels = C;
    lvl.data.assign(static_cast<std::size_t>(4) * 4 * C, value);
    pyr.levels.push_back(lvl);
    return pyr;
}

InstanceState encode(const Config& cfg, const FeaturePyramid& pyr,
                     const ParameterSet& p) {
    return refine_instance_queries(select_coarse_queries(pyr, p, cfg.K), pyr, p, cfg.N,
                                   cfg.heads);
}

} // namespace

TEST_CASE("sigmoid-space updates round-trip and stay in the open interval") {
    for (double v : {0.1, 0.25, 0.5, 0.9}) {
        CHECK(sigmoid(inverse_sigmoid(v)) == Catch::Approx(v).margin(1e-12));
        CHECK(sigmoid_shift(v, 0.0) == v); // zero offset is exact, not rounded
    }
    CHECK(inverse_sigmoid(0.0) == inverse_sigmoid(kSigmoidEps));
    CHECK(inverse_sigmoid(1.0) == inverse_sigmoid(1.0 - kSigmoidEps));
    CHECK(sigmoid_shift(0.3, 100.0) < 1.0);
    CHECK(sigmoid_shift(0.3, -100.0) > 0.0);
}

TEST_CASE("update_geo_refs: zero offsets broadcast R_ins at layer 0") {
    const Config cfg = small_cfg();
    const ParameterSet p = make_parameter_set(cfg, 1, 0.0);
    std::vector<Point> r_ins = {{0.2, 0.7}, {0.6, 0.3}};
    std::vector<Eigen::MatrixXd> q_geo(2, Eigen::MatrixXd::Random(cfg.M, cfg.C));
    const auto r0 = update_geo_refs(0, r_ins, {}, q_geo, p, "dec0.georef");
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < cfg.M; ++j) {
            CHECK(r0[i][j].x == Catch::Approx(r_ins[i].x).margin(1e-12));
            CHECK(r0[i][j].y == Catch::Approx(r_ins[i].y).margin(1e-12));
        }
    // later layers refine the previous layer's references, not R_ins
    const auto r1 = update_geo_refs(1, {{0.9, 0.9}, {0.9, 0.9}}, r0, q_geo, p,
                                    "dec1.georef");
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < cfg.M; ++j)
            CHECK(r1[i][j].x == Catch::Approx(r0[i][j].x).margin(1e-12));
}

TEST_CASE("structured deformable attention on a constant field adds the constant") {
    const Config cfg = small_cfg();
    const double c = 0.37;
    const FeaturePyramid pyr = constant_pyramid(cfg.C, c);
    // zero offsets keep every sample at the (interior) reference point
    const ParameterSet p = make_parameter_set(cfg, 2, 0.0);

    DecodeState st;
    st.q_ins = Eigen::MatrixXd::Random(2, cfg.C);
    st.q_geo = {Eigen::MatrixXd::Random(cfg.M, cfg.C),
                Eigen::MatrixXd::Random(cfg.M, cfg.C)};
    st.r_ins = {{0.5, 0.5}, {0.4, 0.6}};
    st.r_geo = {std::vector<Point>(cfg.M, {0.5, 0.5}),
                std::vector<Point>(cfg.M, {0.6, 0.4})};
    const DecodeState before = st;
    structured_deform_attn(st, pyr, p, "dec0.deform");
    for (int i = 0; i < 2; ++i) {
        CHECK((st.q_ins.row(i) - before.q_ins.row(i)).cwiseAbs().maxCoeff() ==
              Catch::Approx(c).margin(1e-12));
        CHECK((st.q_ins.row(i) - before.q_ins.row(i)).minCoeff() ==
              Catch::Approx(c).margin(1e-12));
        CHECK((st.q_geo[i] - before.q_geo[i]).maxCoeff() ==
              Catch::Approx(c).margin(1e-12));
        CHECK((st.q_geo[i] - before.q_geo[i]).minCoeff() ==
              Catch::Approx(c).margin(1e-12));
    }
}

TEST_CASE("intra-level interaction keeps instances isolated") {
    const Config cfg = small_cfg();
    const ParameterSet p = make_parameter_set(cfg, 3);
    DecodeState a;
    a.q_ins = Eigen::MatrixXd::Random(2, cfg.C);
    a.q_geo = {Eigen::MatrixXd::Random(cfg.M, cfg.C),
               Eigen::MatrixXd::Random(cfg.M, cfg.C)};
    DecodeState b = a;
    b.q_geo[1] = Eigen::MatrixXd::Random(cfg.M, cfg.C); // perturb the other instance
    intra_level_interaction(a, p, "dec0", cfg.heads);
    intra_level_interaction(b, p, "dec0", cfg.heads);
    // instance 0's geometric queries are untouched by instance 1
    CHECK((a.q_geo[0] - b.q_geo[0]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("interaction blocks behave with a single token") {
    const Config cfg = small_cfg();
    const ParameterSet p = make_parameter_set(cfg, 4);
    DecodeState st;
    st.q_ins = Eigen::MatrixXd::Random(1, cfg.C);
    st.q_geo = {Eigen::MatrixXd::Random(1, cfg.C)};
    intra_level_interaction(st, p, "dec0", cfg.heads);
    cross_level_interaction(st, p, "dec0", cfg.heads);
    CHECK(st.q_ins.allFinite());
    CHECK(st.q_geo[0].allFinite());
}

TEST_CASE("zero parameters are an exact fixed point of decoding") {
    const Config cfg = small_cfg();
    const FeaturePyramid pyr = scene_pyramid(cfg, 5);
    const ParameterSet p = make_parameter_set(cfg, 5, 0.0);
    const InstanceState init = encode(cfg, pyr, p);
    const auto preds = decode(init, pyr, p, cfg);
    REQUIRE(static_cast<int>(preds.size()) == cfg.L);
    for (const Prediction& pred : preds) {
        for (int i = 0; i < cfg.N; ++i) {
            CHECK(pred.bbox[i][0] == Catch::Approx(init.r_ins[i].x).margin(1e-12));
            CHECK(pred.bbox[i][1] == Catch::Approx(init.r_ins[i].y).margin(1e-12));
            CHECK(pred.bbox[i][2] == Catch::Approx(kDefaultBoxSize).margin(1e-12));
            CHECK(pred.bbox[i][3] == Catch::Approx(kDefaultBoxSize).margin(1e-12));
            for (int j = 0; j < cfg.M; ++j) {
                CHECK(pred.points[i][j].x == Catch::Approx(init.r_ins[i].x).margin(1e-12));
                CHECK(pred.points[i][j].y == Catch::Approx(init.r_ins[i].y).margin(1e-12));
                CHECK(pred.keypoint_prob(i, j) == 0.5);
            }
            CHECK(pred.class_logits.row(i).cwiseAbs().maxCoeff() == 0.0);
        }
    }
}

TEST_CASE("decode with L=1 equals the manually composed layer") {
    Config cfg = small_cfg();
    cfg.L = 1;
    const FeaturePyramid pyr = scene_pyramid(cfg, 6);
    const ParameterSet p = make_parameter_set(cfg, 6);
    const InstanceState init = encode(cfg, pyr, p);

    DecodeState st;
    st.q_ins = init.q_ins;
    st.r_ins = init.r_ins;
    st.q_geo = shape_deformation(init_geometric_queries(st.q_ins, p.get("embed.V")), p,
                                 cfg.heads);
    st.r_geo.assign(st.q_geo.size(), {});
    st.r_geo = update_geo_refs(0, st.r_ins, st.r_geo, st.q_geo, p, "dec0.georef");
    structured_deform_attn(st, pyr, p, "dec0.deform");
    intra_level_interaction(st, p, "dec0", cfg.heads);
    cross_level_interaction(st, p, "dec0", cfg.heads);
    const Prediction manual = predict_heads(st, p, "dec0", 0);

    const auto preds = decode(init, pyr, p, cfg);
    REQUIRE(preds.size() == 1);
    CHECK((preds[0].class_logits - manual.class_logits).cwiseAbs().maxCoeff() == 0.0);
    CHECK((preds[0].keypoint_prob - manual.keypoint_prob).cwiseAbs().maxCoeff() == 0.0);
    for (int i = 0; i < cfg.N; ++i)
        for (int j = 0; j < cfg.M; ++j)
            CHECK(dist(preds[0].points[i][j], manual.points[i][j]) == 0.0);
}

TEST_CASE("all decoded references and outputs stay inside the unit square") {
    const Config cfg = small_cfg();
    const FeaturePyramid pyr = scene_pyramid(cfg, 8);
    const ParameterSet p = make_parameter_set(cfg, 8, 0.5); // deliberately large scale
    const InstanceState init = encode(cfg, pyr, p);
    for (const Prediction& pred : decode(init, pyr, p, cfg))
        for (int i = 0; i < cfg.N; ++i) {
            for (int k = 0; k < 4; ++k) {
                CHECK(pred.bbox[i][k] > 0.0);
                CHECK(pred.bbox[i][k] < 1.0);
            }
            for (int j = 0; j < cfg.M; ++j) {
                CHECK(pred.points[i][j].x > 0.0);
                CHECK(pred.points[i][j].x < 1.0);
                CHECK(pred.keypoint_prob(i, j) > 0.0);
                CHECK(pred.keypoint_prob(i, j) < 1.0);
            }
        }
}

TEST_CASE("extract_vectors filters by class, score and key-point probability") {
    Config cfg = small_cfg();
    const int M = 4, ncls = cfg.class_table.num_classes();
    Prediction pred;
    pred.class_logits = Eigen::MatrixXd::Zero(4, ncls + 1);
    pred.keypoint_prob = Eigen::MatrixXd::Constant(4, M, 0.1);
    pred.points.assign(4, std::vector<Point>(M));
    pred.bbox.assign(4, {0.5, 0.5, 0.1, 0.1});
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < M; ++j)
            pred.points[i][j] = {0.1 * (i + 1), 0.1 * (j + 1)};

    pred.class_logits(0, 0) = 8.0; // confident polygon
    pred.keypoint_prob(0, 0) = 0.9;
    pred.keypoint_prob(0, 2) = 0.8;
    pred.keypoint_prob(0, 3) = 0.7;

    pred.class_logits(1, ncls) = 8.0; // background: dropped

    pred.class_logits(2, 0) = 8.0; // polygon, all probs below threshold: backfill 3
    pred.keypoint_prob.row(2) << 0.4, 0.1, 0.3, 0.2;

    pred.class_logits(3, 2) = 8.0; // segment with three strong probs: trimmed to 2
    pred.keypoint_prob.row(3) << 0.9, 0.6, 0.95, 0.2;

    const auto out = extract_vectors(pred, cfg);
    REQUIRE(out.size() == 3);

    CHECK(out[0].v.kind == StructureKind::Polygon);
    REQUIRE(out[0].v.points.size() == 3);
    CHECK(out[0].v.points[0].y == Catch::Approx(0.1)); // slots 0, 2, 3 in order
    CHECK(out[0].v.points[1].y == Catch::Approx(0.3));
    CHECK(out[0].v.points[2].y == Catch::Approx(0.4));
    CHECK(out[0].score > 0.99);

    CHECK(out[1].v.id == 2);
    REQUIRE(out[1].v.points.size() == 3); // backfilled minimum, slots 0, 2, 3
    CHECK(out[1].kp_prob[0] == Catch::Approx(0.4));
    CHECK(out[1].kp_prob[1] == Catch::Approx(0.3));

    CHECK(out[2].v.kind == StructureKind::Segment);
    REQUIRE(out[2].v.points.size() == 2); // strongest pair 0.95, 0.9 in slot order
    CHECK(out[2].kp_prob[0] == Catch::Approx(0.9));
    CHECK(out[2].kp_prob[1] == Catch::Approx(0.95));
}

TEST_CASE("extract_vectors drops low-score instances") {
    Config cfg = small_cfg();
    cfg.instance_threshold = 0.9;
    const int ncls = cfg.class_table.num_classes();
    Prediction pred;
    pred.class_logits = Eigen::MatrixXd::Zero(1, ncls + 1);
    pred.class_logits(0, 0) = 1.0; // softmax well below 0.9
    pred.keypoint_prob = Eigen::MatrixXd::Constant(1, 4, 0.9);
    pred.points.assign(1, std::vector<Point>(4, {0.5, 0.5}));
    pred.bbox.assign(1, {0.5, 0.5, 0.1, 0.1});
    CHECK(extract_vectors(pred, cfg).empty());
}

TEST_CASE("corner_box clamps to the unit square") {
    Prediction pred;
    pred.bbox = {{0.05, 0.95, 0.3, 0.3}};
    const BBox b = pred.corner_box(0);
    CHECK(b.x_min == 0.0);
    CHECK(b.y_max == 1.0);
    CHECK(b.x_max == Catch::Approx(0.2));
    CHECK(b.y_min == Catch::Approx(0.8));
}
