#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "headpose/refinement.hpp"
#include "headpose/synthetic.hpp"

using namespace headpose;

namespace {

struct Scene {
    SceneSample sample;
    GroundTruth gt;
    std::vector<FeatureMap> maps;
    InitialState init;
};

Scene make_scene(std::uint64_t seed, BBoxMode mode = BBoxMode::Analytic) {
    ScenarioConfig cfg = near_scenario();
    cfg.seed = seed;
    cfg.seed_set = true;
    cfg.sample_count = 1;
    cfg.bbox_mode = mode;
    cfg.focal = 240;
    cfg.keep_face_in_frame = true;
    cfg.noise_px = 0.0;
    Scene scene;
    const FaceTemplate tmpl = make_face_template(derive_seed(seed, 5), 1.0);
    Rng rng(derive_seed(seed, 6));
    scene.sample = sample_scene(cfg, tmpl, scenario_intrinsics(cfg), rng);
    scene.sample.render_seed = derive_seed(seed, 7);
    scene.gt = scene.sample.ground_truth();
    for (int t = 1; t <= 3; ++t)
        scene.maps.push_back(render_stage_map(scene.sample, t, 0.0, 8, derive_seed(seed, 8)));
    const FaceTemplate init_tmpl = make_face_template(derive_seed(seed, 9), 1.0);
    scene.init.V0 = init_tmpl.vertices;
    scene.init.R0 = Mat3::Identity();
    return scene;
}

// Zero-residual regressor: the loop must leave the parameters untouched.
class NullRegressor : public Regressor {
  public:
    ResidualKind kind() const override { return ResidualKind::Correction; }
    Residual residual(int, const VectorXd&, const RegressorState&,
                      const BBoxInfo&) const override {
        Residual res;
        res.dV = Matrix3Xd::Zero(3, kDenseLandmarkCount);
        return res;
    }
};

}  // namespace

TEST_CASE("subsample indices are a fixed increasing 305-subset") {
    const auto& idx = subsample_indices();
    REQUIRE(idx.size() == 305);
    std::set<int> unique(idx.begin(), idx.end());
    CHECK(unique.size() == 305);
    CHECK(*unique.begin() >= 0);
    CHECK(*unique.rbegin() < 1220);
    for (size_t i = 1; i < idx.size(); ++i) CHECK(idx[i] > idx[i - 1]);

    Matrix3Xd V = Matrix3Xd::Random(3, 1220);
    const Matrix3Xd a = subsample_landmarks(V);
    const Matrix3Xd b = subsample_landmarks(V);
    CHECK(a.cols() == 305);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(subsample_landmarks(Matrix3Xd::Zero(3, 100)), ShapeMismatch);
}

TEST_CASE("initial state: grid points, c0 and derived translation") {
    const Scene scene = make_scene(100);
    const RegressorState s0 = make_initial_state(scene.init, scene.sample.bbox);
    CHECK(s0.t == 0);
    CHECK(s0.c.s == 1.0);
    CHECK(s0.c.tau_tilde_x == 0.0);
    CHECK(s0.P.cols() == kGridPointCount);
    CHECK(s0.V_sub.cols() == 305);
    const Vec3 T = translation_from_correction({1, 0, 0}, scene.sample.bbox);
    CHECK((s0.T - T).norm() == 0.0);
}

TEST_CASE("zero residual keeps parameters, re-derives consistently") {
    const Scene scene = make_scene(101);
    NullRegressor null;
    const RegressorState s0 = make_initial_state(scene.init, scene.sample.bbox);
    const RegressorState s1 =
        regress_step(s0, scene.maps[0], null, scene.sample.bbox, scene.sample.K);
    CHECK(s1.t == 1);
    CHECK((s1.r6 - s0.r6).cwiseAbs().maxCoeff() == 0.0);
    CHECK((s1.V - s0.V).cwiseAbs().maxCoeff() == 0.0);
    CHECK(s1.c.s == s0.c.s);
    CHECK(state_consistency_error(s1, scene.sample.bbox, scene.sample.K, null.kind()) < 1e-12);
    // P is now in stage-2 units of the projected subsample, not the grid.
    CHECK(s1.P.cols() == 305);
}

TEST_CASE("oracle with alpha=1 lands on the target in one step") {
    const Scene scene = make_scene(102);
    OracleRegressor oracle(TargetParams::from_ground_truth(scene.gt, scene.sample.bbox), 1.0);
    const RefinementResult res = run_refinement(scene.init, scene.maps, oracle, scene.sample.bbox,
                                                scene.sample.K, 3, &scene.gt);
    CHECK(res.trace[0].parameter_error.value() < 1e-9);
    CHECK(res.trace[2].parameter_error.value() < 1e-9);
    CHECK(res.trace[0].add_mm.value() < 1e-9);
    // The recovered translation equals the ground truth through the exact inverse.
    CHECK((res.state.T - scene.gt.T).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("oracle with alpha=0.5 halves the parameter error every step") {
    const Scene scene = make_scene(103);
    OracleRegressor oracle(TargetParams::from_ground_truth(scene.gt, scene.sample.bbox), 0.5);
    const RegressorState s0 = make_initial_state(scene.init, scene.sample.bbox);
    const TargetParams target = TargetParams::from_ground_truth(scene.gt, scene.sample.bbox);
    const double e0 = parameter_space_error(s0, target, ResidualKind::Correction);

    const RefinementResult res = run_refinement(scene.init, scene.maps, oracle, scene.sample.bbox,
                                                scene.sample.K, 3, &scene.gt);
    REQUIRE(res.trace.size() == 3);
    const double e1 = res.trace[0].parameter_error.value();
    const double e2 = res.trace[1].parameter_error.value();
    const double e3 = res.trace[2].parameter_error.value();
    CHECK(e1 / e0 == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(e2 / e1 == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(e3 / e2 == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("one vs three iterations: final error ratio is 4:1 under the 0.5 oracle") {
    const Scene scene = make_scene(104);
    OracleRegressor oracle(TargetParams::from_ground_truth(scene.gt, scene.sample.bbox), 0.5);
    const RefinementResult one = run_refinement(scene.init, scene.maps, oracle, scene.sample.bbox,
                                                scene.sample.K, 1, &scene.gt);
    const RefinementResult three = run_refinement(scene.init, scene.maps, oracle,
                                                  scene.sample.bbox, scene.sample.K, 3, &scene.gt);
    const double ratio = one.trace.back().parameter_error.value() /
                         three.trace.back().parameter_error.value();
    CHECK(ratio == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("monotone error decrease for alpha in (0,1]") {
    const Scene scene = make_scene(105);
    for (double alpha : {0.25, 0.6, 1.0}) {
        OracleRegressor oracle(TargetParams::from_ground_truth(scene.gt, scene.sample.bbox),
                               alpha);
        const RefinementResult res = run_refinement(scene.init, scene.maps, oracle,
                                                    scene.sample.bbox, scene.sample.K, 3,
                                                    &scene.gt);
        double prev = parameter_space_error(make_initial_state(scene.init, scene.sample.bbox),
                                            TargetParams::from_ground_truth(scene.gt,
                                                                            scene.sample.bbox),
                                            ResidualKind::Correction);
        for (const TraceEntry& e : res.trace) {
            CHECK(e.parameter_error.value() <= prev + 1e-12);
            prev = e.parameter_error.value();
        }
    }
}

TEST_CASE("direct-translation loop runs structurally identically") {
    const Scene scene = make_scene(106);
    OracleRegressor oracle(TargetParams::from_ground_truth(scene.gt, scene.sample.bbox), 1.0,
                           ResidualKind::DirectTranslation);
    const RefinementResult res = run_refinement(scene.init, scene.maps, oracle, scene.sample.bbox,
                                                scene.sample.K, 3, &scene.gt);
    REQUIRE(res.trace.size() == 3);
    CHECK((res.state.T - scene.gt.T).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(state_consistency_error(res.state, scene.sample.bbox, scene.sample.K,
                                  ResidualKind::DirectTranslation) < 1e-12);
    // Trace schema carries the same fields in both modes.
    CHECK(res.trace[0].add_mm.has_value());
    CHECK(res.trace[0].parameter_error.has_value());
}

TEST_CASE("state consistency holds after every oracle step") {
    const Scene scene = make_scene(107, BBoxMode::LandmarkTight);
    OracleRegressor oracle(TargetParams::from_ground_truth(scene.gt, scene.sample.bbox), 0.7);
    RegressorState s = make_initial_state(scene.init, scene.sample.bbox);
    for (int t = 0; t < 3; ++t) {
        s = regress_step(s, scene.maps[size_t(t)], oracle, scene.sample.bbox, scene.sample.K);
        CHECK(state_consistency_error(s, scene.sample.bbox, scene.sample.K, oracle.kind()) <
              1e-12);
    }
}

TEST_CASE("refinement is deterministic") {
    const Scene scene = make_scene(108);
    OracleRegressor oracle(TargetParams::from_ground_truth(scene.gt, scene.sample.bbox), 0.5);
    const RefinementResult a = run_refinement(scene.init, scene.maps, oracle, scene.sample.bbox,
                                              scene.sample.K, 3, &scene.gt);
    const RefinementResult b = run_refinement(scene.init, scene.maps, oracle, scene.sample.bbox,
                                              scene.sample.K, 3, &scene.gt);
    for (size_t i = 0; i < 3; ++i) {
        CHECK((a.trace[i].r6 - b.trace[i].r6).cwiseAbs().maxCoeff() == 0.0);
        CHECK((a.trace[i].T - b.trace[i].T).cwiseAbs().maxCoeff() == 0.0);
        CHECK(a.trace[i].add_mm.value() == b.trace[i].add_mm.value());
    }
}

TEST_CASE("map stage mismatch and exhausted iterations are rejected") {
    const Scene scene = make_scene(109);
    NullRegressor null;
    RegressorState s = make_initial_state(scene.init, scene.sample.bbox);
    CHECK_THROWS_AS(regress_step(s, scene.maps[2], null, scene.sample.bbox, scene.sample.K),
                    ShapeMismatch);
    for (int t = 0; t < 3; ++t)
        s = regress_step(s, scene.maps[size_t(t)], null, scene.sample.bbox, scene.sample.K);
    CHECK_THROWS_AS(regress_step(s, scene.maps[2], null, scene.sample.bbox, scene.sample.K),
                    ShapeMismatch);
}

TEST_CASE("trace exports as one JSON record per iteration") {
    const Scene scene = make_scene(110);
    OracleRegressor oracle(TargetParams::from_ground_truth(scene.gt, scene.sample.bbox), 1.0);
    const RefinementResult res = run_refinement(scene.init, scene.maps, oracle, scene.sample.bbox,
                                                scene.sample.K, 2, &scene.gt, nullptr);
    std::ostringstream out;
    write_trace_jsonl(out, res.trace);
    const std::string text = out.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 2);
    CHECK(text.find("\"t\":1") != std::string::npos);
    CHECK(text.find("add_mm") != std::string::npos);
}
