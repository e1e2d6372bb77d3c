#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "headpose/bbox_translation.hpp"
#include "headpose/rng.hpp"

using namespace headpose;

TEST_CASE("translation_from_correction direct evaluations") {
    const BBoxInfo centered{0, 0, 200, 1000};
    const Vec3 t1 = translation_from_correction({1, 0, 0}, centered);
    CHECK(t1.x() == doctest::Approx(0.0));
    CHECK(t1.y() == doctest::Approx(0.0));
    CHECK(t1.z() == doctest::Approx(1.0).epsilon(1e-15));

    const BBoxInfo offset{100, 0, 200, 1000};
    const Vec3 t2 = translation_from_correction({1, 0.1, 0}, offset);
    CHECK(t2.x() == doctest::Approx(0.12).epsilon(1e-15));
    CHECK(t2.y() == doctest::Approx(0.0));
    CHECK(t2.z() == doctest::Approx(1.0));

    // Depth is linear in the scale factor.
    const Vec3 t3 = translation_from_correction({2, 0, 0}, centered);
    CHECK(t3.z() == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("translation_from_correction rejects degenerate boxes") {
    CHECK_THROWS_AS(translation_from_correction({1, 0, 0}, BBoxInfo{0, 0, 0, 1000}),
                    DegenerateBox);
    CHECK_THROWS_AS(translation_from_correction({1, 0, 0}, BBoxInfo{0, 0, -5, 1000}),
                    DegenerateBox);
    CHECK_THROWS_AS(translation_from_correction({0, 0, 0}, BBoxInfo{0, 0, 200, 1000}),
                    DegenerateBox);
    CHECK_THROWS_AS(translation_from_correction({-1, 0, 0}, BBoxInfo{0, 0, 200, 1000}),
                    DegenerateBox);
}

TEST_CASE("correction_from_translation inverts the examples") {
    const BBoxInfo centered{0, 0, 200, 1000};
    const CorrectionParams c1 = correction_from_translation(Vec3(0, 0, 1.0), centered);
    CHECK(c1.s == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(c1.tau_tilde_x == doctest::Approx(0.0));
    CHECK(c1.tau_tilde_y == doctest::Approx(0.0));

    const BBoxInfo offset{100, 0, 200, 1000};
    const CorrectionParams c2 = correction_from_translation(Vec3(0.12, 0, 1.0), offset);
    CHECK(c2.s == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(c2.tau_tilde_x == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(c2.tau_tilde_y == doctest::Approx(0.0));

    CHECK_THROWS_AS(correction_from_translation(Vec3(0, 0, 0), centered), NonPositiveDepth);
    CHECK_THROWS_AS(correction_from_translation(Vec3(0, 0, -1), centered), NonPositiveDepth);
}

TEST_CASE("exact inverse pair over random samples") {
    Rng rng(41);
    for (int i = 0; i < 10000; ++i) {
        BBoxInfo bbox;
        bbox.tau_x = rng.uniform(-200, 200);
        bbox.tau_y = rng.uniform(-200, 200);
        bbox.b = rng.uniform(20, 400);
        bbox.f = rng.uniform(200, 2000);
        const Vec3 T(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.2, 5.0));

        const CorrectionParams c = correction_from_translation(T, bbox);
        const Vec3 back = translation_from_correction(c, bbox);
        CHECK((back - T).norm() / T.norm() < 1e-12);

        CorrectionParams c0;
        c0.s = rng.uniform(0.2, 4.0);
        c0.tau_tilde_x = rng.uniform(-0.5, 0.5);
        c0.tau_tilde_y = rng.uniform(-0.5, 0.5);
        const Vec3 t = translation_from_correction(c0, bbox);
        const CorrectionParams c_back = correction_from_translation(t, bbox);
        CHECK((c_back.to_vector() - c0.to_vector()).norm() / c0.to_vector().norm() < 1e-12);
    }
}

TEST_CASE("scale factor is depth invariant under the analytic box") {
    // Box projected from the physical 0.2 m face box: b = 0.2 f sigma / T_z.
    const double f = 800.0;
    for (double sigma : {0.85, 1.0, 1.15}) {
        for (double tz = 0.3; tz <= 3.0; tz += 0.05) {
            BBoxInfo bbox{0, 0, kFaceBoxMeters * sigma * f / tz, f};
            const CorrectionParams c = correction_from_translation(Vec3(0, 0, tz), bbox);
            CHECK(std::abs(c.s - sigma) < 1e-12);
        }
    }
}

TEST_CASE("translation splits into bbox-ray and face-offset terms") {
    Rng rng(43);
    for (int i = 0; i < 1000; ++i) {
        BBoxInfo bbox{rng.uniform(-150, 150), rng.uniform(-150, 150), rng.uniform(30, 300),
                      rng.uniform(300, 1500)};
        CorrectionParams c{rng.uniform(0.3, 3.0), rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4)};
        const TranslationParts parts = translation_parts(c, bbox);
        const Vec3 T = translation_from_correction(c, bbox);

        CHECK(parts.bbox_term.x() + parts.face_term.x() == doctest::Approx(T.x()).epsilon(1e-12));
        CHECK(parts.bbox_term.y() + parts.face_term.y() == doctest::Approx(T.y()).epsilon(1e-12));
        CHECK(parts.depth == doctest::Approx(T.z()).epsilon(1e-12));
        // The bbox-ray term is the pinhole ray through the box center:
        // T_bbox / T_z = tau_bbox / f.
        CHECK(parts.bbox_term.x() / parts.depth ==
              doctest::Approx(bbox.tau_x / bbox.f).epsilon(1e-12));
        CHECK(parts.bbox_term.y() / parts.depth ==
              doctest::Approx(bbox.tau_y / bbox.f).epsilon(1e-12));
    }
}

TEST_CASE("bbox_from_projected_landmarks tight bounds with square rule") {
    CameraIntrinsics K{1000, 96, 96, 192, 192};
    Matrix2Xd pts(2, 2);
    pts.col(0) = Vec2(90, 90);
    pts.col(1) = Vec2(110, 110);
    const BBoxInfo bbox = bbox_from_projected_landmarks(pts, K, 0.0);
    CHECK(bbox.tau_x == doctest::Approx(4.0));
    CHECK(bbox.tau_y == doctest::Approx(4.0));
    CHECK(bbox.b == doctest::Approx(20.0));
    CHECK(bbox.f == doctest::Approx(1000.0));

    // Degenerate height: the max-side rule keeps the box square.
    CameraIntrinsics K0{1000, 0, 0, 192, 192};
    Matrix2Xd line(2, 2);
    line.col(0) = Vec2(0, 0);
    line.col(1) = Vec2(10, 0);
    const BBoxInfo lb = bbox_from_projected_landmarks(line, K0, 0.0);
    CHECK(lb.b == doctest::Approx(10.0));
    CHECK(lb.tau_x == doctest::Approx(5.0));

    // Margin scales the side, not the center.
    const BBoxInfo mb = bbox_from_projected_landmarks(pts, K, 0.25);
    CHECK(mb.b == doctest::Approx(25.0));
    CHECK(mb.tau_x == doctest::Approx(4.0));

    Matrix2Xd same(2, 3);
    same.col(0) = same.col(1) = same.col(2) = Vec2(5, 5);
    CHECK_THROWS_AS(bbox_from_projected_landmarks(same, K, 0.0), DegenerateCloud);
}

TEST_CASE("correction sanity bound flags unit mistakes") {
    CHECK_THROWS_AS(validate_correction({1.0, 25.0, 0.0}), DegenerateBox);
    CHECK_THROWS_AS(validate_correction({0.0, 0.0, 0.0}), DegenerateBox);
    CHECK_NOTHROW(validate_correction({1.0, 0.3, -0.2}));
}

TEST_CASE("translation_from_correction backward matches finite differences") {
    Rng rng(47);
    for (int trial = 0; trial < 200; ++trial) {
        BBoxInfo bbox{rng.uniform(-150, 150), rng.uniform(-150, 150), rng.uniform(30, 300),
                      rng.uniform(300, 1500)};
        CorrectionParams c{rng.uniform(0.3, 3.0), rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4)};
        const Vec3 dT(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        const Vec3 g = translation_from_correction_backward(c, bbox, dT);

        const double h = 1e-7;
        auto loss = [&](const CorrectionParams& cc) {
            return translation_from_correction(cc, bbox).dot(dT);
        };
        CorrectionParams cp = c, cm = c;
        cp.s += h;
        cm.s -= h;
        CHECK(g[0] == doctest::Approx((loss(cp) - loss(cm)) / (2 * h)).epsilon(1e-6));
        cp = cm = c;
        cp.tau_tilde_x += h;
        cm.tau_tilde_x -= h;
        CHECK(g[1] == doctest::Approx((loss(cp) - loss(cm)) / (2 * h)).epsilon(1e-6));
        cp = cm = c;
        cp.tau_tilde_y += h;
        cm.tau_tilde_y -= h;
        CHECK(g[2] == doctest::Approx((loss(cp) - loss(cm)) / (2 * h)).epsilon(1e-6));
    }
}
