#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "headpose/metrics.hpp"
#include "headpose/rng.hpp"
#include "headpose/synthetic.hpp"

using namespace headpose;

TEST_CASE("rotation errors: equal, single-axis, wrap") {
    const RotationErrors zero = rotation_errors(Mat3::Identity(), Mat3::Identity());
    CHECK(zero.yaw == 0.0);
    CHECK(zero.pitch == 0.0);
    CHECK(zero.roll == 0.0);
    CHECK(zero.ge == doctest::Approx(0.0));

    const RotationErrors roll10 =
        rotation_errors(matrix_from_euler({0, 0, 10}), Mat3::Identity());
    CHECK(roll10.roll == doctest::Approx(10.0).epsilon(1e-9));
    CHECK(roll10.yaw == doctest::Approx(0.0));
    CHECK(roll10.pitch == doctest::Approx(0.0));
    CHECK(roll10.ge == doctest::Approx(10.0).epsilon(1e-9));

    const RotationErrors wrap =
        rotation_errors(matrix_from_euler({179, 0, 0}), matrix_from_euler({-179, 0, 0}));
    CHECK(wrap.yaw == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("GE equals the axis error for any single-axis relative rotation") {
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const double angle = rng.uniform(-60, 60);
        const int axis = rng.uniform_int(0, 2);
        const EulerAngles e{axis == 0 ? angle : 0.0, axis == 1 ? angle : 0.0,
                            axis == 2 ? angle : 0.0};
        const RotationErrors err = rotation_errors(matrix_from_euler(e), Mat3::Identity());
        CHECK(err.ge == doctest::Approx(std::abs(angle)).epsilon(1e-9));
        const double axis_err = axis == 0 ? err.yaw : (axis == 1 ? err.pitch : err.roll);
        CHECK(axis_err == doctest::Approx(std::abs(angle)).epsilon(1e-9));
    }
}

TEST_CASE("translation errors in millimeters with mean") {
    const TranslationErrors zero = translation_errors(Vec3(1, 2, 3), Vec3(1, 2, 3));
    CHECK(zero.tx == 0.0);
    CHECK(zero.mae() == 0.0);

    const TranslationErrors e =
        translation_errors(Vec3(0.001, 0.002, 0.003), Vec3(0, 0, 0));
    CHECK(e.tx == doctest::Approx(1.0));
    CHECK(e.ty == doctest::Approx(2.0));
    CHECK(e.tz == doctest::Approx(3.0));
    CHECK(e.mae() == doctest::Approx(2.0));

    const TranslationErrors flipped =
        translation_errors(Vec3(0, 0, 0), Vec3(0.001, 0.002, 0.003));
    CHECK(flipped.tx == e.tx);
    CHECK(flipped.tz == e.tz);
}

TEST_CASE("ADD: identical pose, pure translation, brute-force rotation oracle") {
    const FaceTemplate tmpl = make_face_template(5, 1.0);
    const Mat3 R = matrix_from_euler({20, -5, 10});
    const Vec3 T(0.05, 0.02, 0.8);
    CHECK(add_metric(tmpl.vertices, R, T, R, T) == 0.0);

    CHECK(add_metric(tmpl.vertices, R, T + Vec3(0, 0, 0.005), R, T) ==
          doctest::Approx(5.0).epsilon(1e-12));

    // Rotation-only error vs an independent per-vertex accumulation.
    const Mat3 R_pred = matrix_from_euler({20, -5, 20});
    double brute = 0.0;
    for (int n = 0; n < tmpl.vertices.cols(); ++n)
        brute += ((R_pred * tmpl.vertices.col(n) + T) - (R * tmpl.vertices.col(n) + T)).norm();
    brute = brute / double(tmpl.vertices.cols()) * 1000.0;
    CHECK(add_metric(tmpl.vertices, R_pred, T, R, T) == doctest::Approx(brute).epsilon(1e-12));
}

TEST_CASE("ADD is invariant to a common translation added to both poses") {
    const FaceTemplate tmpl = make_face_template(7, 1.0);
    const Mat3 Rp = matrix_from_euler({15, 3, -8});
    const Mat3 Rg = matrix_from_euler({12, 1, -5});
    const Vec3 T(0.01, -0.03, 1.1);
    const Vec3 shift(0.3, -0.4, 0.25);
    const double a = add_metric(tmpl.vertices, Rp, T, Rg, T);
    const double b = add_metric(tmpl.vertices, Rp, T + shift, Rg, T + shift);
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("face size error: zero cases and stretched-triangle arithmetic") {
    const FaceTemplate tmpl = make_face_template(11, 1.0);
    CHECK(face_size_error(tmpl.vertices, tmpl.vertices, face_triangles()) == 0.0);

    const Mat3 R = matrix_from_euler({30, 10, -20});
    const Matrix3Xd moved = (R * tmpl.vertices).colwise() + Vec3(0.1, 0.2, 0.3);
    CHECK(face_size_error(moved, tmpl.vertices, face_triangles()) < 1e-9);

    // Right triangle with 0.1 m legs: area 0.005 m^2; scaling one axis by 1.1
    // makes it 0.0055 m^2 -> 500 mm^2 difference.
    Matrix3Xd tri(3, 3);
    tri.col(0) = Vec3(0, 0, 0);
    tri.col(1) = Vec3(0.1, 0, 0);
    tri.col(2) = Vec3(0, 0.1, 0);
    Matrix3Xd stretched = tri;
    stretched.row(0) *= 1.1;
    TriangleList one{{0, 1, 2}};
    CHECK(face_size_error(stretched, tri, one) == doctest::Approx(500.0).epsilon(1e-9));

    TriangleList bad{{0, 1, 9}};
    CHECK_THROWS_AS(face_size_error(tri, tri, bad), IndexOutOfRange);
}

TEST_CASE("landmark distance stats use the lower-middle median") {
    Matrix3Xd gt(3, 4);
    gt.setZero();
    Matrix3Xd pred = gt;
    pred(0, 0) = 0.001;
    pred(0, 1) = 0.002;
    pred(0, 2) = 0.003;
    pred(0, 3) = 0.100;
    const auto [median, mean] = landmark_distance_stats(pred, gt);
    CHECK(median == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(mean == doctest::Approx(26.5).epsilon(1e-12));

    Matrix3Xd equal_pred = gt;
    equal_pred.row(1).setConstant(0.002);
    const auto [med2, mean2] = landmark_distance_stats(equal_pred, gt);
    CHECK(med2 == doctest::Approx(2.0));
    CHECK(mean2 == doctest::Approx(2.0));

    const auto [med0, mean0] = landmark_distance_stats(gt, gt);
    CHECK(med0 == 0.0);
    CHECK(mean0 == 0.0);
}
