#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "headpose/geometry.hpp"
#include "headpose/rng.hpp"

using namespace headpose;

namespace {

Rotation6D random_rot6d(Rng& rng) {
    Rotation6D r;
    for (int i = 0; i < 3; ++i) {
        r.col0[i] = rng.uniform(-1.0, 1.0);
        r.col1[i] = rng.uniform(-1.0, 1.0);
    }
    return r;
}

Mat3 random_rotation(Rng& rng) { return rot6d_to_matrix(random_rot6d(rng)); }

}  // namespace

TEST_CASE("rot6d_to_matrix canonical basis gives identity") {
    const Mat3 R = rot6d_to_matrix({Vec3(1, 0, 0), Vec3(0, 1, 0)});
    CHECK((R - Mat3::Identity()).norm() == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("rot6d_to_matrix is invariant to positive rescaling") {
    const Mat3 R = rot6d_to_matrix({Vec3(2, 0, 0), Vec3(0, 3, 0)});
    CHECK((R - Mat3::Identity()).norm() < 1e-15);

    Rng rng(7);
    for (int i = 0; i < 200; ++i) {
        const Rotation6D r = random_rot6d(rng);
        const Mat3 base = rot6d_to_matrix(r);
        const double a = rng.uniform(0.1, 10.0), b = rng.uniform(0.1, 10.0);
        const Mat3 scaled = rot6d_to_matrix({a * r.col0, b * r.col1});
        CHECK((base - scaled).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("rot6d_to_matrix swapped basis makes a left-handed pair right-handed") {
    // Hand Gram-Schmidt: c0=(0,1,0), c1=(1,0,0), c2 = c0 x c1 = (0,0,-1).
    const Mat3 R = rot6d_to_matrix({Vec3(0, 1, 0), Vec3(1, 0, 0)});
    CHECK(R(0, 0) == doctest::Approx(0.0));
    CHECK(R(1, 0) == doctest::Approx(1.0));
    CHECK(R(0, 1) == doctest::Approx(1.0));
    CHECK(R(2, 2) == doctest::Approx(-1.0));
    CHECK(is_rotation_matrix(R));
}

TEST_CASE("rot6d_to_matrix rejects degenerate input") {
    CHECK_THROWS_AS(rot6d_to_matrix({Vec3::Zero(), Vec3(0, 1, 0)}), DegenerateInput);
    CHECK_THROWS_AS(rot6d_to_matrix({Vec3(1, 0, 0), Vec3(2, 0, 0)}), DegenerateInput);
    CHECK_THROWS_AS(rot6d_to_matrix({Vec3(1, 0, 0), Vec3(-3, 0, 0)}), DegenerateInput);
}

TEST_CASE("rot6d orthonormality over random inputs") {
    Rng rng(11);
    for (int i = 0; i < 10000; ++i) {
        const Mat3 R = rot6d_to_matrix(random_rot6d(rng));
        CHECK((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9);
        CHECK(std::abs(R.determinant() - 1.0) < 1e-9);
    }
}

TEST_CASE("matrix_to_rot6d inverts the embedding") {
    CHECK(matrix_to_rot6d(Mat3::Identity()).col0 == Vec3(1, 0, 0));
    CHECK(matrix_to_rot6d(Mat3::Identity()).col1 == Vec3(0, 1, 0));

    // Rz(90 deg): first two columns (0,1,0) and (-1,0,0).
    const Mat3 Rz = matrix_from_euler({0, 0, 90});
    const Rotation6D r = matrix_to_rot6d(Rz);
    CHECK((r.col0 - Vec3(0, 1, 0)).norm() < 1e-12);
    CHECK((r.col1 - Vec3(-1, 0, 0)).norm() < 1e-12);

    Rng rng(13);
    for (int i = 0; i < 1000; ++i) {
        const Mat3 R = random_rotation(rng);
        const Mat3 back = rot6d_to_matrix(matrix_to_rot6d(R));
        CHECK((R - back).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("geodesic_angle basics") {
    CHECK(geodesic_angle(Mat3::Identity(), Mat3::Identity()) == doctest::Approx(0.0));
    const Mat3 Rz90 = matrix_from_euler({0, 0, 90});
    CHECK(geodesic_angle(Mat3::Identity(), Rz90) ==
          doctest::Approx(3.14159265358979323846 / 2).epsilon(1e-12));

    Rng rng(17);
    for (int i = 0; i < 500; ++i) {
        const Mat3 R = random_rotation(rng);
        CHECK(geodesic_angle(R, R) < 1e-9);
    }
}

TEST_CASE("geodesic_angle symmetry and triangle inequality") {
    Rng rng(19);
    for (int i = 0; i < 2000; ++i) {
        const Mat3 A = random_rotation(rng), B = random_rotation(rng), C = random_rotation(rng);
        CHECK(geodesic_angle(A, B) == doctest::Approx(geodesic_angle(B, A)).epsilon(1e-12));
        CHECK(geodesic_angle(A, C) <= geodesic_angle(A, B) + geodesic_angle(B, C) + 1e-9);
    }
}

TEST_CASE("euler angles identity and single-axis cases") {
    const EulerAngles e0 = euler_angles_from_matrix(Mat3::Identity());
    CHECK(e0.yaw == doctest::Approx(0.0));
    CHECK(e0.pitch == doctest::Approx(0.0));
    CHECK(e0.roll == doctest::Approx(0.0));

    const EulerAngles roll10 = euler_angles_from_matrix(matrix_from_euler({0, 0, 10}));
    CHECK(roll10.roll == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(roll10.yaw == doctest::Approx(0.0));
    CHECK(roll10.pitch == doctest::Approx(0.0));
}

TEST_CASE("euler round trip reconstructs the matrix") {
    Rng rng(23);
    for (int i = 0; i < 1000; ++i) {
        const EulerAngles e{rng.uniform(-179.0, 179.0), rng.uniform(-89.0, 89.0),
                            rng.uniform(-179.0, 179.0)};
        const Mat3 R = matrix_from_euler(e);
        const EulerAngles back = euler_angles_from_matrix(R);
        CHECK((matrix_from_euler(back) - R).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("euler gimbal lock canonicalizes roll to zero") {
    const Mat3 R = matrix_from_euler({30, 90, 25});
    const EulerAngles e = euler_angles_from_matrix(R);
    CHECK(e.roll == doctest::Approx(0.0));
    CHECK(std::abs(e.pitch) == doctest::Approx(90.0));
    CHECK((matrix_from_euler(e) - R).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("project_points pinhole arithmetic") {
    CameraIntrinsics K{1000, 96, 96, 192, 192};
    Matrix3Xd v(3, 1);

    v.col(0) = Vec3(0, 0, 0);
    Matrix2Xd px = project_points(v, Mat3::Identity(), Vec3(0, 0, 2), K);
    CHECK(px(0, 0) == doctest::Approx(96.0));
    CHECK(px(1, 0) == doctest::Approx(96.0));

    v.col(0) = Vec3(0.1, 0, 0);
    px = project_points(v, Mat3::Identity(), Vec3(0, 0, 2), K);
    CHECK(px(0, 0) == doctest::Approx(146.0));
    CHECK(px(1, 0) == doctest::Approx(96.0));

    // Outside the image is legal.
    v.col(0) = Vec3(0, -0.1, 0);
    px = project_points(v, Mat3::Identity(), Vec3(0, 0, 1), K);
    CHECK(px(0, 0) == doctest::Approx(96.0));
    CHECK(px(1, 0) == doctest::Approx(-4.0));
}

TEST_CASE("project_points reports the offending behind-camera index") {
    CameraIntrinsics K{1000, 96, 96, 192, 192};
    Matrix3Xd v(3, 2);
    v.col(0) = Vec3(0, 0, 0);
    v.col(1) = Vec3(0, 0, -3);
    try {
        project_points(v, Mat3::Identity(), Vec3(0, 0, 2), K);
        FAIL("expected BehindCamera");
    } catch (const BehindCamera& e) {
        CHECK(e.index == 1);
    }
}

TEST_CASE("projection similar-triangles consistency") {
    CameraIntrinsics K{800, 96, 96, 192, 192};
    CameraIntrinsics K2 = K;
    K2.f = 2 * K.f;
    Rng rng(29);
    for (int i = 0; i < 500; ++i) {
        Matrix3Xd v(3, 4);
        for (int n = 0; n < 4; ++n)
            v.col(n) = Vec3(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1),
                            rng.uniform(-0.05, 0.05));
        const Mat3 R = random_rotation(rng);
        const Vec3 T(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(0.5, 2.0));
        const Matrix2Xd a = project_points(v, R, T, K);
        // Scaling the whole scene (X, Y scale with Z) leaves pixels fixed.
        const double lam = rng.uniform(0.5, 3.0);
        const Matrix2Xd b = project_points(lam * v, R, lam * T, K);
        CHECK((a - b).cwiseAbs().maxCoeff() < 1e-9);
        // Doubling depth at fixed X, Y is undone by doubling f.
        Matrix3Xd v_cam = (R * v).colwise() + T;
        Matrix3Xd stretched = v_cam;
        stretched.row(2) *= 2.0;
        CHECK((project_camera_points(v_cam, K) - project_camera_points(stretched, K2))
                  .cwiseAbs()
                  .maxCoeff() < 1e-9);
    }
}

TEST_CASE("rot6d backward matches finite differences") {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        const Rotation6D r = random_rot6d(rng);
        Mat3 G;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) G(i, j) = rng.uniform(-1.0, 1.0);
        const auto [ga, gb] = rot6d_to_matrix_backward(r, G);

        const double h = 1e-6;
        for (int k = 0; k < 3; ++k) {
            Rotation6D rp = r, rm = r;
            rp.col0[k] += h;
            rm.col0[k] -= h;
            const double num = ((rot6d_to_matrix(rp) - rot6d_to_matrix(rm)).array() * G.array())
                                   .sum() /
                               (2 * h);
            CHECK(ga[k] == doctest::Approx(num).epsilon(1e-5));
            rp = r;
            rm = r;
            rp.col1[k] += h;
            rm.col1[k] -= h;
            const double num2 = ((rot6d_to_matrix(rp) - rot6d_to_matrix(rm)).array() * G.array())
                                    .sum() /
                                (2 * h);
            CHECK(gb[k] == doctest::Approx(num2).epsilon(1e-5));
        }
    }
}

TEST_CASE("project_camera_backward matches finite differences") {
    CameraIntrinsics K{500, 96, 96, 192, 192};
    Rng rng(37);
    Matrix3Xd v(3, 3);
    for (int n = 0; n < 3; ++n)
        v.col(n) = Vec3(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(0.5, 2.0));
    Matrix2Xd dpix(2, 3);
    for (int n = 0; n < 3; ++n) dpix.col(n) = Vec2(rng.uniform(-1, 1), rng.uniform(-1, 1));
    const Matrix3Xd g = project_camera_backward(v, K, dpix);

    const double h = 1e-6;
    for (int n = 0; n < 3; ++n)
        for (int k = 0; k < 3; ++k) {
            Matrix3Xd vp = v, vm = v;
            vp(k, n) += h;
            vm(k, n) -= h;
            const double num =
                ((project_camera_points(vp, K) - project_camera_points(vm, K)).array() *
                 dpix.array())
                    .sum() /
                (2 * h);
            CHECK(g(k, n) == doctest::Approx(num).epsilon(1e-5));
        }
}
