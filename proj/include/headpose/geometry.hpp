#pragma once

#include <Eigen/Dense>
#include <utility>

#include "headpose/errors.hpp"

namespace headpose {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vector6d = Eigen::Matrix<double, 6, 1>;
using Eigen::Matrix2Xd;
using Eigen::Matrix3Xd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// 3x3 rotation matrix in camera convention: x right, y down, z forward.
using RotationMatrix = Mat3;
// Camera-space head translation in meters; T.z() > 0 for anything visible.
using Translation3D = Vec3;

// First two columns of a rotation matrix, before orthogonalization. The
// continuous rotation encoding used by the regressor.
struct Rotation6D {
    Vec3 col0 = Vec3::UnitX();
    Vec3 col1 = Vec3::UnitY();

    Vector6d to_vector() const {
        Vector6d v;
        v << col0, col1;
        return v;
    }
    static Rotation6D from_vector(const Vector6d& v) {
        return {v.head<3>(), v.tail<3>()};
    }
};

// Pinhole intrinsics with square pixels and explicit principal point.
// Continuous pixel coordinates, pixel centers at integer positions.
struct CameraIntrinsics {
    double f = 0.0;   // focal length, pixels
    double cx = 0.0;  // principal point, pixels
    double cy = 0.0;
    int width = 0;  // image size, pixels
    int height = 0;
};

// Intrinsic yaw-pitch-roll about the y, x, z axes, in that order. Degrees,
// each in (-180, 180]. This repo's fixed Euler convention; every yaw/pitch/
// roll number in reports and tests uses it.
struct EulerAngles {
    double yaw = 0.0;
    double pitch = 0.0;
    double roll = 0.0;
};

bool is_rotation_matrix(const Mat3& R, double tol = 1e-9);

// Gram-Schmidt: normalize col0, orthogonalize col1 against it, complete with
// the cross product. Invariant to positive rescaling of either input.
// Throws DegenerateInput when a vector is near-zero or the pair near-parallel
// (threshold 1e-12 on the norm and on 1 - |cos|).
RotationMatrix rot6d_to_matrix(const Rotation6D& r);

Rotation6D matrix_to_rot6d(const RotationMatrix& R);

// Reverse-mode derivative of rot6d_to_matrix: given dL/dR, returns
// (dL/dcol0, dL/dcol1).
std::pair<Vec3, Vec3> rot6d_to_matrix_backward(const Rotation6D& r, const Mat3& dR);

// arccos((trace(R1 R2^T) - 1) / 2), argument clamped to [-1, 1]. Radians in
// [0, pi].
double geodesic_angle(const RotationMatrix& R1, const RotationMatrix& R2);

// Decomposition under the repo convention. At gimbal lock (|pitch| = 90 deg)
// the yaw/roll split is canonicalized to roll = 0.
EulerAngles euler_angles_from_matrix(const RotationMatrix& R);

// R = Ry(yaw) * Rx(pitch) * Rz(roll), angles in degrees.
RotationMatrix matrix_from_euler(const EulerAngles& e);

// Perspective projection u = f*X/Z + cx, v = f*Y/Z + cy with
// (X,Y,Z) = R*v + T per point. Output may fall outside the image; that is
// legal. Throws BehindCamera (with the point index) if any depth <= 1e-6.
Matrix2Xd project_points(const Matrix3Xd& V, const RotationMatrix& R, const Translation3D& T,
                         const CameraIntrinsics& K);

// Projection of points already in camera space.
Matrix2Xd project_camera_points(const Matrix3Xd& V_cam, const CameraIntrinsics& K);

// Reverse-mode derivative of project_camera_points: dL/dpixels -> dL/dV_cam.
Matrix3Xd project_camera_backward(const Matrix3Xd& V_cam, const CameraIntrinsics& K,
                                  const Matrix2Xd& d_pixels);

}  // namespace headpose
