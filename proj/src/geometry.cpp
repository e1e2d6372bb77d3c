#include "headpose/geometry.hpp"

#include <cmath>

namespace headpose {

namespace {
constexpr double kDegenerateTol = 1e-12;
constexpr double kMinDepth = 1e-6;
constexpr double kPi = 3.14159265358979323846;

double deg2rad(double d) { return d * kPi / 180.0; }
double rad2deg(double r) { return r * 180.0 / kPi; }
}  // namespace

bool is_rotation_matrix(const Mat3& R, double tol) {
    const double ortho = (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff();
    return ortho < tol && std::abs(R.determinant() - 1.0) < tol;
}

RotationMatrix rot6d_to_matrix(const Rotation6D& r) {
    const double na = r.col0.norm();
    const double nb = r.col1.norm();
    if (na < kDegenerateTol || nb < kDegenerateTol)
        throw DegenerateInput("rot6d vector norm below 1e-12");
    const Vec3 c0 = r.col0 / na;
    const double cosab = std::abs(c0.dot(r.col1)) / nb;
    if (1.0 - cosab < kDegenerateTol)
        throw DegenerateInput("rot6d vectors are (near-)parallel");
    const Vec3 u = r.col1 - c0.dot(r.col1) * c0;
    const Vec3 c1 = u / u.norm();
    Mat3 R;
    R.col(0) = c0;
    R.col(1) = c1;
    R.col(2) = c0.cross(c1);
    return R;
}

Rotation6D matrix_to_rot6d(const RotationMatrix& R) { return {R.col(0), R.col(1)}; }

std::pair<Vec3, Vec3> rot6d_to_matrix_backward(const Rotation6D& r, const Mat3& dR) {
    const double na = r.col0.norm();
    const Vec3 c0 = r.col0 / na;
    const double d = c0.dot(r.col1);
    const Vec3 u = r.col1 - d * c0;
    const double nu = u.norm();
    const Vec3 c1 = u / nu;
    const Vec3 g2 = dR.col(2);

    // c2 = c0 x c1 contributes to both columns.
    Vec3 g_c1 = dR.col(1) + g2.cross(c0);
    Vec3 g_c0 = dR.col(0) + c1.cross(g2);

    // c1 = u / |u|
    const Vec3 g_u = (g_c1 - g_c1.dot(c1) * c1) / nu;
    // u = col1 - (c0 . col1) c0
    const Vec3 g_col1 = g_u - c0.dot(g_u) * c0;
    g_c0 += -c0.dot(g_u) * r.col1 - d * g_u;
    // c0 = col0 / |col0|
    const Vec3 g_col0 = (g_c0 - g_c0.dot(c0) * c0) / na;
    return {g_col0, g_col1};
}

double geodesic_angle(const RotationMatrix& R1, const RotationMatrix& R2) {
    // atan2 of the (sin, cos) pair instead of acos of the clamped cosine:
    // same angle, but no O(sqrt(eps)) blow-up where the matrices (nearly)
    // coincide.
    const Mat3 M = R1 * R2.transpose();
    const double cos_term = std::clamp((M.trace() - 1.0) / 2.0, -1.0, 1.0);
    const Vec3 skew(M(2, 1) - M(1, 2), M(0, 2) - M(2, 0), M(1, 0) - M(0, 1));
    return std::atan2(0.5 * skew.norm(), cos_term);
}

EulerAngles euler_angles_from_matrix(const RotationMatrix& R) {
    // R = Ry(yaw) Rx(pitch) Rz(roll):
    //   R(1,2) = -sin(pitch)
    //   R(0,2) = sin(yaw) cos(pitch),  R(2,2) = cos(yaw) cos(pitch)
    //   R(1,0) = cos(pitch) sin(roll), R(1,1) = cos(pitch) cos(roll)
    const double sp = std::clamp(-R(1, 2), -1.0, 1.0);
    const double pitch = std::asin(sp);
    const double cp = std::cos(pitch);
    EulerAngles e;
    if (cp > 1e-9) {
        e.yaw = rad2deg(std::atan2(R(0, 2), R(2, 2)));
        e.pitch = rad2deg(pitch);
        e.roll = rad2deg(std::atan2(R(1, 0), R(1, 1)));
    } else {
        // Gimbal lock: with roll fixed at 0, row 0 reads (cos yaw, s*sin yaw, 0)
        // where s = sign(sin pitch).
        const double s = sp > 0 ? 1.0 : -1.0;
        e.yaw = rad2deg(std::atan2(s * R(0, 1), R(0, 0)));
        e.pitch = sp > 0 ? 90.0 : -90.0;
        e.roll = 0.0;
    }
    return e;
}

RotationMatrix matrix_from_euler(const EulerAngles& e) {
    const double y = deg2rad(e.yaw), p = deg2rad(e.pitch), r = deg2rad(e.roll);
    Mat3 Ry, Rx, Rz;
    Ry << std::cos(y), 0, std::sin(y), 0, 1, 0, -std::sin(y), 0, std::cos(y);
    Rx << 1, 0, 0, 0, std::cos(p), -std::sin(p), 0, std::sin(p), std::cos(p);
    Rz << std::cos(r), -std::sin(r), 0, std::sin(r), std::cos(r), 0, 0, 0, 1;
    return Ry * Rx * Rz;
}

Matrix2Xd project_camera_points(const Matrix3Xd& V_cam, const CameraIntrinsics& K) {
    Matrix2Xd out(2, V_cam.cols());
    for (Eigen::Index n = 0; n < V_cam.cols(); ++n) {
        const double z = V_cam(2, n);
        if (z <= kMinDepth) throw BehindCamera(static_cast<int>(n), z);
        out(0, n) = K.f * V_cam(0, n) / z + K.cx;
        out(1, n) = K.f * V_cam(1, n) / z + K.cy;
    }
    return out;
}

Matrix2Xd project_points(const Matrix3Xd& V, const RotationMatrix& R, const Translation3D& T,
                         const CameraIntrinsics& K) {
    return project_camera_points((R * V).colwise() + T, K);
}

Matrix3Xd project_camera_backward(const Matrix3Xd& V_cam, const CameraIntrinsics& K,
                                  const Matrix2Xd& d_pixels) {
    if (d_pixels.cols() != V_cam.cols())
        throw ShapeMismatch("pixel gradient count does not match point count");
    Matrix3Xd g = Matrix3Xd::Zero(3, V_cam.cols());
    for (Eigen::Index n = 0; n < V_cam.cols(); ++n) {
        const double z = V_cam(2, n);
        const double gu = d_pixels(0, n), gv = d_pixels(1, n);
        g(0, n) = K.f * gu / z;
        g(1, n) = K.f * gv / z;
        g(2, n) = -K.f * (gu * V_cam(0, n) + gv * V_cam(1, n)) / (z * z);
    }
    return g;
}

}  // namespace headpose
