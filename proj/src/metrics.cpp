#include "headpose/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace headpose {

namespace {
// Absolute angular difference wrapped into [0, 180].
double wrap_axis_error(double a_deg, double b_deg) {
    double d = std::fmod(std::abs(a_deg - b_deg), 360.0);
    return d > 180.0 ? 360.0 - d : d;
}

double triangle_area_sum(const Matrix3Xd& V, const TriangleList& tris) {
    double acc = 0.0;
    for (const auto& tri : tris) {
        const Vec3 e1 = V.col(tri[1]) - V.col(tri[0]);
        const Vec3 e2 = V.col(tri[2]) - V.col(tri[0]);
        acc += 0.5 * e1.cross(e2).norm();
    }
    return acc;
}
}  // namespace

RotationErrors rotation_errors(const Mat3& R_pred, const Mat3& R_gt) {
    const EulerAngles pred = euler_angles_from_matrix(R_pred);
    const EulerAngles gt = euler_angles_from_matrix(R_gt);
    RotationErrors e;
    e.yaw = wrap_axis_error(pred.yaw, gt.yaw);
    e.pitch = wrap_axis_error(pred.pitch, gt.pitch);
    e.roll = wrap_axis_error(pred.roll, gt.roll);
    e.ge = geodesic_angle(R_pred, R_gt) * 180.0 / 3.14159265358979323846;
    return e;
}

TranslationErrors translation_errors(const Vec3& T_pred, const Vec3& T_gt) {
    TranslationErrors e;
    e.tx = std::abs(T_pred.x() - T_gt.x()) * 1000.0;
    e.ty = std::abs(T_pred.y() - T_gt.y()) * 1000.0;
    e.tz = std::abs(T_pred.z() - T_gt.z()) * 1000.0;
    return e;
}

double add_metric(const Matrix3Xd& V_star, const Mat3& R_pred, const Vec3& T_pred,
                  const Mat3& R_gt, const Vec3& T_gt) {
    if (V_star.cols() == 0) throw ShapeMismatch("ADD needs at least one vertex");
    double acc = 0.0;
    for (Eigen::Index n = 0; n < V_star.cols(); ++n) {
        const Vec3 v = V_star.col(n);
        acc += ((R_pred * v + T_pred) - (R_gt * v + T_gt)).norm();
    }
    return acc / double(V_star.cols()) * 1000.0;
}

double face_size_error(const Matrix3Xd& V_pred, const Matrix3Xd& V_gt,
                       const TriangleList& triangles) {
    for (const auto& tri : triangles)
        for (int idx : tri)
            if (idx < 0 || idx >= V_pred.cols() || idx >= V_gt.cols())
                throw IndexOutOfRange("triangle index out of range");
    return std::abs(triangle_area_sum(V_pred, triangles) - triangle_area_sum(V_gt, triangles)) *
           1e6;
}

std::pair<double, double> landmark_distance_stats(const Matrix3Xd& V_pred, const Matrix3Xd& V_gt) {
    if (V_pred.cols() != V_gt.cols() || V_pred.cols() == 0)
        throw ShapeMismatch("landmark distance stats need matching non-empty point sets");
    std::vector<double> d(size_t(V_pred.cols()));
    double mean = 0.0;
    for (Eigen::Index n = 0; n < V_pred.cols(); ++n) {
        d[size_t(n)] = (V_pred.col(n) - V_gt.col(n)).norm() * 1000.0;
        mean += d[size_t(n)];
    }
    mean /= double(d.size());
    std::nth_element(d.begin(), d.begin() + (d.size() - 1) / 2, d.end());
    return {d[(d.size() - 1) / 2], mean};
}

}  // namespace headpose
