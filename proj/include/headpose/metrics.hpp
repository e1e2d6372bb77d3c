#pragma once

#include <utility>

#include "headpose/geometry.hpp"
#include "headpose/losses.hpp"

namespace headpose {

// Per-axis absolute Euler errors under the repo convention, wrapped to
// [0, 180], plus the geodesic error. Degrees.
struct RotationErrors {
    double yaw = 0.0;
    double pitch = 0.0;
    double roll = 0.0;
    double ge = 0.0;

    double mae() const { return (yaw + pitch + roll) / 3.0; }
};
RotationErrors rotation_errors(const Mat3& R_pred, const Mat3& R_gt);

// Absolute per-axis translation errors in millimeters.
struct TranslationErrors {
    double tx = 0.0;
    double ty = 0.0;
    double tz = 0.0;

    double mae() const { return (tx + ty + tz) / 3.0; }
};
TranslationErrors translation_errors(const Vec3& T_pred, const Vec3& T_gt);

// Mean over ground-truth vertices of the distance between the two rigid
// placements, millimeters.
double add_metric(const Matrix3Xd& V_star, const Mat3& R_pred, const Vec3& T_pred,
                  const Mat3& R_gt, const Vec3& T_gt);

// |sum of predicted triangle areas - sum of ground-truth areas| in mm^2;
// areas via half cross-product magnitude.
double face_size_error(const Matrix3Xd& V_pred, const Matrix3Xd& V_gt,
                       const TriangleList& triangles);

// (median, mean) per-vertex distance in millimeters. Median is the
// lower-middle element for even counts so the statistic is always an attained
// value.
std::pair<double, double> landmark_distance_stats(const Matrix3Xd& V_pred, const Matrix3Xd& V_gt);

// Aggregated per-sample report rows.
struct PoseErrorReport {
    double yaw = 0.0, pitch = 0.0, roll = 0.0, mae_r = 0.0, ge = 0.0;
    double tx = 0.0, ty = 0.0, tz = 0.0, mae_t = 0.0;
    double add = 0.0;
};

struct GeometryErrorReport {
    double median_mm = 0.0;
    double mean_mm = 0.0;
    double face_size_mm2 = 0.0;
};

}  // namespace headpose
