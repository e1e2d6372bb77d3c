#pragma once

#include "headpose/geometry.hpp"

namespace headpose {

// Physical side of the box enclosing a real head, meters.
inline constexpr double kFaceBoxMeters = 0.2;

// Detector bounding box, stored raw: center offsets from the principal point
// and side length, both in pixels of the uncropped image, plus the focal
// length that normalizes them.
struct BBoxInfo {
    double tau_x = 0.0;  // bbox center x minus principal point, pixels
    double tau_y = 0.0;
    double b = 0.0;  // square box side, pixels
    double f = 0.0;  // focal length, pixels

    // The focal-normalized triple fed to the regressor.
    Vec3 normalized() const { return {tau_x / f, tau_y / f, b / f}; }
};

// Bounding-box correction parameters: scale factor on the physical box and
// head-center offsets normalized by the box side.
struct CorrectionParams {
    double s = 1.0;
    double tau_tilde_x = 0.0;
    double tau_tilde_y = 0.0;

    Vec3 to_vector() const { return {s, tau_tilde_x, tau_tilde_y}; }
    static CorrectionParams from_vector(const Vec3& v) { return {v[0], v[1], v[2]}; }
};

// Sanity guard used by dataset loaders; catches unit mistakes (pixels where
// normalized offsets belong). Throws DegenerateBox.
void validate_correction(const CorrectionParams& c);

// T_z = 0.2 s f / b
// T_x = (0.2 s / b) tau_x + 0.2 s tau_tilde_x   (T_y analogous)
// Throws DegenerateBox if b <= 0 or s <= 0.
Translation3D translation_from_correction(const CorrectionParams& c, const BBoxInfo& bbox);

// Exact algebraic inverse:
// s = b T_z / (0.2 f),  tau_tilde_x = (T_x - (0.2 s / b) tau_x) / (0.2 s)
// Throws NonPositiveDepth if T_z <= 0.
CorrectionParams correction_from_translation(const Translation3D& T, const BBoxInfo& bbox);

// Reverse-mode derivative of translation_from_correction:
// dL/dT -> (dL/ds, dL/dtau_tilde_x, dL/dtau_tilde_y).
Vec3 translation_from_correction_backward(const CorrectionParams& c, const BBoxInfo& bbox,
                                          const Vec3& dT);

// The translation split into its bbox-ray and in-box offset terms. The x/y
// components of the full translation are bbox_term + face_term; depth is the
// z component. Exposed so the intermediate identities are testable.
struct TranslationParts {
    Vec2 bbox_term;  // (0.2 s / b) * (tau_x, tau_y)
    Vec2 face_term;  // 0.2 s * (tau_tilde_x, tau_tilde_y)
    double depth;    // 0.2 s f / b
};
TranslationParts translation_parts(const CorrectionParams& c, const BBoxInfo& bbox);

// Square box around projected points: center is the midpoint of the tight
// axis-aligned bounds, side is max(width, height) * (1 + margin). Offsets are
// measured from the principal point. Throws DegenerateCloud if all points
// coincide, ShapeMismatch if fewer than 2 points.
BBoxInfo bbox_from_projected_landmarks(const Matrix2Xd& pts, const CameraIntrinsics& K,
                                       double margin);

}  // namespace headpose
