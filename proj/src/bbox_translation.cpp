#include "headpose/bbox_translation.hpp"

#include <cmath>

namespace headpose {

namespace {
void require_valid_box(const BBoxInfo& bbox) {
    if (!(bbox.b > 0.0)) throw DegenerateBox("bbox side must be positive");
    if (!(bbox.f > 0.0)) throw DegenerateBox("focal length must be positive");
}
}  // namespace

void validate_correction(const CorrectionParams& c) {
    if (!(c.s > 0.0)) throw DegenerateBox("correction scale must be positive");
    if (std::abs(c.tau_tilde_x) >= 10.0 || std::abs(c.tau_tilde_y) >= 10.0)
        throw DegenerateBox("normalized offset out of sane range (pixels passed as normalized?)");
}

Translation3D translation_from_correction(const CorrectionParams& c, const BBoxInfo& bbox) {
    require_valid_box(bbox);
    if (!(c.s > 0.0)) throw DegenerateBox("correction scale must be positive");
    const double k = kFaceBoxMeters * c.s / bbox.b;
    return {k * bbox.tau_x + kFaceBoxMeters * c.s * c.tau_tilde_x,
            k * bbox.tau_y + kFaceBoxMeters * c.s * c.tau_tilde_y, k * bbox.f};
}

CorrectionParams correction_from_translation(const Translation3D& T, const BBoxInfo& bbox) {
    require_valid_box(bbox);
    if (!(T.z() > 0.0)) throw NonPositiveDepth("translation depth must be positive");
    CorrectionParams c;
    c.s = bbox.b * T.z() / (kFaceBoxMeters * bbox.f);
    const double k = kFaceBoxMeters * c.s / bbox.b;
    c.tau_tilde_x = (T.x() - k * bbox.tau_x) / (kFaceBoxMeters * c.s);
    c.tau_tilde_y = (T.y() - k * bbox.tau_y) / (kFaceBoxMeters * c.s);
    return c;
}

Vec3 translation_from_correction_backward(const CorrectionParams& c, const BBoxInfo& bbox,
                                          const Vec3& dT) {
    const double m = kFaceBoxMeters;
    Vec3 g;
    g[0] = dT.x() * (m * bbox.tau_x / bbox.b + m * c.tau_tilde_x) +
           dT.y() * (m * bbox.tau_y / bbox.b + m * c.tau_tilde_y) + dT.z() * m * bbox.f / bbox.b;
    g[1] = dT.x() * m * c.s;
    g[2] = dT.y() * m * c.s;
    return g;
}

TranslationParts translation_parts(const CorrectionParams& c, const BBoxInfo& bbox) {
    require_valid_box(bbox);
    const double k = kFaceBoxMeters * c.s / bbox.b;
    TranslationParts parts;
    parts.bbox_term = {k * bbox.tau_x, k * bbox.tau_y};
    parts.face_term = {kFaceBoxMeters * c.s * c.tau_tilde_x, kFaceBoxMeters * c.s * c.tau_tilde_y};
    parts.depth = k * bbox.f;
    return parts;
}

BBoxInfo bbox_from_projected_landmarks(const Matrix2Xd& pts, const CameraIntrinsics& K,
                                       double margin) {
    if (pts.cols() < 2) throw ShapeMismatch("bbox needs at least 2 points");
    const Vec2 lo = pts.rowwise().minCoeff();
    const Vec2 hi = pts.rowwise().maxCoeff();
    const Vec2 extent = hi - lo;
    if (extent.maxCoeff() <= 0.0) throw DegenerateCloud("all projected points coincide");
    const Vec2 center = 0.5 * (lo + hi);
    BBoxInfo bbox;
    bbox.tau_x = center.x() - K.cx;
    bbox.tau_y = center.y() - K.cy;
    bbox.b = extent.maxCoeff() * (1.0 + margin);
    bbox.f = K.f;
    return bbox;
}

}  // namespace headpose
