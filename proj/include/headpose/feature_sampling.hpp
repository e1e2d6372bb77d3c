#pragma once

#include <functional>
#include <vector>

#include "headpose/geometry.hpp"

namespace headpose {

inline constexpr int kImageExtent = 192;
inline constexpr int kGridSide = 18;
inline constexpr int kGridPointCount = kGridSide * kGridSide;  // 324

// Spatial extent of the stage-t feature map: 192 / 2^(5-t) -> 12, 24, 48.
constexpr int stage_extent(int t) { return kImageExtent / (1 << (5 - t)); }

// C x H x W grid of scalars, data laid out [c][y][x]. stage 0 means untagged
// (test fixtures); stages 1..3 pin H = W = stage_extent(stage).
struct FeatureMap {
    int channels = 0;
    int height = 0;
    int width = 0;
    int stage = 0;
    std::vector<double> data;

    FeatureMap() = default;
    FeatureMap(int c, int h, int w, int stage_tag = 0);
    static FeatureMap for_stage(int t, int channels);

    double at(int c, int y, int x) const { return data[(c * height + y) * width + x]; }
    double& at(int c, int y, int x) { return data[(c * height + y) * width + x]; }
};

// Per-landmark pre-softmax logit planes.
struct Heatmap {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Heatmap() = default;
    Heatmap(int c, int h, int w) : channels(c), height(h), width(w), data(size_t(c) * h * w, 0.0) {}

    double at(int c, int y, int x) const { return data[(c * height + y) * width + x]; }
    double& at(int c, int y, int x) { return data[(c * height + y) * width + x]; }
};

// 2 x N continuous coordinates in feature-map pixel units. Out-of-bounds is
// permitted; sampling pads with zeros.
using SamplingPoints = Matrix2Xd;

// Standard bilinear interpolation over the four surrounding texel centers.
// Coordinates outside [0, W-1] x [0, H-1] interpolate against zero padding,
// so an out-of-image landmark contributes no evidence.
VectorXd bilinear_sample(const FeatureMap& map, const Vec2& p);

// All points at once; column n holds the sample at P.col(n).
MatrixXd bilinear_sample_many(const FeatureMap& map, const Matrix2Xd& P);

// Per channel: spatial softmax over the logits, then the expectation of
// (x, y) texel coordinates. Output is 2 x channels.
Matrix2Xd soft_argmax(const Heatmap& h);

// Reverse-mode derivative of soft_argmax; d_coords is 2 x channels, the
// result has the heatmap's layout.
std::vector<double> soft_argmax_backward(const Heatmap& h, const Matrix2Xd& d_coords);

// 18 x 18 points at the cell centers of a uniform partition of
// [0, width) x [0, height), row-major (y outer, x inner).
SamplingPoints grid_points(double width, double height);

// Maps image-pixel coordinates into feature-map units of a W_t-wide map.
inline Matrix2Xd to_feature_units(const Matrix2Xd& image_pts, int map_width, int image_width) {
    return image_pts * (static_cast<double>(map_width) / image_width);
}

// C-vector -> 5-vector dimension reduction applied per sampling point.
using Reducer = std::function<VectorXd(const VectorXd&)>;

// Concatenation of reduced point-wise samples: output[5n..5n+5) is the
// reduced feature of point n. Reducer failures are rethrown with the point
// index attached.
VectorXd build_aligned_feature(const FeatureMap& map, const SamplingPoints& P,
                               const Reducer& reduce);

}  // namespace headpose
