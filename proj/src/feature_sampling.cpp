#include "headpose/feature_sampling.hpp"

#include <cmath>
#include <string>

namespace headpose {

FeatureMap::FeatureMap(int c, int h, int w, int stage_tag)
    : channels(c), height(h), width(w), stage(stage_tag), data(size_t(c) * h * w, 0.0) {
    if (stage_tag != 0) {
        if (stage_tag < 1 || stage_tag > 3) throw ShapeMismatch("feature map stage must be 1..3");
        if (h != stage_extent(stage_tag) || w != stage_extent(stage_tag))
            throw ShapeMismatch("feature map dims do not match stage " + std::to_string(stage_tag));
    }
}

FeatureMap FeatureMap::for_stage(int t, int channels) {
    return FeatureMap(channels, stage_extent(t), stage_extent(t), t);
}

VectorXd bilinear_sample(const FeatureMap& map, const Vec2& p) {
    VectorXd out = VectorXd::Zero(map.channels);
    const double x = p.x(), y = p.y();
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double wx = x - x0, wy = y - y0;
    const double w[4] = {(1 - wx) * (1 - wy), wx * (1 - wy), (1 - wx) * wy, wx * wy};
    const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
    const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
    for (int k = 0; k < 4; ++k) {
        if (xs[k] < 0 || xs[k] >= map.width || ys[k] < 0 || ys[k] >= map.height) continue;
        if (w[k] == 0.0) continue;
        for (int c = 0; c < map.channels; ++c) out[c] += w[k] * map.at(c, ys[k], xs[k]);
    }
    return out;
}

MatrixXd bilinear_sample_many(const FeatureMap& map, const Matrix2Xd& P) {
    MatrixXd out(map.channels, P.cols());
    for (Eigen::Index n = 0; n < P.cols(); ++n) out.col(n) = bilinear_sample(map, P.col(n));
    return out;
}

Matrix2Xd soft_argmax(const Heatmap& h) {
    Matrix2Xd out(2, h.channels);
    const int hw = h.height * h.width;
    for (int c = 0; c < h.channels; ++c) {
        const double* z = h.data.data() + size_t(c) * hw;
        double zmax = z[0];
        for (int i = 1; i < hw; ++i) zmax = std::max(zmax, z[i]);
        double norm = 0.0, ex = 0.0, ey = 0.0;
        for (int y = 0; y < h.height; ++y) {
            for (int x = 0; x < h.width; ++x) {
                const double p = std::exp(z[y * h.width + x] - zmax);
                norm += p;
                ex += p * x;
                ey += p * y;
            }
        }
        out(0, c) = ex / norm;
        out(1, c) = ey / norm;
    }
    return out;
}

std::vector<double> soft_argmax_backward(const Heatmap& h, const Matrix2Xd& d_coords) {
    if (d_coords.cols() != h.channels)
        throw ShapeMismatch("coordinate gradient count does not match heatmap channels");
    std::vector<double> grad(h.data.size(), 0.0);
    const int hw = h.height * h.width;
    const Matrix2Xd coords = soft_argmax(h);
    for (int c = 0; c < h.channels; ++c) {
        const double* z = h.data.data() + size_t(c) * hw;
        double* g = grad.data() + size_t(c) * hw;
        double zmax = z[0];
        for (int i = 1; i < hw; ++i) zmax = std::max(zmax, z[i]);
        double norm = 0.0;
        for (int i = 0; i < hw; ++i) norm += std::exp(z[i] - zmax);
        const double gx = d_coords(0, c), gy = d_coords(1, c);
        const double ex = coords(0, c), ey = coords(1, c);
        // dE[x]/dz_j = p_j (x_j - E[x])
        for (int y = 0; y < h.height; ++y) {
            for (int x = 0; x < h.width; ++x) {
                const double p = std::exp(z[y * h.width + x] - zmax) / norm;
                g[y * h.width + x] = p * (gx * (x - ex) + gy * (y - ey));
            }
        }
    }
    return grad;
}

SamplingPoints grid_points(double width, double height) {
    if (!(width > 0.0) || !(height > 0.0)) throw ShapeMismatch("grid extent must be positive");
    SamplingPoints pts(2, kGridPointCount);
    const double dx = width / kGridSide, dy = height / kGridSide;
    int n = 0;
    for (int j = 0; j < kGridSide; ++j)
        for (int i = 0; i < kGridSide; ++i, ++n) {
            pts(0, n) = (i + 0.5) * dx;
            pts(1, n) = (j + 0.5) * dy;
        }
    return pts;
}

VectorXd build_aligned_feature(const FeatureMap& map, const SamplingPoints& P,
                               const Reducer& reduce) {
    const Eigen::Index n_points = P.cols();
    VectorXd out(5 * n_points);
    for (Eigen::Index n = 0; n < n_points; ++n) {
        VectorXd reduced;
        try {
            reduced = reduce(bilinear_sample(map, P.col(n)));
        } catch (const std::exception& e) {
            throw ShapeMismatch("reducer failed at point " + std::to_string(n) + ": " + e.what());
        }
        if (reduced.size() != 5)
            throw ShapeMismatch("reducer must emit 5 values, got " +
                                std::to_string(reduced.size()) + " at point " + std::to_string(n));
        out.segment<5>(5 * n) = reduced;
    }
    return out;
}

}  // namespace headpose
