#include "headpose/losses.hpp"

#include <cmath>
#include <string>

namespace headpose {

namespace {

double iteration_weight(size_t t_one_based, size_t total) {
    // 2^(t-T): the final iteration carries weight 1, earlier ones halve.
    return std::pow(2.0, double(t_one_based) - double(total));
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void require_same_points(const Matrix3Xd& a, const Matrix3Xd& b, const char* what) {
    if (a.cols() != b.cols())
        throw ShapeMismatch(std::string(what) + ": point counts differ (" +
                            std::to_string(a.cols()) + " vs " + std::to_string(b.cols()) + ")");
}

void require_triangles(const TriangleList& tris, Eigen::Index n_points) {
    for (const auto& tri : tris)
        for (int idx : tri)
            if (idx < 0 || idx >= n_points)
                throw IndexOutOfRange("triangle index " + std::to_string(idx) +
                                      " out of range for " + std::to_string(n_points) + " points");
}

}  // namespace

GroundTruth GroundTruth::from_pose(const Matrix3Xd& V, const Mat3& R, const Vec3& T,
                                   const CameraIntrinsics& K,
                                   const std::vector<int>& sparse_indices, TriangleList triangles) {
    GroundTruth gt;
    gt.V = V;
    gt.R = R;
    gt.T = T;
    gt.V_cam = (R * V).colwise() + T;
    gt.V_img = project_camera_points(gt.V_cam, K);
    gt.L.resize(2, Eigen::Index(sparse_indices.size()));
    for (size_t i = 0; i < sparse_indices.size(); ++i) {
        if (sparse_indices[i] < 0 || sparse_indices[i] >= V.cols())
            throw IndexOutOfRange("sparse landmark index out of range");
        gt.L.col(Eigen::Index(i)) = gt.V_img.col(sparse_indices[i]);
    }
    require_triangles(triangles, V.cols());
    gt.triangles = std::move(triangles);
    return gt;
}

CoordinateLosses landmark_coordinate_losses(std::span<const IterationOutputs> outs,
                                            const GroundTruth& gt, const CameraIntrinsics& K) {
    CoordinateLosses acc;
    const double n = double(gt.V.cols());
    for (size_t t = 0; t < outs.size(); ++t) {
        const IterationOutputs& out = outs[t];
        require_same_points(out.V, gt.V, "landmark losses");
        const double w = iteration_weight(t + 1, outs.size());
        acc.head += w * (out.V - gt.V).cwiseAbs().sum() / n;
        acc.cam += w * (out.camera_coords() - gt.V_cam).cwiseAbs().sum() / n;
        acc.img += w * (out.image_coords(K) - gt.V_img).cwiseAbs().sum() / n;
    }
    return acc;
}

double rotation_loss(std::span<const IterationOutputs> outs, const GroundTruth& gt) {
    double acc = 0.0;
    for (size_t t = 0; t < outs.size(); ++t)
        acc += iteration_weight(t + 1, outs.size()) * (outs[t].R - gt.R).norm();
    return acc;
}

double edge_length_loss(const Matrix3Xd& V_final, const GroundTruth& gt) {
    require_same_points(V_final, gt.V, "edge length loss");
    require_triangles(gt.triangles, V_final.cols());
    double acc = 0.0;
    for (const auto& tri : gt.triangles) {
        const int pairs[3][2] = {{tri[0], tri[1]}, {tri[1], tri[2]}, {tri[0], tri[2]}};
        for (const auto& pr : pairs) {
            const double pred = (V_final.col(pr[0]) - V_final.col(pr[1])).norm();
            const double ref = (gt.V.col(pr[0]) - gt.V.col(pr[1])).norm();
            acc += std::abs(pred - ref);
        }
    }
    return acc;
}

double sparse_landmark_loss(const Matrix2Xd& L, const Matrix2Xd& L_star) {
    if (L.cols() != L_star.cols()) throw ShapeMismatch("sparse landmark counts differ");
    return (L - L_star).cwiseAbs().sum() / double(L.cols());
}

double total_loss(const LossBreakdown& parts, const LossWeights& w) {
    return w.head * parts.head + w.cam * parts.cam + w.img * parts.img + w.rot * parts.rot +
           w.edge * parts.edge + w.sparse * parts.sparse;
}

double stage_objective(const StageParams& p, const GroundTruth& gt, const BBoxInfo& bbox,
                       const CameraIntrinsics& K, const LossWeights& w, double iter_weight,
                       bool include_edge, StageGrad* grad, LossBreakdown* parts) {
    require_same_points(p.V, gt.V, "stage objective");
    const double n = double(gt.V.cols());
    const Rotation6D r6 = Rotation6D::from_vector(p.r6);
    const Mat3 R = rot6d_to_matrix(r6);
    const Vec3 T = p.T_direct ? *p.T_direct : translation_from_correction(p.c, bbox);
    const Matrix3Xd V_cam = (R * p.V).colwise() + T;
    const Matrix2Xd V_img = project_camera_points(V_cam, K);

    const double l_head = (p.V - gt.V).cwiseAbs().sum() / n;
    const double l_cam = (V_cam - gt.V_cam).cwiseAbs().sum() / n;
    const double l_img = (V_img - gt.V_img).cwiseAbs().sum() / n;
    const double l_rot = (R - gt.R).norm();
    const double l_edge = include_edge ? edge_length_loss(p.V, gt) : 0.0;

    if (parts) {
        parts->head += iter_weight * l_head;
        parts->cam += iter_weight * l_cam;
        parts->img += iter_weight * l_img;
        parts->rot += iter_weight * l_rot;
        parts->edge += l_edge;
    }
    const double objective = iter_weight * (w.head * l_head + w.cam * l_cam + w.img * l_img +
                                            w.rot * l_rot) +
                             w.edge * l_edge;
    if (!grad) return objective;

    Matrix3Xd gV = Matrix3Xd::Zero(3, p.V.cols());
    Matrix3Xd gV_cam = Matrix3Xd::Zero(3, p.V.cols());
    Mat3 gR = Mat3::Zero();
    Vec3 gT = Vec3::Zero();

    // Head space L1.
    gV += (iter_weight * w.head / n) *
          (p.V - gt.V).unaryExpr([](double x) { return sign(x); });
    // Camera space L1.
    gV_cam += (iter_weight * w.cam / n) *
              (V_cam - gt.V_cam).unaryExpr([](double x) { return sign(x); });
    // Image space L1, pulled back through the projection.
    const Matrix2Xd g_pix = (iter_weight * w.img / n) *
                            (V_img - gt.V_img).unaryExpr([](double x) { return sign(x); });
    gV_cam += project_camera_backward(V_cam, K, g_pix);
    // Rotation Frobenius term.
    const double frob = l_rot;
    if (frob > 0.0) gR += (iter_weight * w.rot / frob) * (R - gt.R);
    // Edge lengths (final stage only).
    if (include_edge) {
        for (const auto& tri : gt.triangles) {
            const int pairs[3][2] = {{tri[0], tri[1]}, {tri[1], tri[2]}, {tri[0], tri[2]}};
            for (const auto& pr : pairs) {
                const Vec3 d = p.V.col(pr[0]) - p.V.col(pr[1]);
                const double len = d.norm();
                if (len <= 0.0) continue;
                const double ref = (gt.V.col(pr[0]) - gt.V.col(pr[1])).norm();
                const Vec3 g = (w.edge * sign(len - ref) / len) * d;
                gV.col(pr[0]) += g;
                gV.col(pr[1]) -= g;
            }
        }
    }

    // V_cam = R V + T.
    gV += R.transpose() * gV_cam;
    gR += gV_cam * p.V.transpose();
    gT += gV_cam.rowwise().sum();

    grad->dV = gV;
    const auto [g_col0, g_col1] = rot6d_to_matrix_backward(r6, gR);
    grad->dr6 << g_col0, g_col1;
    if (p.T_direct) {
        grad->dT = gT;
        grad->dc = Vec3::Zero();
    } else {
        grad->dc = translation_from_correction_backward(p.c, bbox, gT);
        grad->dT = gT;
    }
    return objective;
}

double sparse_objective(const Heatmap& logits, const Matrix2Xd& L_star, double image_scale,
                        const LossWeights& w, std::vector<double>* d_logits, double* unweighted) {
    const Matrix2Xd coords = soft_argmax(logits);
    const Matrix2Xd L = image_scale * coords;
    const double loss = sparse_landmark_loss(L, L_star);
    if (unweighted) *unweighted = loss;
    if (d_logits) {
        const Matrix2Xd g_coords =
            (w.sparse * image_scale / double(L.cols())) *
            (L - L_star).unaryExpr([](double x) { return sign(x); });
        *d_logits = soft_argmax_backward(logits, g_coords);
    }
    return w.sparse * loss;
}

}  // namespace headpose
