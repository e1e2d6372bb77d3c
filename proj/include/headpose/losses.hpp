#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "headpose/bbox_translation.hpp"
#include "headpose/feature_sampling.hpp"
#include "headpose/geometry.hpp"

namespace headpose {

using TriangleList = std::vector<std::array<int, 3>>;

// Default objective weights: head / cam / img / rot / edge / sparse.
struct LossWeights {
    double head = 20.0;
    double cam = 2.0;
    double img = 0.01;
    double rot = 10.0;
    double edge = 2.0;
    double sparse = 1.25;
};

// Reference pose and geometry a prediction is scored against. Camera- and
// image-space coordinates are derived once at construction.
struct GroundTruth {
    Matrix3Xd V;      // 3 x N^V head space, meters
    Mat3 R;           // rotation matrix
    Vec3 T;           // camera-space translation, meters
    Matrix3Xd V_cam;  // R*V + T
    Matrix2Xd V_img;  // projected pixels
    Matrix2Xd L;      // 2 x N^L sparse landmarks, image pixels
    TriangleList triangles;

    static GroundTruth from_pose(const Matrix3Xd& V, const Mat3& R, const Vec3& T,
                                 const CameraIntrinsics& K, const std::vector<int>& sparse_indices,
                                 TriangleList triangles);
};

// One refinement iteration's outputs. Camera/image coordinates are always
// recomputed from the primary fields, never stored.
struct IterationOutputs {
    Matrix3Xd V;
    Mat3 R;
    Vec3 T;

    Matrix3Xd camera_coords() const { return (R * V).colwise() + T; }
    Matrix2Xd image_coords(const CameraIntrinsics& K) const {
        return project_points(V, R, T, K);
    }
};

struct CoordinateLosses {
    double head = 0.0;
    double cam = 0.0;
    double img = 0.0;
};

// Per-space landmark losses summed over iterations with weight 2^(t-T),
// T = outs.size(): mean over points of the L1 norm of the per-point
// difference vector. Image space is full-image pixels.
CoordinateLosses landmark_coordinate_losses(std::span<const IterationOutputs> outs,
                                            const GroundTruth& gt, const CameraIntrinsics& K);

// Sum over iterations, weight 2^(t-T), of the Frobenius norm of R_t - R*.
double rotation_loss(std::span<const IterationOutputs> outs, const GroundTruth& gt);

// Per triangle, per vertex pair: absolute difference of predicted and
// ground-truth edge lengths. Shared edges count once per incident triangle.
// Applied to the final iteration's geometry only.
double edge_length_loss(const Matrix3Xd& V_final, const GroundTruth& gt);

// Mean over landmarks of the L1 norm of the 2D difference.
double sparse_landmark_loss(const Matrix2Xd& L, const Matrix2Xd& L_star);

struct LossBreakdown {
    double head = 0.0;
    double cam = 0.0;
    double img = 0.0;
    double rot = 0.0;
    double edge = 0.0;
    double sparse = 0.0;
};

double total_loss(const LossBreakdown& parts, const LossWeights& w);

// ---- gradient path -------------------------------------------------------
//
// The trainable parameterization of one iteration: geometry, 6D rotation and
// correction parameters (translation derived through the bbox), or a direct
// camera-space translation when T_direct is set (the ablation variant).

struct StageParams {
    Matrix3Xd V;
    Vector6d r6;
    CorrectionParams c;
    std::optional<Vec3> T_direct;
};

struct StageGrad {
    Matrix3Xd dV;
    Vector6d dr6;
    Vec3 dc;  // (ds, dtau_tilde_x, dtau_tilde_y); unused in direct mode
    Vec3 dT;  // populated in direct mode
};

// The weighted slice of the total objective contributed by one iteration:
//   iter_weight * (w.head L_head + w.cam L_cam + w.img L_img + w.rot L_rot)
//   [+ w.edge L_edge when include_edge]
// Fills `grad` (if non-null) with dL/d{V, r6, c or T} via the chain through
// Gram-Schmidt, the bbox translation map and the perspective projection.
// `parts` (if non-null) accumulates the unweighted loss components.
double stage_objective(const StageParams& p, const GroundTruth& gt, const BBoxInfo& bbox,
                       const CameraIntrinsics& K, const LossWeights& w, double iter_weight,
                       bool include_edge, StageGrad* grad, LossBreakdown* parts = nullptr);

// w.sparse * sparse_landmark_loss(scale * soft_argmax(logits), L*) and, if
// requested, its gradient w.r.t. the logits. `image_scale` converts heatmap
// texels to image pixels.
double sparse_objective(const Heatmap& logits, const Matrix2Xd& L_star, double image_scale,
                        const LossWeights& w, std::vector<double>* d_logits,
                        double* unweighted = nullptr);

}  // namespace headpose
