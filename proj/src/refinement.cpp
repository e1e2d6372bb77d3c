#include "headpose/refinement.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include <json.hpp>

#include "headpose/metrics.hpp"

namespace headpose {

const std::vector<int>& subsample_indices() {
    static const std::vector<int> indices = [] {
        std::vector<int> v;
        v.reserve(kSubsampleCount);
        for (int i = 0; i < kDenseLandmarkCount; i += 4) v.push_back(i);
        v.resize(kSubsampleCount);
        return v;
    }();
    return indices;
}

Matrix3Xd subsample_landmarks(const Matrix3Xd& V) {
    if (V.cols() != kDenseLandmarkCount)
        throw ShapeMismatch("subsample expects " + std::to_string(kDenseLandmarkCount) +
                            " landmarks, got " + std::to_string(V.cols()));
    const auto& idx = subsample_indices();
    Matrix3Xd out(3, kSubsampleCount);
    for (int i = 0; i < kSubsampleCount; ++i) out.col(i) = V.col(idx[i]);
    return out;
}

Matrix2Xd subsample_points(const Matrix2Xd& pts) {
    if (pts.cols() != kDenseLandmarkCount)
        throw ShapeMismatch("subsample expects " + std::to_string(kDenseLandmarkCount) +
                            " points, got " + std::to_string(pts.cols()));
    const auto& idx = subsample_indices();
    Matrix2Xd out(2, kSubsampleCount);
    for (int i = 0; i < kSubsampleCount; ++i) out.col(i) = pts.col(idx[i]);
    return out;
}

VectorXd RegressorState::theta_sub_flat(ResidualKind kind) const {
    VectorXd flat(6 + 3 + 3 * kSubsampleCount);
    flat.head<6>() = r6;
    flat.segment<3>(6) = kind == ResidualKind::Correction ? c.to_vector() : Vec3(T);
    flat.tail(3 * kSubsampleCount) =
        Eigen::Map<const VectorXd>(V_sub.data(), V_sub.size());
    return flat;
}

Reducer Regressor::reducer(int) const {
    return [](const VectorXd& v) -> VectorXd {
        if (v.size() < 5) throw ShapeMismatch("need at least 5 channels to truncate");
        return v.head<5>();
    };
}

VectorXd Regressor::aligned_feature(const FeatureMap& map, const SamplingPoints& P,
                                    int stage) const {
    return build_aligned_feature(map, P, reducer(stage));
}

TargetParams TargetParams::from_ground_truth(const GroundTruth& gt, const BBoxInfo& bbox) {
    TargetParams tp;
    tp.r6 = matrix_to_rot6d(gt.R).to_vector();
    tp.c = correction_from_translation(gt.T, bbox);
    tp.T = gt.T;
    tp.V = gt.V;
    return tp;
}

Residual OracleRegressor::residual(int, const VectorXd&, const RegressorState& state,
                                   const BBoxInfo&) const {
    Residual res;
    res.dr6 = alpha_ * (target_.r6 - state.r6);
    res.dpose = kind_ == ResidualKind::Correction
                    ? Vec3(alpha_ * (target_.c.to_vector() - state.c.to_vector()))
                    : Vec3(alpha_ * (target_.T - state.T));
    res.dV = alpha_ * (target_.V - state.V);
    return res;
}

namespace {

// Stage whose feature map consumes P next; the last state keeps stage-3 units.
int next_stage(int t) { return std::min(t + 1, kMaxIterations); }

void derive(RegressorState& s, const BBoxInfo& bbox, const CameraIntrinsics& K,
            ResidualKind kind) {
    if (kind == ResidualKind::Correction) {
        s.T = translation_from_correction(s.c, bbox);
    } else {
        s.c = correction_from_translation(s.T, bbox);
    }
    s.V_sub = subsample_landmarks(s.V);
    const Matrix2Xd img = project_points(s.V, rot6d_to_matrix(Rotation6D::from_vector(s.r6)),
                                         s.T, K);
    s.P = to_feature_units(subsample_points(img), stage_extent(next_stage(s.t)), K.width);
}

}  // namespace

RegressorState make_initial_state(const InitialState& init, const BBoxInfo& bbox,
                                  ResidualKind kind) {
    if (init.V0.cols() != kDenseLandmarkCount)
        throw ShapeMismatch("initial geometry must have 1220 landmarks");
    RegressorState s;
    s.t = 0;
    s.r6 = matrix_to_rot6d(init.R0).to_vector();
    if (kind == ResidualKind::Correction) {
        s.c = init.c0;
        s.T = translation_from_correction(s.c, bbox);
    } else {
        s.T = init.direct_T0;
        s.c = correction_from_translation(s.T, bbox);
    }
    s.V = init.V0;
    s.V_sub = subsample_landmarks(s.V);
    const int w = stage_extent(1);
    s.P = grid_points(w, w);
    return s;
}

RegressorState regress_step(const RegressorState& state, const FeatureMap& map,
                            const Regressor& reg, const BBoxInfo& bbox,
                            const CameraIntrinsics& K) {
    if (state.t >= kMaxIterations)
        throw ShapeMismatch("refinement already ran " + std::to_string(kMaxIterations) +
                            " iterations");
    const int stage = state.t + 1;
    if (map.stage != 0 && map.stage != stage)
        throw ShapeMismatch("feature map stage " + std::to_string(map.stage) +
                            " does not match iteration " + std::to_string(stage));
    const VectorXd aligned = reg.aligned_feature(map, state.P, stage);
    const Residual res = reg.residual(stage, aligned, state, bbox);
    if (res.dV.rows() != 3 || res.dV.cols() != kDenseLandmarkCount)
        throw ShapeMismatch("regressor geometry residual has wrong shape");

    RegressorState next;
    next.t = stage;
    next.r6 = state.r6 + res.dr6;
    next.V = state.V + res.dV;
    try {
        // Updates are projected onto the type's validity domain (s > 0,
        // |offset| < 10, depth > 0) so a wild residual cannot put the state
        // where the translation map is undefined.
        if (reg.kind() == ResidualKind::Correction) {
            Vec3 c = state.c.to_vector() + res.dpose;
            c[0] = std::max(c[0], 0.05);
            c[1] = std::clamp(c[1], -9.9, 9.9);
            c[2] = std::clamp(c[2], -9.9, 9.9);
            next.c = CorrectionParams::from_vector(c);
        } else {
            next.T = state.T + res.dpose;
            next.T.z() = std::max(next.T.z(), 0.05);
        }
        derive(next, bbox, K, reg.kind());
    } catch (const Error& e) {
        throw Error("iteration " + std::to_string(stage) + ": " + e.what());
    }
    return next;
}

RefinementResult run_refinement(const InitialState& init, std::span<const FeatureMap> maps,
                                const Regressor& reg, const BBoxInfo& bbox,
                                const CameraIntrinsics& K, int iterations, const GroundTruth* gt,
                                const LossWeights* weights) {
    if (iterations < 1 || iterations > kMaxIterations)
        throw ConfigError("iterations must be in 1.." + std::to_string(kMaxIterations));
    if (int(maps.size()) < iterations)
        throw ShapeMismatch("need one feature map per iteration");

    RefinementResult result;
    result.state = make_initial_state(init, bbox, reg.kind());
    std::optional<TargetParams> target;
    if (gt) target = TargetParams::from_ground_truth(*gt, bbox);

    for (int it = 0; it < iterations; ++it) {
        result.state = regress_step(result.state, maps[it], reg, bbox, K);
        TraceEntry entry;
        entry.t = result.state.t;
        entry.r6 = result.state.r6;
        entry.c = result.state.c;
        entry.T = result.state.T;
        if (gt) {
            const Mat3 R = rot6d_to_matrix(Rotation6D::from_vector(result.state.r6));
            entry.add_mm = add_metric(gt->V, R, result.state.T, gt->R, gt->T);
            entry.parameter_error = parameter_space_error(result.state, *target, reg.kind());
            if (weights) {
                LossBreakdown parts;
                StageParams sp{result.state.V, result.state.r6, result.state.c, std::nullopt};
                if (reg.kind() == ResidualKind::DirectTranslation) sp.T_direct = result.state.T;
                stage_objective(sp, *gt, bbox, K, *weights, 1.0,
                                /*include_edge=*/it == iterations - 1, nullptr, &parts);
                entry.losses = parts;
            }
        }
        result.trace.push_back(std::move(entry));
    }
    return result;
}

double parameter_space_error(const RegressorState& state, const TargetParams& target,
                             ResidualKind kind) {
    const Vec3 pose = kind == ResidualKind::Correction ? state.c.to_vector() : Vec3(state.T);
    const Vec3 pose_target = kind == ResidualKind::Correction ? target.c.to_vector()
                                                              : Vec3(target.T);
    double sq = (state.r6 - target.r6).squaredNorm() + (pose - pose_target).squaredNorm() +
                (state.V - target.V).squaredNorm();
    return std::sqrt(sq);
}

double state_consistency_error(const RegressorState& state, const BBoxInfo& bbox,
                               const CameraIntrinsics& K, ResidualKind kind) {
    double err = 0.0;
    if (kind == ResidualKind::Correction) {
        err = (translation_from_correction(state.c, bbox) - state.T).cwiseAbs().maxCoeff();
    } else {
        const CorrectionParams c = correction_from_translation(state.T, bbox);
        err = (c.to_vector() - state.c.to_vector()).cwiseAbs().maxCoeff();
    }
    const Matrix2Xd img = project_points(
        state.V, rot6d_to_matrix(Rotation6D::from_vector(state.r6)), state.T, K);
    const Matrix2Xd P = to_feature_units(subsample_points(img),
                                         stage_extent(std::min(state.t + 1, kMaxIterations)),
                                         K.width);
    err = std::max(err, (P - state.P).cwiseAbs().maxCoeff());
    err = std::max(err, (subsample_landmarks(state.V) - state.V_sub).cwiseAbs().maxCoeff());
    return err;
}

void write_trace_jsonl(std::ostream& out, std::span<const TraceEntry> trace) {
    for (const TraceEntry& e : trace) {
        nlohmann::json j{{"t", e.t},
                         {"r6", std::vector<double>(e.r6.data(), e.r6.data() + 6)},
                         {"c", {{"s", e.c.s}, {"tx", e.c.tau_tilde_x}, {"ty", e.c.tau_tilde_y}}},
                         {"T", {e.T.x(), e.T.y(), e.T.z()}}};
        if (e.losses) {
            j["losses"] = {{"head", e.losses->head}, {"cam", e.losses->cam},
                           {"img", e.losses->img},   {"rot", e.losses->rot},
                           {"edge", e.losses->edge}};
        }
        if (e.add_mm) j["add_mm"] = *e.add_mm;
        if (e.parameter_error) j["parameter_error"] = *e.parameter_error;
        out << j.dump() << "\n";
    }
}

}  // namespace headpose
