#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "headpose/bbox_translation.hpp"
#include "headpose/feature_sampling.hpp"
#include "headpose/losses.hpp"

namespace headpose {

inline constexpr int kDenseLandmarkCount = 1220;
inline constexpr int kSubsampleCount = 305;
inline constexpr int kSparseLandmarkCount = 68;
inline constexpr int kMaxIterations = 3;

// Fixed subsample of the dense landmarks: every 4th vertex of the template
// ordering. Shared by the regressor input and the sampling points.
const std::vector<int>& subsample_indices();
Matrix3Xd subsample_landmarks(const Matrix3Xd& V);
Matrix2Xd subsample_points(const Matrix2Xd& pts);

enum class ResidualKind { Correction, DirectTranslation };

// One regressor output. `dpose` is the correction-parameter residual
// (ds, dtau_tilde_x, dtau_tilde_y) or, for the direct-translation ablation,
// the translation residual in meters.
struct Residual {
    Vector6d dr6 = Vector6d::Zero();
    Vec3 dpose = Vec3::Zero();
    Matrix3Xd dV;
};

// Per-iteration estimation state. r6, c (or T in direct mode) and V are the
// primaries; T/c, V_sub and P are re-derived after every step. P is stored in
// feature-map units of the stage consumed next, min(t+1, 3).
struct RegressorState {
    int t = 0;
    Vector6d r6;
    CorrectionParams c;
    Translation3D T;
    Matrix3Xd V;      // 3 x 1220, head space
    Matrix3Xd V_sub;  // 3 x 305
    SamplingPoints P;

    // [r6 (6) | pose (3) | V_sub flattened per point (915)]; pose is c or T
    // depending on the regressor kind.
    VectorXd theta_sub_flat(ResidualKind kind) const;
};

class Regressor {
  public:
    virtual ~Regressor() = default;
    virtual ResidualKind kind() const = 0;
    // Per-point dimension reducer used to build the aligned feature.
    // Default: truncate the channel vector to its first 5 entries.
    virtual Reducer reducer(int stage) const;
    // The loop calls this to build the aligned feature; implementations may
    // batch it, but must match build_aligned_feature with reducer(stage).
    virtual VectorXd aligned_feature(const FeatureMap& map, const SamplingPoints& P,
                                     int stage) const;
    virtual Residual residual(int stage, const VectorXd& aligned, const RegressorState& state,
                              const BBoxInfo& bbox) const = 0;
};

// Target parameter bundle for the oracle and for parameter-space error.
struct TargetParams {
    Vector6d r6;
    CorrectionParams c;
    Vec3 T;
    Matrix3Xd V;

    static TargetParams from_ground_truth(const GroundTruth& gt, const BBoxInfo& bbox);
};

// Emits alpha * (target - current); with alpha = 1 a single step lands
// exactly on the target.
class OracleRegressor : public Regressor {
  public:
    OracleRegressor(TargetParams target, double alpha,
                    ResidualKind kind = ResidualKind::Correction)
        : target_(std::move(target)), alpha_(alpha), kind_(kind) {}
    ResidualKind kind() const override { return kind_; }
    Residual residual(int stage, const VectorXd& aligned, const RegressorState& state,
                      const BBoxInfo& bbox) const override;

  private:
    TargetParams target_;
    double alpha_;
    ResidualKind kind_;
};

// Template geometry and rotation that seed the loop; the correction
// parameters always start at {s = 1, offsets = 0}. The direct-translation
// ablation starts from a fixed depth prior instead of the box-derived
// translation; giving it the box-derived start would smuggle the correction
// parameterization into the variant that is supposed to live without it.
struct InitialState {
    Matrix3Xd V0;
    Mat3 R0 = Mat3::Identity();
    CorrectionParams c0 = {1.0, 0.0, 0.0};
    Vec3 direct_T0 = Vec3(0.0, 0.0, 0.6);
};

RegressorState make_initial_state(const InitialState& init, const BBoxInfo& bbox,
                                  ResidualKind kind = ResidualKind::Correction);

// One refinement iteration: sample aligned features at P, add the regressor
// residual, re-derive T, the projected landmarks and the next sampling
// points. Throws with iteration context on degenerate geometry.
RegressorState regress_step(const RegressorState& state, const FeatureMap& map,
                            const Regressor& reg, const BBoxInfo& bbox,
                            const CameraIntrinsics& K);

struct TraceEntry {
    int t = 0;
    Vector6d r6;
    CorrectionParams c;
    Vec3 T;
    std::optional<LossBreakdown> losses;
    std::optional<double> add_mm;
    std::optional<double> parameter_error;
};

struct RefinementResult {
    RegressorState state;
    std::vector<TraceEntry> trace;
};

// Runs `iterations` steps from the initial state, consuming maps in stage
// order. When ground truth is supplied the trace carries per-space losses,
// ADD and parameter-space error per iteration.
RefinementResult run_refinement(const InitialState& init, std::span<const FeatureMap> maps,
                                const Regressor& reg, const BBoxInfo& bbox,
                                const CameraIntrinsics& K,
                                int iterations, const GroundTruth* gt = nullptr,
                                const LossWeights* weights = nullptr);

// Euclidean distance between (r6, pose, V) bundles; the oracle contracts this
// by exactly alpha per step.
double parameter_space_error(const RegressorState& state, const TargetParams& target,
                             ResidualKind kind);

// Re-derives T and P from the primaries and reports the largest deviation
// from the stored values (consistency audit).
double state_consistency_error(const RegressorState& state, const BBoxInfo& bbox,
                               const CameraIntrinsics& K, ResidualKind kind);

// JSON-lines trace export, one record per iteration.
void write_trace_jsonl(std::ostream& out, std::span<const TraceEntry> trace);

}  // namespace headpose
