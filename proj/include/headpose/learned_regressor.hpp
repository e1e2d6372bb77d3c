#pragma once

#include <json.hpp>

#include "headpose/refinement.hpp"
#include "headpose/toy_net.hpp"

namespace headpose {

// Per-stage MLPs: a dimension reducer (C -> 64 -> 16 -> 5 per point) and a
// residual head consuming [aligned | r6 | pose | V_sub | bbox triple]. Stage
// 1 sees the 324-point grid, later stages the 305-point subsample, so each
// stage owns its own nets.
struct LearnedRegressorConfig {
    int iterations = 3;
    ResidualKind kind = ResidualKind::Correction;
    int channels = 256;
    int hidden = 256;  // two hidden layers of this width
    int reducer_h1 = 64;
    int reducer_h2 = 16;
    // Zero the residual head so an untrained stage is a no-op; keeps early
    // training steps inside the valid correction-parameter domain.
    bool zero_init_head = true;
    std::uint64_t seed = 0;
};

class LearnedRegressor : public Regressor {
  public:
    explicit LearnedRegressor(const LearnedRegressorConfig& cfg);

    ResidualKind kind() const override { return cfg_.kind; }
    Reducer reducer(int stage) const override;
    VectorXd aligned_feature(const FeatureMap& map, const SamplingPoints& P,
                             int stage) const override;
    Residual residual(int stage, const VectorXd& aligned, const RegressorState& state,
                      const BBoxInfo& bbox) const override;

    const LearnedRegressorConfig& config() const { return cfg_; }
    int stage_count() const { return cfg_.iterations; }
    DenseNet& stage_net(int stage) { return stage_nets_.at(size_t(stage - 1)); }
    DenseNet& reducer_net(int stage) { return reducer_nets_.at(size_t(stage - 1)); }
    const DenseNet& stage_net(int stage) const { return stage_nets_.at(size_t(stage - 1)); }
    const DenseNet& reducer_net(int stage) const { return reducer_nets_.at(size_t(stage - 1)); }

    static int points_for_stage(int stage) {
        return stage == 1 ? kGridPointCount : kSubsampleCount;
    }
    static int input_dim(int stage, ResidualKind) {
        return 5 * points_for_stage(stage) + 6 + 3 + 3 * kSubsampleCount + 3;
    }
    static constexpr int output_dim() { return 6 + 3 + 3 * kDenseLandmarkCount; }

    // The geometry head's raw outputs are scaled down: per-vertex gradient
    // signal is weak and sign-noisy, and Adam turns unscaled noise into
    // full-rate parameter drift that walks depths behind the camera.
    static constexpr double kGeometryResidualScale = 0.1;

    // [aligned | r6 | c or T | V_sub flattened | bbox normalized triple]
    VectorXd build_input(const VectorXd& aligned, const RegressorState& state,
                         const BBoxInfo& bbox) const;
    static Residual split_output(const VectorXd& out);

    nlohmann::json to_json() const;
    static LearnedRegressor from_json(const nlohmann::json& j);
    void save(const std::string& path) const;
    static LearnedRegressor load(const std::string& path);

  private:
    LearnedRegressorConfig cfg_;
    std::vector<DenseNet> stage_nets_;
    std::vector<DenseNet> reducer_nets_;
};

}  // namespace headpose
