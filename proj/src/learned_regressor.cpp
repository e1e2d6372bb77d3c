#include "headpose/learned_regressor.hpp"

#include <fstream>

namespace headpose {

LearnedRegressor::LearnedRegressor(const LearnedRegressorConfig& cfg) : cfg_(cfg) {
    if (cfg.iterations < 1 || cfg.iterations > kMaxIterations)
        throw ConfigError("regressor iterations must be in 1..3");
    for (int stage = 1; stage <= cfg.iterations; ++stage) {
        Rng rng(derive_seed(cfg.seed, 10 + std::uint64_t(stage)));
        // hidden = 0 collapses the residual head to a linear readout, the
        // smallest toy-scale configuration that still trains well.
        std::vector<int> dims;
        if (cfg.hidden > 0) {
            dims = {input_dim(stage, cfg.kind), cfg.hidden, cfg.hidden, output_dim()};
        } else {
            dims = {input_dim(stage, cfg.kind), output_dim()};
        }
        stage_nets_.push_back(DenseNet::mlp(dims, rng));
        if (cfg.zero_init_head) stage_nets_.back().layers.back().W.setZero();
        Rng rrng(derive_seed(cfg.seed, 20 + std::uint64_t(stage)));
        reducer_nets_.push_back(DenseNet::mlp({cfg.channels, cfg.reducer_h1, cfg.reducer_h2, 5},
                                              rrng));
    }
}

Reducer LearnedRegressor::reducer(int stage) const {
    const DenseNet& net = reducer_net(stage);
    return [&net](const VectorXd& v) { return forward(net, v); };
}

VectorXd LearnedRegressor::aligned_feature(const FeatureMap& map, const SamplingPoints& P,
                                           int stage) const {
    const MatrixXd reduced = forward_batch(reducer_net(stage), bilinear_sample_many(map, P));
    return Eigen::Map<const VectorXd>(reduced.data(), reduced.size());
}

VectorXd LearnedRegressor::build_input(const VectorXd& aligned, const RegressorState& state,
                                       const BBoxInfo& bbox) const {
    VectorXd input(aligned.size() + 6 + 3 + 3 * kSubsampleCount + 3);
    input.head(aligned.size()) = aligned;
    input.segment(aligned.size(), 6 + 3 + 3 * kSubsampleCount) = state.theta_sub_flat(cfg_.kind);
    input.tail<3>() = bbox.normalized();
    return input;
}

Residual LearnedRegressor::split_output(const VectorXd& out) {
    if (out.size() != output_dim()) throw ShapeMismatch("regressor output has wrong size");
    Residual res;
    res.dr6 = out.head<6>();
    res.dpose = out.segment<3>(6);
    res.dV = kGeometryResidualScale *
             Eigen::Map<const Matrix3Xd>(out.data() + 9, 3, kDenseLandmarkCount);
    return res;
}

Residual LearnedRegressor::residual(int stage, const VectorXd& aligned,
                                    const RegressorState& state, const BBoxInfo& bbox) const {
    if (stage < 1 || stage > cfg_.iterations)
        throw ConfigError("regressor has no net for stage " + std::to_string(stage));
    return split_output(forward(stage_net(stage), build_input(aligned, state, bbox)));
}

nlohmann::json LearnedRegressor::to_json() const {
    nlohmann::json stage_nets = nlohmann::json::array();
    nlohmann::json reducer_nets = nlohmann::json::array();
    for (const DenseNet& net : stage_nets_) stage_nets.push_back(net_to_json(net));
    for (const DenseNet& net : reducer_nets_) reducer_nets.push_back(net_to_json(net));
    return {{"format", "headpose-regressor"},
            {"version", 1},
            {"kind", cfg_.kind == ResidualKind::Correction ? "correction" : "direct_translation"},
            {"iterations", cfg_.iterations},
            {"channels", cfg_.channels},
            {"hidden", cfg_.hidden},
            {"reducer_h1", cfg_.reducer_h1},
            {"reducer_h2", cfg_.reducer_h2},
            {"zero_init_head", cfg_.zero_init_head},
            {"seed", cfg_.seed},
            {"stage_nets", stage_nets},
            {"reducer_nets", reducer_nets}};
}

LearnedRegressor LearnedRegressor::from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "headpose-regressor" || j.value("version", 0) != 1)
        throw IoFailure("unrecognized regressor bundle format");
    LearnedRegressorConfig cfg;
    cfg.iterations = j.at("iterations");
    cfg.kind = j.at("kind") == "correction" ? ResidualKind::Correction
                                            : ResidualKind::DirectTranslation;
    cfg.channels = j.at("channels");
    cfg.hidden = j.at("hidden");
    cfg.reducer_h1 = j.at("reducer_h1");
    cfg.reducer_h2 = j.at("reducer_h2");
    cfg.zero_init_head = j.value("zero_init_head", true);
    cfg.seed = j.at("seed");
    LearnedRegressor reg(cfg);
    for (int stage = 1; stage <= cfg.iterations; ++stage) {
        reg.stage_net(stage) = net_from_json(j.at("stage_nets").at(size_t(stage - 1)));
        reg.reducer_net(stage) = net_from_json(j.at("reducer_nets").at(size_t(stage - 1)));
    }
    return reg;
}

void LearnedRegressor::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot open regressor bundle for writing: " + path);
    out << to_json().dump() << "\n";
    if (!out) throw IoFailure("regressor bundle write failed: " + path);
}

LearnedRegressor LearnedRegressor::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open regressor bundle: " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
}

}  // namespace headpose
