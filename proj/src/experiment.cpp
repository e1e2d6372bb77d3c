#include "headpose/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <atomic>
#include <numeric>
#include <thread>

namespace headpose {

namespace {

constexpr std::uint64_t kInitTemplateSeed = 4242;

double lower_median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const size_t mid = (v.size() - 1) / 2;
    std::nth_element(v.begin(), v.begin() + std::ptrdiff_t(mid), v.end());
    return v[mid];
}

void shuffle_order(std::vector<int>& order, Rng& rng) {
    for (int i = int(order.size()) - 1; i > 0; --i)
        std::swap(order[size_t(i)], order[size_t(rng.uniform_int(0, i))]);
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

InitialState canonical_initial_state() {
    InitialState init;
    init.V0 = make_face_template(kInitTemplateSeed, 1.0).vertices;
    init.R0 = Mat3::Identity();
    return init;
}

// ---- training ---------------------------------------------------------------

namespace {

// Cascade state entering a stage, per training sample.
struct PrevState {
    bool usable = false;
    Vector6d r6;
    Vec3 pose;  // correction-parameter vector or translation, per kind
    Matrix3Xd V;
};

PrevState cascade_entry_state(const LearnedRegressor& reg, const SceneSample& rec,
                              const InitialState& init, int stage, double noise_px,
                              int channels, std::uint64_t mixing_seed, double feature_noise) {
    PrevState prev;
    try {
        RegressorState state = make_initial_state(init, rec.bbox, reg.kind());
        for (int k = 1; k < stage; ++k) {
            const FeatureMap map =
                render_stage_map(rec, k, noise_px, channels, mixing_seed, feature_noise);
            state = regress_step(state, map, reg, rec.bbox, rec.K);
        }
        prev.r6 = state.r6;
        prev.pose = reg.kind() == ResidualKind::Correction ? state.c.to_vector() : Vec3(state.T);
        prev.V = state.V;
        prev.usable = true;
    } catch (const Error&) {
        prev.usable = false;
    }
    return prev;
}

}  // namespace

LearnedRegressor train_regressor(const SyntheticDataset& train, const InitialState& init,
                                 const TrainConfig& cfg, TrainLog* log) {
    if (train.records.empty()) throw ConfigError("training dataset is empty");
    LearnedRegressorConfig rcfg;
    rcfg.iterations = cfg.iterations;
    rcfg.kind = cfg.kind;
    rcfg.channels = train.config.channels;
    rcfg.hidden = cfg.hidden;
    rcfg.reducer_h1 = cfg.reducer_h1;
    rcfg.reducer_h2 = cfg.reducer_h2;
    rcfg.seed = cfg.seed;
    LearnedRegressor reg(rcfg);

    const int n_samples = int(train.records.size());
    const double noise = train.config.noise_px;
    const int channels = train.config.channels;
    const bool direct = cfg.kind == ResidualKind::DirectTranslation;
    if (log) log->stage_epoch_loss.assign(size_t(cfg.iterations), {});

    AdamConfig acfg;
    acfg.lr = cfg.lr;
    acfg.decay_after_epoch = cfg.lr_decay_epoch;
    acfg.weight_decay = cfg.weight_decay;

    for (int stage = 1; stage <= cfg.iterations; ++stage) {
        // States the cascade produces at this stage's input, under the
        // already-trained earlier stages.
        std::vector<PrevState> prev(static_cast<size_t>(n_samples));
        int unusable = 0;
        for (int i = 0; i < n_samples; ++i) {
            prev[size_t(i)] = cascade_entry_state(reg, train.records[size_t(i)], init, stage,
                                                  noise, channels, train.mixing_seed,
                                                  train.config.feature_noise);
            if (!prev[size_t(i)].usable) ++unusable;
        }
        if (unusable * 10 > n_samples)
            throw Error("stage " + std::to_string(stage) + ": " + std::to_string(unusable) +
                        " of " + std::to_string(n_samples) + " cascade states unusable");

        DenseNet& net = reg.stage_net(stage);
        DenseNet& red = reg.reducer_net(stage);
        AdamState opt_net = AdamState::init(parameter_count(net), acfg);
        AdamState opt_red = AdamState::init(parameter_count(red), acfg);
        const double iter_weight = std::pow(2.0, double(stage) - double(cfg.iterations));
        const bool include_edge = stage == cfg.iterations;
        const bool final_stage = stage == cfg.iterations;
        const int stage_epochs =
            final_stage && cfg.final_stage_epochs > 0 ? cfg.final_stage_epochs : cfg.epochs;
        const int stage_warmup = final_stage && cfg.final_stage_warmup > 0
                                     ? cfg.final_stage_warmup
                                     : cfg.warmup_epochs;
        AdamConfig stage_acfg = acfg;
        if (final_stage && cfg.final_stage_epochs > 0 && cfg.lr_decay_epoch > 0)
            stage_acfg.decay_after_epoch = cfg.final_stage_warmup > 0 ? cfg.final_stage_warmup
                                                                      : cfg.lr_decay_epoch;
        opt_net.cfg = stage_acfg;
        opt_red.cfg = stage_acfg;
        const int n_pts = LearnedRegressor::points_for_stage(stage);
        const int in_dim = LearnedRegressor::input_dim(stage, cfg.kind);

        std::vector<int> order(static_cast<size_t>(n_samples));
        std::iota(order.begin(), order.end(), 0);

        for (int epoch = 0; epoch < stage_epochs; ++epoch) {
            opt_net.epoch = epoch;
            opt_red.epoch = epoch;
            Rng shuffle_rng(derive_seed(cfg.seed, 7000 + std::uint64_t(stage) * 100 +
                                                      std::uint64_t(epoch)));
            shuffle_order(order, shuffle_rng);
            // Error-feedback mixing: later stages also train on states pulled
            // toward the target, so they stay calibrated off the exact
            // cascade trajectory. Evidence is re-jittered every epoch.
            Rng mix_rng(derive_seed(cfg.seed, 5000 + std::uint64_t(stage) * 100 +
                                                  std::uint64_t(epoch)));

            double loss_acc = 0.0;
            int seen = 0;
            int degenerate = 0;
            for (int bstart = 0; bstart < n_samples; bstart += cfg.batch) {
                const int bend = std::min(n_samples, bstart + cfg.batch);

                struct ColState {
                    int rec_index;
                    GroundTruth gt;
                    Vector6d r6_in;
                    CorrectionParams c_in;
                    Vec3 T_in;
                    Matrix3Xd V_in;
                    VectorXd target_out;  // residual the raw net output should emit
                    BatchCache red_cache;
                };
                std::vector<ColState> cols;
                cols.reserve(static_cast<size_t>(bend - bstart));
                MatrixXd X(in_dim, bend - bstart);

                for (int bi = bstart; bi < bend; ++bi) {
                    const int idx = order[size_t(bi)];
                    // Later stages see states near their true input
                    // distribution; the final stage mixes least.
                    const double beta = stage == 1 ? 1.0
                                        : final_stage ? mix_rng.uniform(0.7, 1.0)
                                                      : mix_rng.uniform(0.35, 1.0);
                    if (!prev[size_t(idx)].usable) continue;
                    const SceneSample& rec = train.records[size_t(idx)];
                    try {
                        ColState col;
                        col.rec_index = idx;
                        col.gt = rec.ground_truth();
                        const TargetParams target =
                            TargetParams::from_ground_truth(col.gt, rec.bbox);
                        const Vec3 target_pose =
                            direct ? Vec3(target.T) : Vec3(target.c.to_vector());

                        col.r6_in = target.r6 + beta * (prev[size_t(idx)].r6 - target.r6);
                        const Vec3 pose_in =
                            target_pose + beta * (prev[size_t(idx)].pose - target_pose);
                        col.V_in = target.V + beta * (prev[size_t(idx)].V - target.V);
                        if (direct) {
                            col.T_in = pose_in;
                            col.c_in = correction_from_translation(col.T_in, rec.bbox);
                        } else {
                            col.c_in = CorrectionParams::from_vector(pose_in);
                            col.T_in = translation_from_correction(col.c_in, rec.bbox);
                        }

                        col.target_out.resize(LearnedRegressor::output_dim());
                        col.target_out.head<6>() = target.r6 - col.r6_in;
                        col.target_out.segment<3>(6) =
                            direct ? Vec3(target.T - col.T_in)
                                   : Vec3(target.c.to_vector() - col.c_in.to_vector());
                        col.target_out.tail(3 * kDenseLandmarkCount) =
                            Eigen::Map<const VectorXd>((target.V - col.V_in).eval().data(),
                                                       3 * kDenseLandmarkCount) /
                            LearnedRegressor::kGeometryResidualScale;

                        const Mat3 R_in = rot6d_to_matrix(Rotation6D::from_vector(col.r6_in));
                        const Matrix2Xd img = project_points(col.V_in, R_in, col.T_in, rec.K);
                        const Matrix2Xd P =
                            stage == 1 ? to_feature_units(grid_points(rec.K.width, rec.K.height),
                                                          stage_extent(1), rec.K.width)
                                       : to_feature_units(subsample_points(img),
                                                          stage_extent(stage), rec.K.width);

                        SceneSample jittered = rec;
                        jittered.render_seed = derive_seed(rec.render_seed, 40 + std::uint64_t(epoch));
                        const FeatureMap map = render_stage_map(
                            jittered, stage, std::max(noise, cfg.evidence_jitter_px), channels,
                            train.mixing_seed, train.config.feature_noise);
                        const MatrixXd raw = bilinear_sample_many(map, P);
                        const MatrixXd reduced = forward_batch(red, raw, &col.red_cache);

                        VectorXd input(in_dim);
                        input.head(5 * n_pts) =
                            Eigen::Map<const VectorXd>(reduced.data(), reduced.size());
                        input.segment<6>(5 * n_pts) = col.r6_in;
                        input.segment<3>(5 * n_pts + 6) = direct ? col.T_in : col.c_in.to_vector();
                        input.segment(5 * n_pts + 9, 3 * kSubsampleCount) =
                            Eigen::Map<const VectorXd>(subsample_landmarks(col.V_in).eval().data(),
                                                       3 * kSubsampleCount);
                        input.tail<3>() = rec.bbox.normalized();
                        X.col(Eigen::Index(cols.size())) = input;
                        cols.push_back(std::move(col));
                    } catch (const Error&) {
                        ++degenerate;
                    }
                }
                if (cols.empty()) continue;
                const int batch_n = int(cols.size());
                const MatrixXd Xb = X.leftCols(batch_n);

                BatchCache net_cache;
                const MatrixXd OUT = forward_batch(net, Xb, &net_cache);
                MatrixXd D(OUT.rows(), OUT.cols());
                const bool warmup = epoch < stage_warmup;

                int used = 0;
                for (int c = 0; c < batch_n; ++c) {
                    ColState& col = cols[size_t(c)];
                    if (warmup) {
                        const VectorXd err = OUT.col(c) - col.target_out;
                        loss_acc += 0.5 * err.squaredNorm() / err.size();
                        ++seen;
                        ++used;
                        D.col(c) = err / err.size();
                        continue;
                    }
                    const Residual res = LearnedRegressor::split_output(OUT.col(c));
                    StageParams p;
                    p.V = col.V_in + res.dV;
                    p.r6 = col.r6_in + res.dr6;
                    if (direct) {
                        p.c = col.c_in;
                        p.T_direct = col.T_in + res.dpose;
                    } else {
                        p.c = CorrectionParams::from_vector(col.c_in.to_vector() + res.dpose);
                    }
                    StageGrad sg;
                    double loss;
                    try {
                        const SceneSample& rec = train.records[size_t(col.rec_index)];
                        loss = stage_objective(p, col.gt, rec.bbox, rec.K, cfg.weights,
                                               iter_weight, include_edge, &sg);
                    } catch (const Error&) {
                        ++degenerate;
                        D.col(c).setZero();
                        continue;
                    }
                    loss_acc += loss;
                    ++seen;
                    ++used;
                    D.col(c).head<6>() = sg.dr6;
                    D.col(c).segment<3>(6) = direct ? sg.dT : sg.dc;
                    D.col(c).tail(3 * kDenseLandmarkCount) =
                        LearnedRegressor::kGeometryResidualScale *
                        Eigen::Map<const VectorXd>(sg.dV.data(), sg.dV.size());
                }
                if (used == 0) continue;
                D /= double(used);

                const NetBatchGradients ng = backward_batch(net, net_cache, D);
                VectorXd params = get_parameters(net);
                adam_step(opt_net, params, flatten_batch_gradients(net, ng));
                set_parameters(net, params);

                VectorXd red_grads = VectorXd::Zero(parameter_count(red));
                for (int c = 0; c < batch_n; ++c) {
                    const Eigen::Map<const MatrixXd> dA(ng.dX.col(c).data(), 5, n_pts);
                    const NetBatchGradients rg =
                        backward_batch(red, cols[size_t(c)].red_cache, dA);
                    red_grads += flatten_batch_gradients(red, rg);
                }
                VectorXd red_params = get_parameters(red);
                adam_step(opt_red, red_params, red_grads);
                set_parameters(red, red_params);
            }
            if (log) log->stage_epoch_loss[size_t(stage - 1)].push_back(
                seen > 0 ? loss_acc / seen : 0.0);
            if (2 * degenerate > n_samples - unusable)
                throw Error("stage " + std::to_string(stage) + " epoch " +
                            std::to_string(epoch) + ": training diverged (" +
                            std::to_string(degenerate) + " degenerate predictions)");
        }
    }
    return reg;
}

// ---- evaluation -------------------------------------------------------------

namespace {

class SharedLearned : public Regressor {
  public:
    explicit SharedLearned(const LearnedRegressor& reg) : reg_(reg) {}
    ResidualKind kind() const override { return reg_.kind(); }
    Reducer reducer(int stage) const override { return reg_.reducer(stage); }
    Residual residual(int stage, const VectorXd& aligned, const RegressorState& state,
                      const BBoxInfo& bbox) const override {
        return reg_.residual(stage, aligned, state, bbox);
    }

  private:
    const LearnedRegressor& reg_;
};

}  // namespace

RegressorFactory learned_factory(const LearnedRegressor& reg) {
    return [&reg](const SceneSample&, const GroundTruth&) {
        return std::make_unique<SharedLearned>(reg);
    };
}

RegressorFactory oracle_factory(double alpha, ResidualKind kind) {
    return [alpha, kind](const SceneSample& rec, const GroundTruth& gt) {
        return std::make_unique<OracleRegressor>(TargetParams::from_ground_truth(gt, rec.bbox),
                                                 alpha, kind);
    };
}

EvalSummary evaluate(const RegressorFactory& factory, const SyntheticDataset& ds,
                     const InitialState& init, int iterations, int threads) {
    const int n = int(ds.records.size());
    EvalSummary summary;
    summary.count = n;
    summary.iterations = iterations;
    summary.per_sample.resize(static_cast<size_t>(n));
    std::vector<char> ok(size_t(n), 0);

    auto worker = [&](int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
            const SceneSample& rec = ds.records[size_t(i)];
            try {
                const GroundTruth gt = rec.ground_truth();
                std::vector<FeatureMap> maps;
                maps.reserve(static_cast<size_t>(iterations));
                for (int t = 1; t <= iterations; ++t)
                    maps.push_back(render_stage_map(rec, t, ds.config.noise_px,
                                                    ds.config.channels, ds.mixing_seed,
                                                    ds.config.feature_noise));
                const auto reg = factory(rec, gt);
                const RefinementResult res =
                    run_refinement(init, maps, *reg, rec.bbox, rec.K, iterations, &gt, nullptr);

                SampleEval& ev = summary.per_sample[size_t(i)];
                const Mat3 R_pred =
                    rot6d_to_matrix(Rotation6D::from_vector(res.state.r6));
                const RotationErrors re = rotation_errors(R_pred, gt.R);
                const TranslationErrors te = translation_errors(res.state.T, gt.T);
                ev.pose.yaw = re.yaw;
                ev.pose.pitch = re.pitch;
                ev.pose.roll = re.roll;
                ev.pose.mae_r = re.mae();
                ev.pose.ge = re.ge;
                ev.pose.tx = te.tx;
                ev.pose.ty = te.ty;
                ev.pose.tz = te.tz;
                ev.pose.mae_t = te.mae();
                ev.pose.add = add_metric(gt.V, R_pred, res.state.T, gt.R, gt.T);
                const auto [median_mm, mean_mm] = landmark_distance_stats(res.state.V, gt.V);
                ev.geometry.median_mm = median_mm;
                ev.geometry.mean_mm = mean_mm;
                ev.geometry.face_size_mm2 = face_size_error(res.state.V, gt.V, gt.triangles);
                ev.trace_add.clear();
                ev.trace_mae_r.clear();
                ev.trace_mae_t.clear();
                for (const TraceEntry& e : res.trace) {
                    ev.trace_add.push_back(e.add_mm.value());
                    const Mat3 R_t = rot6d_to_matrix(Rotation6D::from_vector(e.r6));
                    ev.trace_mae_r.push_back(rotation_errors(R_t, gt.R).mae());
                    ev.trace_mae_t.push_back(translation_errors(e.T, gt.T).mae());
                }
                ok[size_t(i)] = 1;
            } catch (const Error&) {
                ok[size_t(i)] = 0;
            }
        }
    };

    int n_threads = threads > 0 ? threads : int(std::thread::hardware_concurrency());
    n_threads = std::max(1, std::min(n_threads, n));
    if (n_threads == 1) {
        worker(0, n);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (n + n_threads - 1) / n_threads;
        for (int t = 0; t < n_threads; ++t) {
            const int lo = t * chunk, hi = std::min(n, lo + chunk);
            if (lo < hi) pool.emplace_back(worker, lo, hi);
        }
        for (auto& th : pool) th.join();
    }

    // Ordered aggregation over successful samples.
    std::vector<double> adds;
    int monotone = 0, used = 0;
    PoseErrorReport& m = summary.mean;
    GeometryErrorReport& g = summary.mean_geometry;
    for (int i = 0; i < n; ++i) {
        if (!ok[size_t(i)]) continue;
        const SampleEval& ev = summary.per_sample[size_t(i)];
        ++used;
        m.yaw += ev.pose.yaw;
        m.pitch += ev.pose.pitch;
        m.roll += ev.pose.roll;
        m.mae_r += ev.pose.mae_r;
        m.ge += ev.pose.ge;
        m.tx += ev.pose.tx;
        m.ty += ev.pose.ty;
        m.tz += ev.pose.tz;
        m.mae_t += ev.pose.mae_t;
        m.add += ev.pose.add;
        g.median_mm += ev.geometry.median_mm;
        g.mean_mm += ev.geometry.mean_mm;
        g.face_size_mm2 += ev.geometry.face_size_mm2;
        adds.push_back(ev.pose.add);
        bool non_increasing = true;
        for (size_t k = 1; k < ev.trace_add.size(); ++k)
            if (ev.trace_add[k] > ev.trace_add[k - 1]) non_increasing = false;
        if (non_increasing) ++monotone;
    }
    summary.failed = n - used;
    summary.mean_add_by_iter.assign(size_t(iterations), 0.0);
    summary.median_add_by_iter.assign(size_t(iterations), 0.0);
    summary.mean_mae_r_by_iter.assign(size_t(iterations), 0.0);
    summary.mean_mae_t_by_iter.assign(size_t(iterations), 0.0);
    for (int t = 0; t < iterations; ++t) {
        std::vector<double> adds_t;
        for (int i = 0; i < n; ++i) {
            if (!ok[size_t(i)]) continue;
            const SampleEval& ev = summary.per_sample[size_t(i)];
            summary.mean_add_by_iter[size_t(t)] += ev.trace_add[size_t(t)];
            summary.mean_mae_r_by_iter[size_t(t)] += ev.trace_mae_r[size_t(t)];
            summary.mean_mae_t_by_iter[size_t(t)] += ev.trace_mae_t[size_t(t)];
            adds_t.push_back(ev.trace_add[size_t(t)]);
        }
        if (!adds_t.empty()) {
            summary.mean_add_by_iter[size_t(t)] /= double(adds_t.size());
            summary.mean_mae_r_by_iter[size_t(t)] /= double(adds_t.size());
            summary.mean_mae_t_by_iter[size_t(t)] /= double(adds_t.size());
            summary.median_add_by_iter[size_t(t)] = lower_median(adds_t);
        }
    }
    if (used > 0) {
        const double inv = 1.0 / used;
        m.yaw *= inv;
        m.pitch *= inv;
        m.roll *= inv;
        m.mae_r *= inv;
        m.ge *= inv;
        m.tx *= inv;
        m.ty *= inv;
        m.tz *= inv;
        m.mae_t *= inv;
        m.add *= inv;
        g.median_mm *= inv;
        g.mean_mm *= inv;
        g.face_size_mm2 *= inv;
        summary.median_add = lower_median(adds);
        summary.monotone_fraction = double(monotone) / used;
    }
    return summary;
}

// ---- reports ----------------------------------------------------------------

ReportRow summarize(const EvalSummary& s, const std::string& method, const std::string& scenario,
                    std::uint64_t seed) {
    ReportRow row;
    row.method = method;
    row.scenario = scenario;
    row.iterations = s.iterations;
    row.seed = seed;
    row.count = s.count;
    row.mae_r = s.mean.mae_r;
    row.ge = s.mean.ge;
    row.mae_t = s.mean.mae_t;
    row.add_mean = s.mean.add;
    row.add_median = s.median_add;
    row.median_mm = s.mean_geometry.median_mm;
    row.mean_mm = s.mean_geometry.mean_mm;
    row.face_size_mm2 = s.mean_geometry.face_size_mm2;
    row.monotone_fraction = s.monotone_fraction;
    return row;
}

void write_report_csv(const std::string& path, std::span<const ReportRow> rows) {
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot open report for writing: " + path);
    out << "# headpose-report v1\n";
    out << "method,scenario,iterations,seed,count,mae_r_deg,ge_deg,mae_t_mm,add_mean_mm,"
           "add_median_mm,median_mm,mean_mm,face_size_mm2,monotone_fraction\n";
    for (const ReportRow& r : rows) {
        out << r.method << ',' << r.scenario << ',' << r.iterations << ',' << r.seed << ','
            << r.count << ',' << format_double(r.mae_r) << ',' << format_double(r.ge) << ','
            << format_double(r.mae_t) << ',' << format_double(r.add_mean) << ','
            << format_double(r.add_median) << ',' << format_double(r.median_mm) << ','
            << format_double(r.mean_mm) << ',' << format_double(r.face_size_mm2) << ','
            << format_double(r.monotone_fraction) << '\n';
    }
    if (!out) throw IoFailure("report write failed: " + path);
}

namespace {
nlohmann::json row_to_json(const ReportRow& r) {
    return {{"method", r.method},
            {"scenario", r.scenario},
            {"iterations", r.iterations},
            {"seed", r.seed},
            {"count", r.count},
            {"mae_r_deg", r.mae_r},
            {"ge_deg", r.ge},
            {"mae_t_mm", r.mae_t},
            {"add_mean_mm", r.add_mean},
            {"add_median_mm", r.add_median},
            {"median_mm", r.median_mm},
            {"mean_mm", r.mean_mm},
            {"face_size_mm2", r.face_size_mm2},
            {"monotone_fraction", r.monotone_fraction}};
}
}  // namespace

nlohmann::json make_report_json(const nlohmann::json& config_echo,
                                std::span<const ReportRow> rows,
                                std::span<const EvalSummary> summaries,
                                const std::vector<std::string>& dataset_hashes,
                                double wall_clock_sec) {
    nlohmann::json jrows = nlohmann::json::array();
    for (const ReportRow& r : rows) jrows.push_back(row_to_json(r));
    nlohmann::json jsums = nlohmann::json::array();
    for (const EvalSummary& s : summaries) {
        nlohmann::json add = nlohmann::json::array();
        nlohmann::json mae_t = nlohmann::json::array();
        nlohmann::json traces = nlohmann::json::array();
        for (const SampleEval& ev : s.per_sample) {
            add.push_back(ev.pose.add);
            mae_t.push_back(ev.pose.mae_t);
            traces.push_back(ev.trace_add);
        }
        jsums.push_back({{"iterations", s.iterations},
                         {"count", s.count},
                         {"failed", s.failed},
                         {"add_mm", add},
                         {"mae_t_mm", mae_t},
                         {"trace_add_mm", traces}});
    }
    return {{"version", 1},
            {"code_version", kCodeVersion},
            {"config", config_echo},
            {"dataset_hashes", dataset_hashes},
            {"rows", jrows},
            {"per_sample", jsums},
            {"timing", {{"wall_clock_sec", wall_clock_sec}}}};
}

void write_report_json(const std::string& path, const nlohmann::json& report) {
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot open report for writing: " + path);
    out << report.dump(2) << "\n";
    if (!out) throw IoFailure("report write failed: " + path);
}

// ---- ablations --------------------------------------------------------------

IterationAblation ablate_iterations(const SyntheticDataset& train, const SyntheticDataset& test,
                                    const TrainConfig& base, int n_seeds, int threads) {
    IterationAblation result;
    const InitialState init = canonical_initial_state();

    struct SeedRun {
        std::uint64_t seed;
        EvalSummary eval;
    };
    std::vector<SeedRun> runs(static_cast<size_t>(n_seeds));
    auto run_seed = [&](int s) {
        TrainConfig cfg = base;
        cfg.iterations = kMaxIterations;
        cfg.seed = derive_seed(base.seed, 100 + std::uint64_t(s));
        runs[size_t(s)].seed = cfg.seed;
        const LearnedRegressor reg = train_regressor(train, init, cfg);
        runs[size_t(s)].eval = evaluate(learned_factory(reg), test, init, kMaxIterations, 1);
    };
    // Seeds are independent runs; two at a time keeps the box busy without
    // perturbing determinism (results land in per-seed slots).
    const int workers = std::max(1, std::min(threads > 0 ? threads : 2, n_seeds));
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int s = next.fetch_add(1); s < n_seeds; s = next.fetch_add(1)) run_seed(s);
        });
    for (auto& th : pool) th.join();

    std::vector<double> med1, med3;
    double monotone_acc = 0.0;
    for (int s = 0; s < n_seeds; ++s) {
        const EvalSummary& ev = runs[size_t(s)].eval;
        for (int iters = 1; iters <= kMaxIterations; ++iters) {
            ReportRow row = summarize(ev, "learned-correction",
                                      test.config.name + "-" + std::to_string(iters) + "iter",
                                      runs[size_t(s)].seed);
            row.iterations = iters;
            row.add_mean = ev.mean_add_by_iter[size_t(iters - 1)];
            row.add_median = ev.median_add_by_iter[size_t(iters - 1)];
            row.mae_r = ev.mean_mae_r_by_iter[size_t(iters - 1)];
            row.mae_t = ev.mean_mae_t_by_iter[size_t(iters - 1)];
            result.rows.push_back(row);
        }
        med1.push_back(ev.median_add_by_iter[0]);
        med3.push_back(ev.median_add_by_iter[kMaxIterations - 1]);
        monotone_acc += ev.monotone_fraction;
    }
    result.median_add_1iter = lower_median(med1);
    result.median_add_3iter = lower_median(med3);
    result.pooled_monotone_fraction = n_seeds > 0 ? monotone_acc / n_seeds : 0.0;
    result.trend_holds = result.median_add_3iter <= result.median_add_1iter;
    return result;
}

TranslationAblation ablate_translation_model(const SyntheticDataset& train,
                                             const SyntheticDataset& test_near,
                                             const SyntheticDataset& test_far,
                                             const TrainConfig& base, int n_seeds, int threads) {
    TranslationAblation result;
    const InitialState init = canonical_initial_state();
    for (int s = 0; s < n_seeds; ++s) {
        const std::uint64_t seed = derive_seed(base.seed, 200 + std::uint64_t(s));
        TrainConfig cfg_corr = base;
        cfg_corr.kind = ResidualKind::Correction;
        cfg_corr.seed = seed;
        TrainConfig cfg_direct = base;
        cfg_direct.kind = ResidualKind::DirectTranslation;
        cfg_direct.seed = seed;

        const LearnedRegressor corr = train_regressor(train, init, cfg_corr);
        const LearnedRegressor direct = train_regressor(train, init, cfg_direct);

        const EvalSummary corr_near =
            evaluate(learned_factory(corr), test_near, init, base.iterations, threads);
        const EvalSummary corr_far =
            evaluate(learned_factory(corr), test_far, init, base.iterations, threads);
        const EvalSummary direct_near =
            evaluate(learned_factory(direct), test_near, init, base.iterations, threads);
        const EvalSummary direct_far =
            evaluate(learned_factory(direct), test_far, init, base.iterations, threads);

        result.rows.push_back(summarize(corr_near, "learned-correction", "near", seed));
        result.rows.push_back(summarize(corr_far, "learned-correction", "far", seed));
        result.rows.push_back(summarize(direct_near, "learned-direct-translation", "near", seed));
        result.rows.push_back(summarize(direct_far, "learned-direct-translation", "far", seed));

        TranslationAblation::SeedResult sr;
        sr.seed = seed;
        sr.corr_near_maet = corr_near.mean.mae_t;
        sr.corr_far_maet = corr_far.mean.mae_t;
        sr.direct_near_maet = direct_near.mean.mae_t;
        sr.direct_far_maet = direct_far.mean.mae_t;
        sr.far_ratio = sr.direct_far_maet / std::max(1e-12, sr.corr_far_maet);
        sr.near_ratio = std::max(sr.direct_near_maet, sr.corr_near_maet) /
                        std::max(1e-12, std::min(sr.direct_near_maet, sr.corr_near_maet));
        sr.pass = sr.far_ratio >= 2.0 && sr.near_ratio <= 1.5;
        if (sr.pass) ++result.passing;
        result.seeds.push_back(sr);
    }
    result.majority = 2 * result.passing > n_seeds;
    return result;
}

// ---- distributions ----------------------------------------------------------

double interval_overlap(const IntervalStats& a, const IntervalStats& b) {
    const double inter = std::max(0.0, std::min(a.hi, b.hi) - std::max(a.lo, b.lo));
    const double uni = std::max(a.hi, b.hi) - std::min(a.lo, b.lo);
    if (uni < 1e-12) return std::abs(a.lo - b.lo) < 1e-9 ? 1.0 : 0.0;
    return inter / uni;
}

namespace {

DistributionReport::ScenarioStats scenario_stats(const SyntheticDataset& analytic,
                                                 const SyntheticDataset& tight) {
    DistributionReport::ScenarioStats st;
    st.tz = {analytic.records.front().T.z(), analytic.records.front().T.z()};
    st.s = {analytic.records.front().c_star.s, analytic.records.front().c_star.s};
    st.tau_x = {analytic.records.front().c_star.tau_tilde_x,
                analytic.records.front().c_star.tau_tilde_x};
    st.tau_y = {analytic.records.front().c_star.tau_tilde_y,
                analytic.records.front().c_star.tau_tilde_y};
    for (const SceneSample& rec : analytic.records) {
        st.tz.lo = std::min(st.tz.lo, rec.T.z());
        st.tz.hi = std::max(st.tz.hi, rec.T.z());
        st.s.lo = std::min(st.s.lo, rec.c_star.s);
        st.s.hi = std::max(st.s.hi, rec.c_star.s);
        st.tau_x.lo = std::min(st.tau_x.lo, rec.c_star.tau_tilde_x);
        st.tau_x.hi = std::max(st.tau_x.hi, rec.c_star.tau_tilde_x);
        st.tau_y.lo = std::min(st.tau_y.lo, rec.c_star.tau_tilde_y);
        st.tau_y.hi = std::max(st.tau_y.hi, rec.c_star.tau_tilde_y);
        st.max_s_sigma_dev = std::max(st.max_s_sigma_dev, std::abs(rec.c_star.s - rec.sigma));
    }
    double ratio_min = tight.records.front().c_star.s / tight.records.front().sigma;
    double ratio_max = ratio_min, ratio_sum = 0.0;
    for (const SceneSample& rec : tight.records) {
        const double ratio = rec.c_star.s / rec.sigma;
        ratio_min = std::min(ratio_min, ratio);
        ratio_max = std::max(ratio_max, ratio);
        ratio_sum += ratio;
    }
    st.tight_s_spread = (ratio_max - ratio_min) / (ratio_sum / double(tight.records.size()));
    return st;
}

SyntheticDataset distribution_dataset(ScenarioConfig cfg, std::uint64_t seed, int count,
                                      double sigma_min, double sigma_max, BBoxMode mode) {
    cfg.seed = seed;
    cfg.seed_set = true;
    cfg.sample_count = count;
    cfg.sigma_min = sigma_min;
    cfg.sigma_max = sigma_max;
    cfg.bbox_mode = mode;
    return generate_dataset(cfg, count);  // one template per record: full sigma coverage
}

}  // namespace

DistributionReport distribution_report(std::uint64_t seed, int count, double sigma_min,
                                       double sigma_max) {
    DistributionReport report;
    const auto near_a = distribution_dataset(near_scenario(), derive_seed(seed, 1), count,
                                             sigma_min, sigma_max, BBoxMode::Analytic);
    const auto near_t = distribution_dataset(near_scenario(), derive_seed(seed, 2), count,
                                             sigma_min, sigma_max, BBoxMode::LandmarkTight);
    const auto far_a = distribution_dataset(far_scenario(), derive_seed(seed, 3), count,
                                            sigma_min, sigma_max, BBoxMode::Analytic);
    const auto far_t = distribution_dataset(far_scenario(), derive_seed(seed, 4), count,
                                            sigma_min, sigma_max, BBoxMode::LandmarkTight);
    report.near_stats = scenario_stats(near_a, near_t);
    report.far_stats = scenario_stats(far_a, far_t);
    report.tz_overlap = interval_overlap(report.near_stats.tz, report.far_stats.tz);
    report.s_overlap = interval_overlap(report.near_stats.s, report.far_stats.s);
    const double tau_x_overlap = interval_overlap(report.near_stats.tau_x, report.far_stats.tau_x);
    const double tau_y_overlap = interval_overlap(report.near_stats.tau_y, report.far_stats.tau_y);
    report.tau_overlap = std::min(tau_x_overlap, tau_y_overlap);
    return report;
}

}  // namespace headpose
