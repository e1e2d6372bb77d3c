#pragma once

#include <functional>
#include <memory>
#include <string>

#include <json.hpp>

#include "headpose/learned_regressor.hpp"
#include "headpose/metrics.hpp"
#include "headpose/synthetic.hpp"

namespace headpose {

inline constexpr const char* kCodeVersion = "0.1.0";

// The template that seeds every refinement run: a fixed-seed sigma-1 face
// with identity rotation. Shared across models so comparisons start alike.
InitialState canonical_initial_state();

struct TrainConfig {
    int iterations = 3;
    ResidualKind kind = ResidualKind::Correction;
    int epochs = 4;
    // Epochs fitted to the plain parameter-residual MSE before switching to
    // the weighted landmark/rotation objective. The composite loss is badly
    // conditioned from a cold start (the 6D rotation chain is scale
    // invariant), while the residual regression it warm-starts from is
    // nearly linear in the rendered evidence.
    int warmup_epochs = 2;
    // The final stage regresses the subtlest residuals; it may take a longer
    // schedule than the earlier stages (0 = inherit).
    int final_stage_epochs = 0;
    int final_stage_warmup = 0;
    int batch = 32;
    double lr = 1e-3;  // toy-scale default; the full-scale schedule is 1e-4
    int lr_decay_epoch = -1;
    std::uint64_t seed = 0;
    int hidden = 64;
    int reducer_h1 = 64;
    int reducer_h2 = 16;
    // Landmark-evidence jitter applied during training renders; fresh every
    // epoch, independent of the dataset's own noise level.
    double evidence_jitter_px = 1.0;
    double weight_decay = 1e-4;
    LossWeights weights;
};

struct TrainLog {
    // mean per-sample objective, indexed [stage-1][epoch]
    std::vector<std::vector<double>> stage_epoch_loss;
};

// Cascade training: stage nets are fit in order on the frozen outputs of the
// stages before them, each against its weighted slice of the objective, so
// the full model's loss is exactly the summed per-iteration objective.
LearnedRegressor train_regressor(const SyntheticDataset& train, const InitialState& init,
                                 const TrainConfig& cfg, TrainLog* log = nullptr);

struct SampleEval {
    PoseErrorReport pose;
    GeometryErrorReport geometry;
    std::vector<double> trace_add;    // ADD after each iteration, mm
    std::vector<double> trace_mae_r;  // degrees
    std::vector<double> trace_mae_t;  // mm
};

struct EvalSummary {
    int count = 0;
    int failed = 0;  // samples that raised during refinement; excluded from aggregates
    int iterations = 0;
    PoseErrorReport mean;  // field-wise means over samples
    GeometryErrorReport mean_geometry;
    double median_add = 0.0;  // lower-middle convention
    double monotone_fraction = 0.0;
    // Per-iteration aggregates over the trace; index t-1. The k-iteration
    // model is the k-prefix of the cascade, so these are its exact metrics.
    std::vector<double> mean_add_by_iter, median_add_by_iter;
    std::vector<double> mean_mae_r_by_iter, mean_mae_t_by_iter;
    std::vector<SampleEval> per_sample;
};

// Builds one (possibly per-sample) regressor; the oracle needs the sample's
// ground truth, a learned model is shared.
using RegressorFactory =
    std::function<std::unique_ptr<const Regressor>(const SceneSample&, const GroundTruth&)>;

RegressorFactory learned_factory(const LearnedRegressor& reg);
RegressorFactory oracle_factory(double alpha, ResidualKind kind = ResidualKind::Correction);

// Renders evidence per record, runs the loop, aggregates metrics. Parallel
// over samples; aggregation is in index order so results are
// schedule-independent. threads = 0 picks the hardware count.
EvalSummary evaluate(const RegressorFactory& factory, const SyntheticDataset& ds,
                     const InitialState& init, int iterations, int threads = 0);

struct ReportRow {
    std::string method;
    std::string scenario;
    int iterations = 0;
    std::uint64_t seed = 0;
    int count = 0;
    double mae_r = 0.0, ge = 0.0, mae_t = 0.0;
    double add_mean = 0.0, add_median = 0.0;
    double median_mm = 0.0, mean_mm = 0.0, face_size_mm2 = 0.0;
    double monotone_fraction = 0.0;
};

ReportRow summarize(const EvalSummary& s, const std::string& method, const std::string& scenario,
                    std::uint64_t seed);

// CSV schema v1: comment header line, then one row per method/scenario.
void write_report_csv(const std::string& path, std::span<const ReportRow> rows);

// Full JSON report: config echo, rows, per-sample arrays, dataset hashes,
// code version. Timestamp and wall-clock live in a separate field so reports
// are byte-identical across runs modulo that field.
nlohmann::json make_report_json(const nlohmann::json& config_echo,
                                std::span<const ReportRow> rows,
                                std::span<const EvalSummary> summaries,
                                const std::vector<std::string>& dataset_hashes,
                                double wall_clock_sec);
void write_report_json(const std::string& path, const nlohmann::json& report);

// ---- ablation protocols ----------------------------------------------------

struct IterationAblation {
    std::vector<ReportRow> rows;  // per seed, per iteration count 1..3
    double median_add_1iter = 0.0;  // median over seeds of per-seed median ADD
    double median_add_3iter = 0.0;
    double pooled_monotone_fraction = 0.0;
    bool trend_holds = false;
};
IterationAblation ablate_iterations(const SyntheticDataset& train, const SyntheticDataset& test,
                                    const TrainConfig& base, int n_seeds, int threads = 0);

struct TranslationAblation {
    struct SeedResult {
        std::uint64_t seed;
        double corr_near_maet, corr_far_maet;
        double direct_near_maet, direct_far_maet;
        double far_ratio;   // direct / correction on the far scenario
        double near_ratio;  // max/min of the two near MAE_t values
        bool pass;          // far_ratio >= 2 and near_ratio <= 1.5
    };
    std::vector<SeedResult> seeds;
    std::vector<ReportRow> rows;
    int passing = 0;
    bool majority = false;
};
TranslationAblation ablate_translation_model(const SyntheticDataset& train,
                                             const SyntheticDataset& test_near,
                                             const SyntheticDataset& test_far,
                                             const TrainConfig& base, int n_seeds,
                                             int threads = 0);

// ---- distribution shift report ---------------------------------------------

struct IntervalStats {
    double lo = 0.0, hi = 0.0;
    double width() const { return hi - lo; }
};

struct DistributionReport {
    struct ScenarioStats {
        IntervalStats tz, s, tau_x, tau_y;
        double max_s_sigma_dev = 0.0;        // analytic mode: max |s* - sigma|
        double tight_s_spread = 0.0;         // landmark-tight mode: (max-min)/mean of s*/sigma
    };
    ScenarioStats near_stats, far_stats;
    double tz_overlap = 0.0;
    double s_overlap = 0.0;
    double tau_overlap = 0.0;
};

// Interval intersection over union; two degenerate (zero-width) intervals at
// the same point count as fully overlapping.
double interval_overlap(const IntervalStats& a, const IntervalStats& b);

DistributionReport distribution_report(std::uint64_t seed, int count, double sigma_min = 0.85,
                                       double sigma_max = 1.15);

}  // namespace headpose
