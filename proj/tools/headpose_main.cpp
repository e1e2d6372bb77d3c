#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "headpose/dataset_io.hpp"
#include "headpose/experiment.hpp"
#include "headpose/verify.hpp"

namespace fs = std::filesystem;
using namespace headpose;

namespace {

struct GlobalOpts {
    std::string out_dir;
};

std::string default_out_dir() {
    if (const char* env = std::getenv("HEADPOSE_OUT_DIR")) return env;
    return "out";
}

fs::path resolve_out(const GlobalOpts& g, const std::string& name) {
    fs::create_directories(g.out_dir);
    return fs::path(g.out_dir) / name;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- gen-data -----------------------------------------------------------------

struct GenDataOpts {
    std::string out = "dataset.jsonl";
    std::string scenario = "near";
    std::string bbox_mode = "analytic";
    int count = 200;
    int templates = 20;
    std::uint64_t seed = 0;
    std::uint64_t extractor_seed = 0;
    double depth_min = -1, depth_max = -1;
    double rot_range = 40.0;
    double lateral_px = 40.0;
    double noise_px = 0.25;
    double feature_noise = 0.0;
    double sigma_min = 1.0, sigma_max = 1.0;
    double margin = 0.25;
    double focal = 800.0;
    bool keep_face_in_frame = false;
    double frame_border_px = 2.0;
    int channels = 8;
    bool write_maps = false;
};

ScenarioConfig build_config(const GenDataOpts& o) {
    ScenarioConfig cfg;
    if (o.scenario == "near") {
        cfg = near_scenario();
    } else if (o.scenario == "far") {
        cfg = far_scenario();
    } else if (o.scenario == "custom") {
        cfg.name = "custom";
        if (o.depth_min <= 0 || o.depth_max <= 0)
            throw ConfigError("custom scenario requires --depth-min and --depth-max");
    } else {
        throw ConfigError("unknown scenario '" + o.scenario + "' (near|far|custom)");
    }
    if (o.depth_min > 0) cfg.depth_min = o.depth_min;
    if (o.depth_max > 0) cfg.depth_max = o.depth_max;
    cfg.rot_range_deg = o.rot_range;
    cfg.lateral_px = o.lateral_px;
    cfg.noise_px = o.noise_px;
    cfg.feature_noise = o.feature_noise;
    cfg.keep_face_in_frame = o.keep_face_in_frame;
    cfg.frame_border_px = o.frame_border_px;
    if (o.bbox_mode == "analytic") {
        cfg.bbox_mode = BBoxMode::Analytic;
    } else if (o.bbox_mode == "tight") {
        cfg.bbox_mode = BBoxMode::LandmarkTight;
    } else {
        throw ConfigError("unknown bbox mode '" + o.bbox_mode + "' (analytic|tight)");
    }
    cfg.bbox_margin = o.margin;
    cfg.sample_count = o.count;
    cfg.seed = o.seed;
    cfg.seed_set = true;
    cfg.extractor_seed = o.extractor_seed;
    cfg.sigma_min = o.sigma_min;
    cfg.sigma_max = o.sigma_max;
    cfg.channels = o.channels;
    cfg.focal = o.focal;
    return cfg;
}

int run_gen_data(const GlobalOpts& g, const GenDataOpts& o) {
    const ScenarioConfig cfg = build_config(o);
    const SyntheticDataset ds = generate_dataset(cfg, o.templates);
    audit_dataset(ds);
    const fs::path path = resolve_out(g, o.out);
    write_dataset_jsonl(ds, path.string(), o.write_maps);
    std::cout << "wrote " << ds.records.size() << " records to " << path.string()
              << "\ndataset hash: " << file_content_hash(path.string()) << "\n";
    return 0;
}

// ---- train --------------------------------------------------------------------

struct TrainOpts {
    std::string data;
    std::string model_out = "model.json";
    std::string regressor = "learned";
    int iterations = 3;
    int epochs = 4;
    int batch = 32;
    double lr = 1e-3;
    int lr_decay_epoch = -1;
    std::uint64_t seed = 0;
    int hidden = 64;
};

TrainConfig build_train_config(const TrainOpts& o) {
    TrainConfig cfg;
    cfg.iterations = o.iterations;
    if (o.regressor == "learned") {
        cfg.kind = ResidualKind::Correction;
    } else if (o.regressor == "learned-direct") {
        cfg.kind = ResidualKind::DirectTranslation;
    } else {
        throw ConfigError("train supports --regressor learned|learned-direct");
    }
    cfg.epochs = o.epochs;
    cfg.batch = o.batch;
    cfg.lr = o.lr;
    cfg.lr_decay_epoch = o.lr_decay_epoch;
    cfg.seed = o.seed;
    cfg.hidden = o.hidden;
    return cfg;
}

int run_train(const GlobalOpts& g, const TrainOpts& o) {
    const SyntheticDataset ds = load_dataset_jsonl(o.data);
    audit_dataset(ds);
    const TrainConfig cfg = build_train_config(o);
    TrainLog log;
    const LearnedRegressor reg = train_regressor(ds, canonical_initial_state(), cfg, &log);
    const fs::path path = resolve_out(g, o.model_out);
    reg.save(path.string());
    std::cout << "trained " << cfg.iterations << "-stage "
              << (cfg.kind == ResidualKind::Correction ? "correction" : "direct-translation")
              << " regressor on " << ds.records.size() << " samples\n";
    for (size_t s = 0; s < log.stage_epoch_loss.size(); ++s) {
        std::cout << "stage " << s + 1 << " objective:";
        for (double v : log.stage_epoch_loss[s]) std::cout << " " << v;
        std::cout << "\n";
    }
    std::cout << "model written to " << path.string() << "\n";
    return 0;
}

// ---- eval ---------------------------------------------------------------------

struct EvalOpts {
    std::string data;
    std::string model;
    std::string report = "eval";
    double oracle_alpha = -1.0;
    bool oracle_direct = false;
    int iterations = 3;
    int trace_samples = 0;
    int threads = 0;
};

int run_eval(const GlobalOpts& g, const EvalOpts& o) {
    const auto t0 = std::chrono::steady_clock::now();
    const SyntheticDataset ds = load_dataset_jsonl(o.data);
    const InitialState init = canonical_initial_state();

    std::unique_ptr<LearnedRegressor> learned;
    RegressorFactory factory;
    std::string method;
    if (!o.model.empty()) {
        learned = std::make_unique<LearnedRegressor>(LearnedRegressor::load(o.model));
        factory = learned_factory(*learned);
        method = learned->kind() == ResidualKind::Correction ? "learned-correction"
                                                             : "learned-direct-translation";
    } else if (o.oracle_alpha > 0.0) {
        factory = oracle_factory(o.oracle_alpha, o.oracle_direct
                                                     ? ResidualKind::DirectTranslation
                                                     : ResidualKind::Correction);
        method = "oracle-alpha-" + std::to_string(o.oracle_alpha);
    } else {
        throw ConfigError("eval needs --model or --oracle-alpha");
    }

    const EvalSummary summary = evaluate(factory, ds, init, o.iterations, o.threads);
    const ReportRow row = summarize(summary, method, ds.config.name, ds.config.seed);
    write_report_csv(resolve_out(g, o.report + ".csv").string(), {&row, 1});

    nlohmann::json echo{{"command", "eval"},      {"data", o.data},
                        {"model", o.model},       {"oracle_alpha", o.oracle_alpha},
                        {"iterations", o.iterations}, {"scenario", ds.config.name},
                        {"seed", ds.config.seed}};
    const nlohmann::json report =
        make_report_json(echo, {&row, 1}, {&summary, 1}, {file_content_hash(o.data)},
                         seconds_since(t0));
    write_report_json(resolve_out(g, o.report + ".json").string(), report);

    if (o.trace_samples > 0) {
        std::ofstream trace_out(resolve_out(g, o.report + "_traces.jsonl"));
        const int limit = std::min<int>(o.trace_samples, int(ds.records.size()));
        for (int i = 0; i < limit; ++i) {
            const SceneSample& rec = ds.records[size_t(i)];
            const GroundTruth gt = rec.ground_truth();
            std::vector<FeatureMap> maps;
            for (int t = 1; t <= o.iterations; ++t)
                maps.push_back(render_stage_map(rec, t, ds.config.noise_px, ds.config.channels,
                                                ds.mixing_seed, ds.config.feature_noise));
            const auto reg = factory(rec, gt);
            const RefinementResult res = run_refinement(init, maps, *reg, rec.bbox, rec.K,
                                                        o.iterations, &gt, nullptr);
            write_trace_jsonl(trace_out, res.trace);
        }
    }

    std::cout << "evaluated " << summary.count - summary.failed << "/" << summary.count
              << " samples: ADD mean " << summary.mean.add << " mm, median "
              << summary.median_add << " mm, MAE_t " << summary.mean.mae_t << " mm, MAE_r "
              << summary.mean.mae_r << " deg, GE " << summary.mean.ge << " deg\n";
    return 0;
}

// ---- ablations ------------------------------------------------------------------

struct AblateOpts {
    std::string train_data;
    std::string test_data;
    std::string test_far_data;
    std::string report = "ablation";
    int seeds = 3;
    std::uint64_t seed = 1;
    int epochs = 4;
    int batch = 32;
    double lr = 1e-3;
    int hidden = 64;
    int threads = 0;
};

TrainConfig ablate_train_config(const AblateOpts& o) {
    TrainConfig cfg;
    cfg.epochs = o.epochs;
    cfg.batch = o.batch;
    cfg.lr = o.lr;
    cfg.hidden = o.hidden;
    cfg.seed = o.seed;
    return cfg;
}

int run_ablate_iterations(const GlobalOpts& g, const AblateOpts& o) {
    const auto t0 = std::chrono::steady_clock::now();
    const SyntheticDataset train = load_dataset_jsonl(o.train_data);
    const SyntheticDataset test = load_dataset_jsonl(o.test_data);
    const IterationAblation result =
        ablate_iterations(train, test, ablate_train_config(o), o.seeds, o.threads);
    write_report_csv(resolve_out(g, o.report + ".csv").string(), result.rows);

    nlohmann::json echo{{"command", "ablate-iterations"},
                        {"train_data", o.train_data},
                        {"test_data", o.test_data},
                        {"seeds", o.seeds},
                        {"seed", o.seed}};
    nlohmann::json report = make_report_json(
        echo, result.rows, {}, {file_content_hash(o.train_data), file_content_hash(o.test_data)},
        seconds_since(t0));
    report["iteration_trend"] = {{"median_add_1iter_mm", result.median_add_1iter},
                                 {"median_add_3iter_mm", result.median_add_3iter},
                                 {"monotone_fraction", result.pooled_monotone_fraction},
                                 {"trend_holds", result.trend_holds}};
    write_report_json(resolve_out(g, o.report + ".json").string(), report);

    std::cout << "median ADD: 1-iter " << result.median_add_1iter << " mm vs 3-iter "
              << result.median_add_3iter << " mm; per-iteration ADD non-increasing on "
              << result.pooled_monotone_fraction * 100 << "% of samples\n";
    return 0;
}

int run_ablate_translation(const GlobalOpts& g, const AblateOpts& o) {
    const auto t0 = std::chrono::steady_clock::now();
    const SyntheticDataset train = load_dataset_jsonl(o.train_data);
    const SyntheticDataset test_near = load_dataset_jsonl(o.test_data);
    const SyntheticDataset test_far = load_dataset_jsonl(o.test_far_data);
    const TranslationAblation result = ablate_translation_model(
        train, test_near, test_far, ablate_train_config(o), o.seeds, o.threads);
    write_report_csv(resolve_out(g, o.report + ".csv").string(), result.rows);

    nlohmann::json seeds = nlohmann::json::array();
    for (const auto& sr : result.seeds)
        seeds.push_back({{"seed", sr.seed},
                         {"corr_near_maet_mm", sr.corr_near_maet},
                         {"corr_far_maet_mm", sr.corr_far_maet},
                         {"direct_near_maet_mm", sr.direct_near_maet},
                         {"direct_far_maet_mm", sr.direct_far_maet},
                         {"far_ratio", sr.far_ratio},
                         {"near_ratio", sr.near_ratio},
                         {"pass", sr.pass}});
    nlohmann::json echo{{"command", "ablate-translation-model"},
                        {"train_data", o.train_data},
                        {"test_near", o.test_data},
                        {"test_far", o.test_far_data},
                        {"seeds", o.seeds},
                        {"seed", o.seed}};
    nlohmann::json report = make_report_json(
        echo, result.rows, {},
        {file_content_hash(o.train_data), file_content_hash(o.test_data),
         file_content_hash(o.test_far_data)},
        seconds_since(t0));
    report["translation_ablation"] = {{"per_seed", seeds},
                                      {"passing", result.passing},
                                      {"majority", result.majority}};
    write_report_json(resolve_out(g, o.report + ".json").string(), report);

    std::cout << result.passing << "/" << result.seeds.size()
              << " seeds show the far-scenario collapse of the direct-translation variant\n";
    return 0;
}

// ---- distribution report --------------------------------------------------------

int run_distribution(const GlobalOpts& g, std::uint64_t seed, int count, double sigma_min,
                     double sigma_max, const std::string& name) {
    const DistributionReport rep = distribution_report(seed, count, sigma_min, sigma_max);
    nlohmann::json j{
        {"version", 1},
        {"code_version", kCodeVersion},
        {"config",
         {{"seed", seed}, {"count", count}, {"sigma_min", sigma_min}, {"sigma_max", sigma_max}}},
        {"near",
         {{"tz", {rep.near_stats.tz.lo, rep.near_stats.tz.hi}},
          {"s", {rep.near_stats.s.lo, rep.near_stats.s.hi}},
          {"tau_x", {rep.near_stats.tau_x.lo, rep.near_stats.tau_x.hi}},
          {"tau_y", {rep.near_stats.tau_y.lo, rep.near_stats.tau_y.hi}},
          {"max_s_sigma_dev", rep.near_stats.max_s_sigma_dev},
          {"tight_s_spread", rep.near_stats.tight_s_spread}}},
        {"far",
         {{"tz", {rep.far_stats.tz.lo, rep.far_stats.tz.hi}},
          {"s", {rep.far_stats.s.lo, rep.far_stats.s.hi}},
          {"tau_x", {rep.far_stats.tau_x.lo, rep.far_stats.tau_x.hi}},
          {"tau_y", {rep.far_stats.tau_y.lo, rep.far_stats.tau_y.hi}},
          {"max_s_sigma_dev", rep.far_stats.max_s_sigma_dev},
          {"tight_s_spread", rep.far_stats.tight_s_spread}}},
        {"overlap",
         {{"tz", rep.tz_overlap}, {"s", rep.s_overlap}, {"tau", rep.tau_overlap}}}};
    write_report_json(resolve_out(g, name + ".json").string(), j);
    std::cout << "depth supports: near [" << rep.near_stats.tz.lo << ", " << rep.near_stats.tz.hi
              << "] m vs far [" << rep.far_stats.tz.lo << ", " << rep.far_stats.tz.hi
              << "] m (overlap " << rep.tz_overlap << ")\n"
              << "scale-factor supports: near [" << rep.near_stats.s.lo << ", "
              << rep.near_stats.s.hi << "] vs far [" << rep.far_stats.s.lo << ", "
              << rep.far_stats.s.hi << "] (overlap " << rep.s_overlap << ")\n";
    return 0;
}

// ---- verify ---------------------------------------------------------------------

int run_verify() {
    const VerifyReport report = run_verify_suite();
    for (const CheckResult& c : report.checks) {
        std::printf("[%s] %-18s %-52s measured=%.3e %s %.3e\n", c.pass ? "PASS" : "FAIL",
                    c.module.c_str(), c.name.c_str(), c.measured, c.upper_bound ? "<" : ">=",
                    c.tolerance);
    }
    const int failures = report.failures();
    std::printf("%d/%zu checks passed\n", int(report.checks.size()) - failures,
                report.checks.size());
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"6DoF head-pose estimation core: synthetic data, training, ablations, checks"};
    app.set_config("--config", "", "plain key=value config file; flags take precedence");
    app.require_subcommand(1);

    GlobalOpts g;
    g.out_dir = default_out_dir();
    app.add_option("--out-dir", g.out_dir, "output directory (env HEADPOSE_OUT_DIR)");

    GenDataOpts gen;
    CLI::App* c_gen = app.add_subcommand("gen-data", "generate a synthetic scene dataset");
    c_gen->add_option("--out", gen.out, "output JSONL file name");
    c_gen->add_option("--scenario", gen.scenario, "near|far|custom");
    c_gen->add_option("--count", gen.count, "number of records");
    c_gen->add_option("--templates", gen.templates, "number of face templates");
    c_gen->add_option("--seed", gen.seed, "master seed")->required();
    c_gen->add_option("--extractor-seed", gen.extractor_seed,
                      "shared evidence-mixing seed; train/eval pairs must match (0: from --seed)");
    c_gen->add_option("--depth-min", gen.depth_min, "custom depth range, meters");
    c_gen->add_option("--depth-max", gen.depth_max, "custom depth range, meters");
    c_gen->add_option("--rot-range", gen.rot_range, "per-axis rotation range, degrees");
    c_gen->add_option("--lateral-px", gen.lateral_px, "max head-center offset, pixels");
    c_gen->add_option("--noise-px", gen.noise_px, "landmark evidence jitter, pixels");
    c_gen->add_option("--feature-noise", gen.feature_noise, "per-texel map noise");
    c_gen->add_option("--sigma-min", gen.sigma_min, "face scale range");
    c_gen->add_option("--sigma-max", gen.sigma_max, "face scale range");
    c_gen->add_option("--bbox-mode", gen.bbox_mode, "analytic|tight");
    c_gen->add_option("--margin", gen.margin, "tight bbox margin");
    c_gen->add_option("--focal", gen.focal, "focal length, pixels");
    c_gen->add_flag("--keep-face-in-frame", gen.keep_face_in_frame,
                    "require every landmark inside the frame");
    c_gen->add_option("--frame-border", gen.frame_border_px, "clear border, pixels");
    c_gen->add_option("--channels", gen.channels, "feature map channels");
    c_gen->add_flag("--write-maps", gen.write_maps, "write .fmap sidecars per record");

    TrainOpts tr;
    CLI::App* c_train = app.add_subcommand("train", "train a learned regressor");
    c_train->add_option("--data", tr.data, "training dataset JSONL")->required();
    c_train->add_option("--model-out", tr.model_out, "model bundle file name");
    c_train->add_option("--regressor", tr.regressor, "learned|learned-direct");
    c_train->add_option("--iterations", tr.iterations, "refinement iterations (1-3)");
    c_train->add_option("--epochs", tr.epochs, "epochs per stage");
    c_train->add_option("--batch", tr.batch, "minibatch size");
    c_train->add_option("--lr", tr.lr, "Adam learning rate");
    c_train->add_option("--lr-decay-epoch", tr.lr_decay_epoch, "decay lr x0.1 at this epoch");
    c_train->add_option("--seed", tr.seed, "training seed")->required();
    c_train->add_option("--hidden", tr.hidden, "regressor hidden width");

    EvalOpts ev;
    CLI::App* c_eval = app.add_subcommand("eval", "evaluate a model or oracle on a dataset");
    c_eval->add_option("--data", ev.data, "dataset JSONL")->required();
    c_eval->add_option("--model", ev.model, "trained model bundle");
    c_eval->add_option("--oracle-alpha", ev.oracle_alpha, "use the oracle regressor");
    c_eval->add_flag("--oracle-direct", ev.oracle_direct, "oracle in direct-translation mode");
    c_eval->add_option("--iterations", ev.iterations, "refinement iterations (1-3)");
    c_eval->add_option("--report", ev.report, "report file prefix");
    c_eval->add_option("--trace-samples", ev.trace_samples, "export JSONL traces for N samples");
    c_eval->add_option("--threads", ev.threads, "evaluation threads (0 = auto)");

    AblateOpts ab_it;
    CLI::App* c_abit = app.add_subcommand("ablate-iterations",
                                          "iteration-count ablation (1 vs 2 vs 3)");
    c_abit->add_option("--train-data", ab_it.train_data)->required();
    c_abit->add_option("--test-data", ab_it.test_data)->required();
    c_abit->add_option("--report", ab_it.report);
    c_abit->add_option("--seeds", ab_it.seeds, "number of training seeds");
    c_abit->add_option("--seed", ab_it.seed, "base seed");
    c_abit->add_option("--epochs", ab_it.epochs);
    c_abit->add_option("--batch", ab_it.batch);
    c_abit->add_option("--lr", ab_it.lr);
    c_abit->add_option("--hidden", ab_it.hidden);
    c_abit->add_option("--threads", ab_it.threads);

    AblateOpts ab_tr;
    CLI::App* c_abtr = app.add_subcommand(
        "ablate-translation-model", "correction-parameter vs direct-translation ablation");
    c_abtr->add_option("--train-data", ab_tr.train_data)->required();
    c_abtr->add_option("--test-data", ab_tr.test_data, "in-distribution test set")->required();
    c_abtr->add_option("--test-far-data", ab_tr.test_far_data, "shifted test set")->required();
    c_abtr->add_option("--report", ab_tr.report);
    c_abtr->add_option("--seeds", ab_tr.seeds);
    c_abtr->add_option("--seed", ab_tr.seed);
    c_abtr->add_option("--epochs", ab_tr.epochs);
    c_abtr->add_option("--batch", ab_tr.batch);
    c_abtr->add_option("--lr", ab_tr.lr);
    c_abtr->add_option("--hidden", ab_tr.hidden);
    c_abtr->add_option("--threads", ab_tr.threads);

    std::uint64_t dist_seed = 0;
    int dist_count = 2000;
    double dist_sigma_min = 0.85, dist_sigma_max = 1.15;
    std::string dist_name = "distribution";
    CLI::App* c_dist = app.add_subcommand("distribution-report",
                                          "near/far correction-parameter distribution study");
    c_dist->add_option("--seed", dist_seed)->required();
    c_dist->add_option("--count", dist_count, "samples per scenario");
    c_dist->add_option("--sigma-min", dist_sigma_min);
    c_dist->add_option("--sigma-max", dist_sigma_max);
    c_dist->add_option("--report", dist_name, "report file prefix");

    CLI::App* c_verify =
        app.add_subcommand("verify", "run every module's property checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (c_gen->parsed()) return run_gen_data(g, gen);
        if (c_train->parsed()) return run_train(g, tr);
        if (c_eval->parsed()) return run_eval(g, ev);
        if (c_abit->parsed()) return run_ablate_iterations(g, ab_it);
        if (c_abtr->parsed()) return run_ablate_translation(g, ab_tr);
        if (c_dist->parsed())
            return run_distribution(g, dist_seed, dist_count, dist_sigma_min, dist_sigma_max,
                                    dist_name);
        if (c_verify->parsed()) return run_verify();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const IoFailure& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
