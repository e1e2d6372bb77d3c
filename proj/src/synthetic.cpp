#include "headpose/synthetic.hpp"

#include <cmath>

namespace headpose {

namespace {
constexpr int kRings = 21;
constexpr int kCols = 58;  // 2 + 21*58 = 1220
constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kBumpStd = 1.5;      // feature units
constexpr double kHeatPeakLogit = 8.0;  // log-Gaussian heatmap peak
constexpr int kMixBases = 4;

int ring_vertex(int r, int c) { return 1 + r * kCols + (c % kCols); }
}  // namespace

const TriangleList& face_triangles() {
    static const TriangleList tris = [] {
        TriangleList t;
        t.reserve(2 * kCols + (kRings - 1) * kCols * 2);
        const int south = kDenseLandmarkCount - 1;
        for (int c = 0; c < kCols; ++c) t.push_back({0, ring_vertex(0, c), ring_vertex(0, c + 1)});
        for (int r = 0; r + 1 < kRings; ++r) {
            for (int c = 0; c < kCols; ++c) {
                const int a = ring_vertex(r, c), b = ring_vertex(r, c + 1);
                const int a2 = ring_vertex(r + 1, c), b2 = ring_vertex(r + 1, c + 1);
                t.push_back({a, a2, b});
                t.push_back({b, a2, b2});
            }
        }
        for (int c = 0; c < kCols; ++c)
            t.push_back({south, ring_vertex(kRings - 1, c + 1), ring_vertex(kRings - 1, c)});
        return t;
    }();
    return tris;
}

const std::vector<int>& sparse_landmark_indices() {
    static const std::vector<int> idx = [] {
        std::vector<int> v;
        v.reserve(kSparseLandmarkCount);
        for (int i = 0; i < kSparseLandmarkCount; ++i) v.push_back(i * 18);
        return v;
    }();
    return idx;
}

FaceTemplate make_face_template(std::uint64_t seed, double sigma) {
    if (sigma < 0.7 || sigma > 1.3) throw ConfigError("template sigma must be in [0.7, 1.3]");
    Rng rng(seed);

    // Low-frequency identity field plus fine noise; both have fixed metric
    // amplitude rather than scaling with sigma.
    struct Wave {
        double amp, m, l, pm, pl;
    };
    std::array<Wave, 6> waves;
    for (auto& w : waves) {
        w.amp = rng.uniform(-0.004, 0.004);
        w.m = rng.uniform_int(1, 4);
        w.l = rng.uniform_int(1, 4);
        w.pm = rng.uniform(0.0, kTwoPi);
        w.pl = rng.uniform(0.0, kTwoPi);
    }

    const double ax = 0.08 * sigma, ay = 0.11 * sigma, az = 0.09 * sigma;
    Matrix3Xd V(3, kDenseLandmarkCount);
    auto place = [&](int idx, double theta, double phi) {
        const Vec3 base(ax * std::sin(theta) * std::cos(phi), ay * std::cos(theta),
                        az * std::sin(theta) * std::sin(phi));
        double bump = 0.0;
        for (const auto& w : waves)
            bump += w.amp * std::sin(w.m * phi + w.pm) * std::sin(w.l * theta + w.pl);
        bump += rng.normal(0.0, 0.001);
        const Vec3 dir = base.norm() > 0 ? base.normalized() : Vec3::UnitY();
        V.col(idx) = base + bump * dir;
    };

    place(0, 0.0, 0.0);
    for (int r = 0; r < kRings; ++r) {
        const double theta = 3.14159265358979323846 * (r + 1) / (kRings + 1);
        for (int c = 0; c < kCols; ++c) place(ring_vertex(r, c), theta, kTwoPi * c / kCols);
    }
    place(kDenseLandmarkCount - 1, 3.14159265358979323846, 0.0);

    // Recenter, then scale into the 0.2*sigma box with a little margin.
    const Vec3 centroid = V.rowwise().mean();
    V.colwise() -= centroid;
    const double extent = V.cwiseAbs().maxCoeff();
    V *= (0.098 * sigma) / extent;

    FaceTemplate tmpl;
    tmpl.sigma = sigma;
    tmpl.vertices = std::move(V);
    return tmpl;
}

void ScenarioConfig::validate() const {
    if (!seed_set) throw ConfigError("scenario seed is mandatory");
    if (!(depth_min > 0.0) || !(depth_max > depth_min))
        throw ConfigError("depth range must be non-empty and positive");
    if (!(sigma_min >= 0.7 && sigma_max <= 1.3 && sigma_max >= sigma_min))
        throw ConfigError("sigma range must sit inside [0.7, 1.3]");
    if (sample_count <= 0) throw ConfigError("sample_count must be positive");
    if (channels < 5) throw ConfigError("need at least 5 feature channels");
    if (!(focal > 0.0) || image_size <= 0) throw ConfigError("invalid camera settings");
    if (rot_range_deg < 0.0 || lateral_px < 0.0 || noise_px < 0.0 || bbox_margin < 0.0)
        throw ConfigError("ranges must be non-negative");
}

ScenarioConfig near_scenario() {
    ScenarioConfig cfg;
    cfg.name = "near";
    cfg.depth_min = 0.3;
    cfg.depth_max = 0.9;
    return cfg;
}

ScenarioConfig far_scenario() {
    ScenarioConfig cfg;
    cfg.name = "far";
    cfg.depth_min = 1.2;
    cfg.depth_max = 2.4;
    return cfg;
}

CameraIntrinsics scenario_intrinsics(const ScenarioConfig& cfg) {
    CameraIntrinsics K;
    K.f = cfg.focal;
    K.width = cfg.image_size;
    K.height = cfg.image_size;
    K.cx = cfg.image_size / 2.0;
    K.cy = cfg.image_size / 2.0;
    return K;
}

GroundTruth SceneSample::ground_truth() const {
    return GroundTruth::from_pose(V, R, T, K, sparse_landmark_indices(), face_triangles());
}

SceneSample sample_scene(const ScenarioConfig& cfg, const FaceTemplate& tmpl,
                         const CameraIntrinsics& K, Rng& rng) {
    const double border = cfg.frame_border_px;
    for (int attempt = 0; attempt < 100; ++attempt) {
        SceneSample s;
        s.template_id = tmpl.id;
        s.sigma = tmpl.sigma;
        s.K = K;
        s.R = matrix_from_euler({rng.uniform(-cfg.rot_range_deg, cfg.rot_range_deg),
                                 rng.uniform(-cfg.rot_range_deg, cfg.rot_range_deg),
                                 rng.uniform(-cfg.rot_range_deg, cfg.rot_range_deg)});
        const double tz = rng.uniform(cfg.depth_min, cfg.depth_max);

        // Head-center offset budget; with keep_face_in_frame the projected
        // face half-extent eats into it.
        double max_off = std::min(K.width, K.height) / 2.0 - border;
        if (cfg.keep_face_in_frame) max_off -= K.f * (0.1 * tmpl.sigma) / tz;
        if (max_off < 0.0) continue;
        const double slack = std::min(cfg.lateral_px, max_off);
        const double u_off = rng.uniform(-slack, slack);
        const double v_off = rng.uniform(-slack, slack);
        s.T = Vec3(u_off * tz / K.f, v_off * tz / K.f, tz);

        Matrix2Xd img;
        try {
            img = project_points(tmpl.vertices, s.R, s.T, K);
        } catch (const BehindCamera&) {
            continue;
        }
        if (cfg.keep_face_in_frame &&
            (img.row(0).minCoeff() < border || img.row(0).maxCoeff() > K.width - border ||
             img.row(1).minCoeff() < border || img.row(1).maxCoeff() > K.height - border))
            continue;

        if (cfg.bbox_mode == BBoxMode::Analytic) {
            s.bbox.b = kFaceBoxMeters * tmpl.sigma * K.f / tz;
            s.bbox.tau_x = K.f * s.T.x() / tz;
            s.bbox.tau_y = K.f * s.T.y() / tz;
            s.bbox.f = K.f;
        } else {
            s.bbox = bbox_from_projected_landmarks(img, K, cfg.bbox_margin);
        }
        s.c_star = correction_from_translation(s.T, s.bbox);
        s.V = tmpl.vertices;
        return s;
    }
    throw Unprojectable("no in-frame pose found in 100 attempts");
}

namespace {

// Jittered projections are derived from the record's render seed alone, so
// every stage (and the heatmap) sees the same evidence positions.
Matrix2Xd jittered_projections(const SceneSample& s, double noise_px, int salt,
                               const Matrix2Xd& base) {
    Rng rng(derive_seed(s.render_seed, std::uint64_t(salt)));
    Matrix2Xd out = base;
    for (Eigen::Index n = 0; n < out.cols(); ++n) {
        out(0, n) += rng.normal(0.0, noise_px);
        out(1, n) += rng.normal(0.0, noise_px);
    }
    return out;
}

// Separable accumulation of one Gaussian bump into several weighted planes.
void splat_bump_multi(double* planes, int n_planes, int H, int W, double cx, double cy,
                      const double* weights) {
    const int x0 = std::max(0, int(std::floor(cx - 4 * kBumpStd)));
    const int x1 = std::min(W - 1, int(std::ceil(cx + 4 * kBumpStd)));
    const int y0 = std::max(0, int(std::floor(cy - 4 * kBumpStd)));
    const int y1 = std::min(H - 1, int(std::ceil(cy + 4 * kBumpStd)));
    if (x0 > x1 || y0 > y1) return;
    const double inv = 1.0 / (2.0 * kBumpStd * kBumpStd);
    double wx[64], wy[64];
    for (int x = x0; x <= x1; ++x) wx[x - x0] = std::exp(-(x - cx) * (x - cx) * inv);
    for (int y = y0; y <= y1; ++y) wy[y - y0] = std::exp(-(y - cy) * (y - cy) * inv);
    const int hw = H * W;
    for (int j = 0; j < n_planes; ++j) {
        double* plane = planes + size_t(j) * hw;
        for (int y = y0; y <= y1; ++y) {
            const double wyj = weights[j] * wy[y - y0];
            double* row = plane + y * W;
            for (int x = x0; x <= x1; ++x) row[x] += wyj * wx[x - x0];
        }
    }
}

}  // namespace

FeatureMap render_stage_map(const SceneSample& sample, int stage, double noise_px, int channels,
                            std::uint64_t mixing_seed, double feature_noise) {
    if (channels < 5) throw ConfigError("need at least 5 feature channels");
    const Matrix2Xd img = project_points(sample.V, sample.R, sample.T, sample.K);
    const Matrix2Xd jit = jittered_projections(sample, noise_px, 1, subsample_points(img));

    FeatureMap map = FeatureMap::for_stage(stage, channels);
    const double scale = double(map.width) / sample.K.width;
    const int hw = map.height * map.width;

    // Evidence basis: bumps weighted by the landmark's head-space template
    // coordinates (plus a plain occupancy plane). The projected moment fields
    // carry the correspondence information a feature extractor would supply.
    // Normalized by the expected bump overlap so values are O(1) at every
    // stage; otherwise the dense 12x12 stage saturates the toy regressor.
    const Matrix3Xd V_sub = subsample_landmarks(sample.V);
    std::vector<double> basis(size_t(kMixBases) * hw, 0.0);
    const int n_pts = int(jit.cols());
    const double density = n_pts * 2.0 * 3.14159265358979323846 * kBumpStd * kBumpStd / hw;
    const double norm = 1.0 / std::max(1.0, density);
    for (int n = 0; n < n_pts; ++n) {
        const double w[kMixBases] = {norm, norm * V_sub(0, n) / 0.1, norm * V_sub(1, n) / 0.1,
                                     norm * V_sub(2, n) / 0.1};
        splat_bump_multi(basis.data(), kMixBases, map.height, map.width, jit(0, n) * scale,
                         jit(1, n) * scale, w);
    }

    Rng mix_rng(derive_seed(mixing_seed, std::uint64_t(stage)));
    for (int c = 0; c < channels; ++c) {
        double m[kMixBases];
        for (double& v : m) v = mix_rng.uniform(-1.0, 1.0);
        for (int i = 0; i < hw; ++i) {
            double acc = 0.0;
            for (int j = 0; j < kMixBases; ++j) acc += m[j] * basis[size_t(j) * hw + i];
            map.data[size_t(c) * hw + i] = acc;
        }
    }
    if (feature_noise > 0.0) {
        // Noise amplitude drops steeply with stage: the coarse stages of a
        // decoder are the least faithful, which is what makes the finer,
        // later iterations worth running.
        static constexpr double kStageNoiseScale[3] = {1.0, 0.4, 0.05};
        const double sigma = feature_noise * kStageNoiseScale[stage - 1];
        Rng noise_rng(derive_seed(sample.render_seed, 90 + std::uint64_t(stage)));
        for (double& v : map.data) v += noise_rng.normal(0.0, sigma);
    }
    return map;
}

Heatmap render_heatmap(const SceneSample& sample, double noise_px) {
    const Matrix2Xd img = project_points(sample.V, sample.R, sample.T, sample.K);
    Matrix2Xd sparse(2, kSparseLandmarkCount);
    const auto& idx = sparse_landmark_indices();
    for (int i = 0; i < kSparseLandmarkCount; ++i) sparse.col(i) = img.col(idx[i]);
    const Matrix2Xd jit = jittered_projections(sample, noise_px, 2, sparse);

    // Log-Gaussian logits over the whole plane: the spatial softmax then
    // reproduces a sampled Gaussian, whose discrete expectation recovers the
    // center to sub-texel accuracy away from the borders.
    Heatmap heat(kSparseLandmarkCount, stage_extent(3), stage_extent(3));
    const double scale = double(heat.width) / sample.K.width;
    const double inv = 1.0 / (2.0 * kBumpStd * kBumpStd);
    for (int c = 0; c < kSparseLandmarkCount; ++c) {
        const double cx = jit(0, c) * scale, cy = jit(1, c) * scale;
        for (int y = 0; y < heat.height; ++y)
            for (int x = 0; x < heat.width; ++x) {
                const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                heat.at(c, y, x) = kHeatPeakLogit - d2 * inv;
            }
    }
    return heat;
}

RenderedEvidence render_feature_maps(const SceneSample& sample, double noise_px, int channels,
                                     std::uint64_t mixing_seed, double feature_noise) {
    RenderedEvidence ev;
    for (int t = 1; t <= 3; ++t)
        ev.maps[size_t(t - 1)] =
            render_stage_map(sample, t, noise_px, channels, mixing_seed, feature_noise);
    ev.heat = render_heatmap(sample, noise_px);
    return ev;
}

SyntheticDataset generate_dataset(const ScenarioConfig& cfg, int n_templates) {
    cfg.validate();
    if (n_templates <= 0) throw ConfigError("need at least one template");

    SyntheticDataset ds;
    ds.config = cfg;
    ds.mixing_seed = cfg.extractor_seed != 0 ? derive_seed(cfg.extractor_seed, 0x4D4958)
                                              : derive_seed(cfg.seed, 0x4D4958);
    const CameraIntrinsics K = scenario_intrinsics(cfg);

    std::vector<FaceTemplate> templates;
    templates.reserve(static_cast<size_t>(n_templates));
    Rng sigma_rng(derive_seed(cfg.seed, 999));
    for (int i = 0; i < n_templates; ++i) {
        const double sigma = cfg.sigma_min == cfg.sigma_max
                                 ? cfg.sigma_min
                                 : sigma_rng.uniform(cfg.sigma_min, cfg.sigma_max);
        FaceTemplate tmpl = make_face_template(derive_seed(cfg.seed, 1000000 + i), sigma);
        tmpl.id = i;
        templates.push_back(std::move(tmpl));
    }

    ds.records.reserve(static_cast<size_t>(cfg.sample_count));
    for (int i = 0; i < cfg.sample_count; ++i) {
        Rng rng(derive_seed(cfg.seed, std::uint64_t(i)));
        SceneSample s = sample_scene(cfg, templates[size_t(i % n_templates)], K, rng);
        s.render_seed = derive_seed(cfg.seed, 2000000 + std::uint64_t(i));
        ds.records.push_back(std::move(s));
    }
    return ds;
}

void audit_dataset(const SyntheticDataset& ds, double tol) {
    for (size_t i = 0; i < ds.records.size(); ++i) {
        const SceneSample& s = ds.records[i];
        validate_correction(s.c_star);
        const CorrectionParams c = correction_from_translation(s.T, s.bbox);
        const Vec3 round_trip = translation_from_correction(c, s.bbox);
        const double rel = (round_trip - s.T).norm() / std::max(1e-12, s.T.norm());
        if (rel > tol)
            throw Error("record " + std::to_string(i) + ": correction round-trip error " +
                        std::to_string(rel));
        if ((c.to_vector() - s.c_star.to_vector()).cwiseAbs().maxCoeff() > tol)
            throw Error("record " + std::to_string(i) + ": stored correction params are stale");
        if (!(s.T.z() > 0.0)) throw Error("record " + std::to_string(i) + ": non-positive depth");
    }
}

}  // namespace headpose
