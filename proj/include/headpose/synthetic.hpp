#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "headpose/bbox_translation.hpp"
#include "headpose/feature_sampling.hpp"
#include "headpose/losses.hpp"
#include "headpose/refinement.hpp"
#include "headpose/rng.hpp"

namespace headpose {

// Procedural stand-in for a captured face mesh: a perturbed ellipsoid with
// fixed sphere-grid connectivity, 1220 vertices, 68 fixed sparse indices.
struct FaceTemplate {
    int id = 0;
    double sigma = 1.0;
    Matrix3Xd vertices;  // 3 x 1220, meters, centroid at origin
};

// Shared by every template: 21 rings x 58 columns plus two pole fans.
const TriangleList& face_triangles();
// Every 18th vertex; 68 entries.
const std::vector<int>& sparse_landmark_indices();

// sigma scales the ellipsoid axes; the vertex cloud is recentered and scaled
// to sit strictly inside the 0.2*sigma box. Identity perturbations have a
// fixed metric amplitude so shape detail is not proportional to sigma.
FaceTemplate make_face_template(std::uint64_t seed, double sigma);

enum class BBoxMode { Analytic, LandmarkTight };

struct ScenarioConfig {
    std::string name = "custom";
    double depth_min = 0.3;  // meters
    double depth_max = 0.9;
    double rot_range_deg = 40.0;   // per-axis uniform range, +-
    double lateral_px = 40.0;      // max head-center offset from the principal point
    double noise_px = 0.25;        // landmark evidence jitter, image pixels
    // Per-texel white noise on rendered maps (sensor/backbone stand-in).
    // Fine-scale maps average it over more texels, which is what gives the
    // later, finer-sampled iterations their edge.
    double feature_noise = 0.0;
    // Also require every projected landmark inside the frame (needs a focal
    // length short enough for the face to fit at depth_min).
    bool keep_face_in_frame = false;
    // Border kept clear of landmarks (or of the head center when the face is
    // allowed to overflow). Heatmap localization needs ~14 px of margin so
    // the soft-argmax expectation is not truncated.
    double frame_border_px = 2.0;
    BBoxMode bbox_mode = BBoxMode::Analytic;
    double bbox_margin = 0.25;  // landmark-tight mode only
    int sample_count = 0;
    std::uint64_t seed = 0;
    bool seed_set = false;
    // Seeds the channel-mixing of the rendered evidence, standing in for the
    // backbone that would produce real feature maps. A train/eval dataset
    // pair must share it, exactly as they would share a feature extractor;
    // 0 derives it from the scenario seed.
    std::uint64_t extractor_seed = 0;
    double sigma_min = 1.0;
    double sigma_max = 1.0;
    int channels = 8;
    double focal = 800.0;
    int image_size = 192;

    void validate() const;
};

ScenarioConfig near_scenario();  // depths 0.3..0.9 m
ScenarioConfig far_scenario();   // depths 1.2..2.4 m (artifact choice, not a dataset value)

CameraIntrinsics scenario_intrinsics(const ScenarioConfig& cfg);

// One ground-truth scene. Coordinates in the other two spaces and the sparse
// landmarks are derived on demand so they can never go stale.
struct SceneSample {
    int template_id = 0;
    double sigma = 1.0;
    CameraIntrinsics K;
    Mat3 R;
    Vec3 T;
    BBoxInfo bbox;
    CorrectionParams c_star;
    Matrix3Xd V;  // 3 x 1220, head space
    std::uint64_t render_seed = 0;

    GroundTruth ground_truth() const;
};

// Draws a pose: rotation uniform per axis, depth uniform in range, lateral
// offsets limited so the whole face projects inside the frame. Retries up to
// 100 times, then throws Unprojectable.
SceneSample sample_scene(const ScenarioConfig& cfg, const FaceTemplate& tmpl,
                         const CameraIntrinsics& K, Rng& rng);

// Landmark evidence: isotropic bumps (std 1.5 feature units) at the projected
// dense-landmark subsample, jittered by noise_px in image units, mixed across
// channels by a seeded matrix so no channel carries the evidence alone.
FeatureMap render_stage_map(const SceneSample& sample, int stage, double noise_px, int channels,
                            std::uint64_t mixing_seed, double feature_noise = 0.0);

// Per-sparse-landmark logit planes at stage-3 resolution; peak logit 50.
Heatmap render_heatmap(const SceneSample& sample, double noise_px);

struct RenderedEvidence {
    std::array<FeatureMap, 3> maps;
    Heatmap heat;
};
RenderedEvidence render_feature_maps(const SceneSample& sample, double noise_px, int channels,
                                     std::uint64_t mixing_seed, double feature_noise = 0.0);

struct SyntheticDataset {
    ScenarioConfig config;
    std::uint64_t mixing_seed = 0;
    std::vector<SceneSample> records;
};

// Deterministic: template seeds, record poses and render seeds all derive
// from (cfg.seed, index), so output is independent of generation order.
SyntheticDataset generate_dataset(const ScenarioConfig& cfg, int n_templates);

// Exact-inverse + invariant audit over every record; throws on violation.
void audit_dataset(const SyntheticDataset& ds, double tol = 1e-12);

}  // namespace headpose
