#include "headpose/dataset_io.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace headpose {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'F', 'M', 'A', 'P'};
constexpr std::uint32_t kFmapVersion = 1;

json config_to_json(const ScenarioConfig& cfg) {
    return {{"name", cfg.name},
            {"depth_min", cfg.depth_min},
            {"depth_max", cfg.depth_max},
            {"rot_range_deg", cfg.rot_range_deg},
            {"lateral_px", cfg.lateral_px},
            {"noise_px", cfg.noise_px},
            {"feature_noise", cfg.feature_noise},
            {"keep_face_in_frame", cfg.keep_face_in_frame},
            {"frame_border_px", cfg.frame_border_px},
            {"bbox_mode", cfg.bbox_mode == BBoxMode::Analytic ? "analytic" : "tight"},
            {"bbox_margin", cfg.bbox_margin},
            {"sample_count", cfg.sample_count},
            {"seed", cfg.seed},
            {"extractor_seed", cfg.extractor_seed},
            {"sigma_min", cfg.sigma_min},
            {"sigma_max", cfg.sigma_max},
            {"channels", cfg.channels},
            {"focal", cfg.focal},
            {"image_size", cfg.image_size}};
}

ScenarioConfig config_from_json(const json& j) {
    ScenarioConfig cfg;
    cfg.name = j.at("name");
    cfg.depth_min = j.at("depth_min");
    cfg.depth_max = j.at("depth_max");
    cfg.rot_range_deg = j.at("rot_range_deg");
    cfg.lateral_px = j.at("lateral_px");
    cfg.noise_px = j.at("noise_px");
    cfg.feature_noise = j.at("feature_noise");
    cfg.keep_face_in_frame = j.at("keep_face_in_frame");
    cfg.frame_border_px = j.at("frame_border_px");
    cfg.bbox_mode = j.at("bbox_mode") == "analytic" ? BBoxMode::Analytic : BBoxMode::LandmarkTight;
    cfg.bbox_margin = j.at("bbox_margin");
    cfg.sample_count = j.at("sample_count");
    cfg.seed = j.at("seed");
    cfg.seed_set = true;
    cfg.extractor_seed = j.at("extractor_seed");
    cfg.sigma_min = j.at("sigma_min");
    cfg.sigma_max = j.at("sigma_max");
    cfg.channels = j.at("channels");
    cfg.focal = j.at("focal");
    cfg.image_size = j.at("image_size");
    return cfg;
}

json record_to_json(const SceneSample& s) {
    std::vector<double> r(9);
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) r[size_t(i * 3 + k)] = s.R(i, k);
    std::vector<double> v(size_t(s.V.size()));
    // Per-vertex (x, y, z), vertex order preserved.
    for (Eigen::Index n = 0; n < s.V.cols(); ++n)
        for (int k = 0; k < 3; ++k) v[size_t(3 * n + k)] = s.V(k, n);
    return {{"template_id", s.template_id},
            {"sigma", s.sigma},
            {"K",
             {{"f", s.K.f}, {"cx", s.K.cx}, {"cy", s.K.cy}, {"w", s.K.width}, {"h", s.K.height}}},
            {"R_star", r},
            {"T_star", {s.T.x(), s.T.y(), s.T.z()}},
            {"bbox",
             {{"tau_x", s.bbox.tau_x}, {"tau_y", s.bbox.tau_y}, {"b", s.bbox.b}, {"f", s.bbox.f}}},
            {"c_star", {{"s", s.c_star.s}, {"tx", s.c_star.tau_tilde_x}, {"ty", s.c_star.tau_tilde_y}}},
            {"render_seed", s.render_seed},
            {"V_star", v}};
}

SceneSample record_from_json(const json& j) {
    SceneSample s;
    s.template_id = j.at("template_id");
    s.sigma = j.at("sigma");
    const auto& k = j.at("K");
    s.K.f = k.at("f");
    s.K.cx = k.at("cx");
    s.K.cy = k.at("cy");
    s.K.width = k.at("w");
    s.K.height = k.at("h");
    const auto& r = j.at("R_star");
    if (r.size() != 9) throw IoFailure("R_star must have 9 entries");
    for (int i = 0; i < 3; ++i)
        for (int c = 0; c < 3; ++c) s.R(i, c) = r[size_t(i * 3 + c)];
    const auto& t = j.at("T_star");
    s.T = Vec3(t.at(0), t.at(1), t.at(2));
    const auto& bb = j.at("bbox");
    s.bbox = {bb.at("tau_x"), bb.at("tau_y"), bb.at("b"), bb.at("f")};
    const auto& c = j.at("c_star");
    s.c_star = {c.at("s"), c.at("tx"), c.at("ty")};
    s.render_seed = j.at("render_seed");
    const auto& v = j.at("V_star");
    if (v.size() % 3 != 0) throw IoFailure("V_star length must be a multiple of 3");
    s.V.resize(3, Eigen::Index(v.size() / 3));
    for (Eigen::Index n = 0; n < s.V.cols(); ++n)
        for (int kk = 0; kk < 3; ++kk) s.V(kk, n) = v[size_t(3 * n + kk)];
    return s;
}

}  // namespace

void write_dataset_jsonl(const SyntheticDataset& ds, const std::string& path, bool write_maps) {
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot open dataset for writing: " + path);
    json header{{"schema", "headpose-dataset"},
                {"version", 1},
                {"count", ds.records.size()},
                {"mixing_seed", ds.mixing_seed},
                {"config", config_to_json(ds.config)}};
    out << header.dump() << "\n";
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    const std::string stem = std::filesystem::path(path).stem().string();
    for (size_t i = 0; i < ds.records.size(); ++i) {
        json rec = record_to_json(ds.records[i]);
        if (write_maps) {
            json maps;
            for (int t = 1; t <= 3; ++t) {
                const std::string name = stem + "_r" + std::to_string(i) + "_t" +
                                         std::to_string(t) + ".fmap";
                write_feature_map(render_stage_map(ds.records[i], t, ds.config.noise_px,
                                                   ds.config.channels, ds.mixing_seed,
                                                   ds.config.feature_noise),
                                  (base / name).string());
                maps["t" + std::to_string(t)] = name;
            }
            rec["maps"] = maps;
        }
        out << rec.dump() << "\n";
    }
    if (!out) throw IoFailure("dataset write failed: " + path);
}

SyntheticDataset load_dataset_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open dataset: " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoFailure("dataset is empty: " + path);
    json header = json::parse(line);
    if (header.value("schema", "") != "headpose-dataset" || header.value("version", 0) != 1)
        throw IoFailure("unrecognized dataset schema: " + path);
    SyntheticDataset ds;
    ds.config = config_from_json(header.at("config"));
    ds.mixing_seed = header.at("mixing_seed");
    const size_t count = header.at("count");
    ds.records.reserve(count);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ds.records.push_back(record_from_json(json::parse(line)));
    }
    if (ds.records.size() != count)
        throw IoFailure("dataset record count mismatch: expected " + std::to_string(count) +
                        ", read " + std::to_string(ds.records.size()));
    return ds;
}

void write_feature_map(const FeatureMap& map, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoFailure("cannot open feature map for writing: " + path);
    char header[16] = {};
    std::memcpy(header, kMagic, 4);
    std::uint32_t version = kFmapVersion;
    std::memcpy(header + 4, &version, 4);
    const std::uint16_t c = std::uint16_t(map.channels), h = std::uint16_t(map.height),
                        w = std::uint16_t(map.width);
    std::memcpy(header + 8, &c, 2);
    std::memcpy(header + 10, &h, 2);
    std::memcpy(header + 12, &w, 2);
    out.write(header, sizeof(header));
    out.write(reinterpret_cast<const char*>(map.data.data()),
              std::streamsize(map.data.size() * sizeof(double)));
    if (!out) throw IoFailure("feature map write failed: " + path);
}

FeatureMap read_feature_map(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open feature map: " + path);
    char header[16];
    in.read(header, sizeof(header));
    if (!in || std::memcmp(header, kMagic, 4) != 0)
        throw IoFailure("bad feature map magic: " + path);
    std::uint32_t version;
    std::memcpy(&version, header + 4, 4);
    if (version != kFmapVersion) throw IoFailure("unsupported feature map version: " + path);
    std::uint16_t c, h, w;
    std::memcpy(&c, header + 8, 2);
    std::memcpy(&h, header + 10, 2);
    std::memcpy(&w, header + 12, 2);
    FeatureMap map(c, h, w);
    in.read(reinterpret_cast<char*>(map.data.data()),
            std::streamsize(map.data.size() * sizeof(double)));
    if (!in) throw IoFailure("feature map truncated: " + path);
    return map;
}

std::string file_content_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot hash missing file: " + path);
    std::uint64_t hash = 1469598103934665603ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            hash ^= std::uint8_t(buf[i]);
            hash *= 1099511628211ULL;
        }
        if (!in) break;
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(hash));
    return hex;
}

}  // namespace headpose
