#pragma once

#include <string>

#include "headpose/synthetic.hpp"

namespace headpose {

// JSONL dataset: one header line followed by one record per line. Schema v1;
// the sparse-index set and triangulation are implied by the version. Floats
// round-trip exactly (shortest-representation encoding).
void write_dataset_jsonl(const SyntheticDataset& ds, const std::string& path,
                         bool write_maps = false);

SyntheticDataset load_dataset_jsonl(const std::string& path);

// Binary feature-map sidecar. 16-byte header: magic "FMAP", u32 version,
// u16 channels, u16 height, u16 width, u16 pad; then row-major float64
// [c][y][x], little-endian.
void write_feature_map(const FeatureMap& map, const std::string& path);
FeatureMap read_feature_map(const std::string& path);

// FNV-1a 64 over the file bytes, hex string; embedded in reports.
std::string file_content_hash(const std::string& path);

}  // namespace headpose
