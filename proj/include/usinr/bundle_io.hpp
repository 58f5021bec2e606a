#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "usinr/phantom.hpp"

namespace usinr {

inline constexpr int kBundleVersion = 1;

/// Writes manifest.json and one intensity and one label raster per frame
/// (frames/NNNNNN_intensity.raw, frames/NNNNNN_label.raw, 8-bit, row-major).
/// The simulator's per-frame truth is not part of the bundle; see write_ground_truth.
void write_bundle(const std::string& dir, const SweepBundle& bundle);
/// Reads and validates a bundle. Throws DataError on missing files, size
/// mismatches, an unknown version or invalid poses.
SweepBundle read_bundle(const std::string& dir);

/// Evaluation-only sidecar (ground_truth.json): phantom description and per-frame truth.
struct GroundTruth {
  PhantomSpec phantom;
  std::vector<FrameTruth> frames;
};
void write_ground_truth(const std::string& dir, const PhantomSpec& phantom,
                        const std::vector<FrameTruth>& truth);
GroundTruth read_ground_truth(const std::string& dir);

nlohmann::ordered_json phantom_to_json(const PhantomSpec& p);
PhantomSpec phantom_from_json(const nlohmann::json& j);

/// A set of label rasters in a directory (NNNNNN_label.raw + labels.json with the shape).
void write_label_set(const std::string& dir, const std::vector<LabelRaster>& labels);
std::vector<LabelRaster> read_label_set(const std::string& dir);

void write_raster(const std::string& path, const Raster<std::uint8_t>& r);
Raster<std::uint8_t> read_raster(const std::string& path, int width, int height);

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
std::string file_hash(const std::string& path);
/// Combined hash over a directory tree (sorted relative paths and contents).
std::string tree_hash(const std::string& dir);

void write_json(const std::string& path, const nlohmann::ordered_json& j);
nlohmann::json read_json(const std::string& path);

}  // namespace usinr
