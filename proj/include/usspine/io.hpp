#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "usspine/geometry.hpp"
#include "usspine/image.hpp"
#include "usspine/landmarks.hpp"
#include "usspine/polynomial.hpp"
#include "usspine/recon.hpp"
#include "usspine/shn.hpp"
#include "usspine/spa.hpp"

namespace usspine {

namespace fs = std::filesystem;

/// Shortest decimal text that parses back to the same double.
std::string format_real(double v);
double parse_real(std::string_view text);

/// Comma-separated table with a header row.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;  // throws when absent
};

void write_csv(const fs::path& path, const CsvTable& table);
CsvTable read_csv(const fs::path& path);

/// On-disk scan: manifest.txt, frames/*.pgm, optional masks/*.pgm,
/// poses.csv and optional labels.csv.
struct ScanArchive {
  std::vector<GrayImage> frames;
  std::vector<GrayImage> masks;  // processed archives only
  std::vector<FramePose> poses;
  PixelSpacing spacing{};
  std::vector<LandmarkSet> labels;  // optional, with on_vertebra
  std::vector<bool> on_vertebra;

  std::size_t size() const { return frames.size(); }
};

void write_archive(const fs::path& dir, const ScanArchive& archive);
ScanArchive read_archive(const fs::path& dir);

void write_poses_csv(const fs::path& path, const std::vector<FramePose>& poses);
std::vector<FramePose> read_poses_csv(const fs::path& path);

/// frame_index, valid, reason, then x,y for LA0, LA1, SP, LA2, LA3.
void write_landmarks_csv(const fs::path& path, const std::vector<LandmarkSet>& sets);
std::vector<LandmarkSet> read_landmarks_csv(const fs::path& path);

void write_sp_points_csv(const fs::path& path, const std::vector<SpPoint>& points);
std::vector<SpPoint> read_sp_points_csv(const fs::path& path);

void write_segments_csv(const fs::path& path, const std::vector<AngleSegment>& segments);
std::vector<AngleSegment> read_segments_csv(const fs::path& path);

/// Binary network weights; values are stored as little-endian float32.
void save_weights(const fs::path& path, const ShnWeights& weights);
ShnWeights load_weights(const fs::path& path);

/// Binary volume: dims, origin, spacing, intensity and SP label bytes.
void save_volume(const fs::path& path, const VoxelGrid& grid);
VoxelGrid load_volume(const fs::path& path);

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, std::string_view text);

}  // namespace usspine
