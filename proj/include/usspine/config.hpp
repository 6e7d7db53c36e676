#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "usspine/infer.hpp"
#include "usspine/phantom.hpp"
#include "usspine/recon.hpp"
#include "usspine/shn.hpp"
#include "usspine/spa.hpp"
#include "usspine/train.hpp"

namespace usspine {

struct ScanConfig {
  ScanOptions options{};
  int min_frames = 900;
  int max_frames = 2300;
};

struct TrainingDataConfig {
  int frames = 500;
  double rib_probability = 0.3;
};

struct ReconstructionConfig {
  double voxel_mm = 0.5;
  int hole_radius = 1;
  double slab_y_min_mm = 5.0;
  double slab_y_max_mm = 45.0;
  Projection projection = Projection::max;
};

struct MeasureConfig {
  double merge_below_deg = 1.0;
  FilterConfig filter{};
};

struct MetricsConfig {
  double pck_radius_px = 15.0;
  double mad_threshold_deg = 5.0;
};

/// Every tunable of the pipeline. Serializes to JSON and back without loss.
struct PipelineConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  SpinePhantom phantom = default_phantom();
  ScanConfig scan{};
  ShnConfig network = ShnConfig::desk();
  TrainConfig train{};
  TrainingDataConfig training_data{};
  DecodeConfig decode{};
  ReconstructionConfig recon{};
  MeasureConfig measure{};
  MetricsConfig metrics{};

  /// Replaces the schedule with a single phase.
  void override_schedule(int epochs, double lr);
  void validate() const;
};

std::string config_to_json(const PipelineConfig& config);
PipelineConfig config_from_json(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const PipelineConfig& config);

bool same_config(const PipelineConfig& a, const PipelineConfig& b);

}  // namespace usspine
