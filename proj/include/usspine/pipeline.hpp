#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "usspine/config.hpp"
#include "usspine/infer.hpp"
#include "usspine/io.hpp"
#include "usspine/metrics.hpp"
#include "usspine/phantom.hpp"
#include "usspine/recon.hpp"
#include "usspine/spa.hpp"

namespace usspine {

// Sub-stream indices of the pipeline seed.
inline constexpr std::uint64_t kScanStream = 1;
inline constexpr std::uint64_t kTrainDataStream = 2;
inline constexpr std::uint64_t kInitStream = 3;
inline constexpr std::uint64_t kTrainStream = 4;

ScanArchive archive_from_scan(const TrackedScan& scan);
ScanArchive archive_from_processed(const std::vector<ProcessedFrame>& processed, const std::vector<FramePose>& poses,
                                   const PixelSpacing& spacing);
std::vector<ProcessedFrame> processed_from_archive(const ScanArchive& archive);

struct Reconstruction {
  ReconResult vnn;
  VoxelGrid filled;
  CoronalImage coronal;
};

Reconstruction reconstruct(std::span<const ProcessedFrame> processed, std::span<const FramePose> poses,
                           const PixelSpacing& spacing, const ReconstructionConfig& config);

struct Measurement {
  FilteredPoints filtered;
  SpaReport report;
  std::string failure;  // why no curve could be fitted; empty on success

  bool ok() const { return failure.empty(); }
};

Measurement measure(std::span<const SpPoint> points, std::span<const FramePose> poses, const CoronalScale& scale,
                    const MeasureConfig& config);

/// Per-segment |measured - truth| in degrees; nullopt when the segment
/// counts differ.
std::optional<std::vector<double>> segment_errors(const std::vector<AngleSegment>& measured,
                                                  const std::vector<AngleSegment>& truth);

/// One in-memory pass from a scan to SPA, with either a network or the
/// scan's own labels producing the landmarks.
struct PipelineRun {
  InferResult inference;
  Reconstruction recon;
  Measurement measurement;
  double valid_rate_on_vertebra = 0.0;
};

PipelineRun run_scan(const PipelineConfig& config, const ScanArchive& scan, const ShnWeights* weights);

// File-level commands. Each writes into `out` and logs a short summary.
void cmd_phantom(const PipelineConfig& config, const fs::path& out, std::ostream& log);
void cmd_train(const PipelineConfig& config, const std::vector<fs::path>& datasets, const fs::path& out,
               std::ostream& log);
void cmd_infer(const PipelineConfig& config, const std::optional<fs::path>& weights, const fs::path& scan_dir,
               const fs::path& out, std::ostream& log);
void cmd_reconstruct(const PipelineConfig& config, const fs::path& processed_dir, const fs::path& out,
                     std::ostream& log);
void cmd_measure(const PipelineConfig& config, const fs::path& points_csv, const fs::path& poses_csv,
                 const fs::path& out, std::ostream& log);

struct EvaluateInputs {
  std::optional<fs::path> pred_landmarks, truth_landmarks;
  std::optional<fs::path> pred_segments, truth_segments;
};
void cmd_evaluate(const PipelineConfig& config, const EvaluateInputs& inputs, const fs::path& out, std::ostream& log);

/// phantom -> train (unless weights are given or landmarks come from the
/// labels) -> infer -> reconstruct -> measure -> evaluate.
void cmd_pipeline(const PipelineConfig& config, const std::optional<fs::path>& weights, bool oracle_landmarks,
                  const fs::path& out, std::ostream& log);

}  // namespace usspine
