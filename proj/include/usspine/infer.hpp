#pragma once

#include <span>
#include <vector>

#include "usspine/image.hpp"
#include "usspine/landmarks.hpp"
#include "usspine/shn.hpp"

namespace usspine {

struct DecodeConfig {
  HeatmapScale scale{};
  VerifyConfig verify{};
  PostprocessConfig postprocess{};
};

/// Log transform, resize, forward, and decode of the last stack's heatmaps.
LandmarkSet predict_landmarks(const ShnWeights& weights, const GrayImage& frame, const DecodeConfig& config = {});

/// Post-processed frame for a verified set, the all-zero frame otherwise.
ProcessedFrame process_frame(const GrayImage& frame, const LandmarkSet& landmarks, const DecodeConfig& config = {});

struct InferResult {
  std::vector<LandmarkSet> landmarks;
  std::vector<ProcessedFrame> processed;

  double valid_rate() const;
};

InferResult infer_frames(const ShnWeights& weights, std::span<const GrayImage> frames, const DecodeConfig& config = {});

/// Same outputs as infer_frames, with the given landmarks standing in for the
/// network; they pass through verification first.
InferResult apply_landmarks(std::span<const GrayImage> frames, std::span<const LandmarkSet> landmarks,
                            const DecodeConfig& config = {});

}  // namespace usspine
