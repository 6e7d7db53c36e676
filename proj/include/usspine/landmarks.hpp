#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "usspine/image.hpp"
#include "usspine/tensor.hpp"

namespace usspine {

inline constexpr int kNumLandmarks = 5;
inline constexpr int kHeatmapSize = 64;

/// Positions within a LandmarkSet, ordered left to right across the frame.
enum class Landmark { LA0 = 0, LA1 = 1, SP = 2, LA2 = 3, LA3 = 4 };

std::string_view landmark_name(Landmark lm);

/// Heatmap channel c holds landmark kChannelLandmark[c] (SP first).
inline constexpr std::array<Landmark, kNumLandmarks> kChannelLandmark = {
    Landmark::SP, Landmark::LA0, Landmark::LA1, Landmark::LA2, Landmark::LA3};

enum class RejectionReason { order_violation, lamina_distance };

std::string_view rejection_name(RejectionReason reason);
std::optional<RejectionReason> parse_rejection(std::string_view text);

/// Five keypoints in 640x480 frame coordinates.
struct LandmarkSet {
  std::array<Point2, kNumLandmarks> points{};
  bool valid = false;
  std::optional<RejectionReason> reason;

  Point2& operator[](Landmark lm) { return points[static_cast<std::size_t>(lm)]; }
  const Point2& operator[](Landmark lm) const { return points[static_cast<std::size_t>(lm)]; }

  bool operator==(const LandmarkSet&) const = default;
};

/// Mapping between heatmap lattice and frame coordinates.
struct HeatmapScale {
  double gamma_x = static_cast<double>(kFrameWidth) / kHeatmapSize;   // 10
  double gamma_y = static_cast<double>(kFrameHeight) / kHeatmapSize;  // 7.5
};

struct VerifyConfig {
  double lamina_min_px = 10.0;
  double lamina_max_px = 80.0;
};

/// Peak location on one square heatmap: the argmax nudged a quarter pixel
/// toward the second-highest pixel. Throws on a constant map.
Point2 decode_peak(std::span<const double> map, int side = kHeatmapSize);

Point2 to_image_coords(Point2 heatmap_point, const HeatmapScale& scale = {});

/// Applies the order and lamina-distance rules; never moves points.
LandmarkSet verify_landmarks(LandmarkSet set, const VerifyConfig& config = {});

/// stack is [K, side, side] or [1, K, side, side] in channel order
/// kChannelLandmark.
LandmarkSet decode_frame(const Tensor& stack, const HeatmapScale& scale = {}, const VerifyConfig& config = {});

struct TargetConfig {
  double sigma = 4.0;      // heatmap pixels
  double truncate = 3.0;   // in units of sigma
  int side = kHeatmapSize;
  HeatmapScale scale{};
};

/// Gaussian training target, [K, side, side], peak 1 at each landmark.
Tensor make_target(const LandmarkSet& landmarks, const TargetConfig& config = {});

struct ProcessedFrame {
  GrayImage image;
  GrayImage sp_mask;  // 1 on the SP pixel and its 8 neighbours, else 0
};

struct PostprocessConfig {
  int margin_px = 10;
};

/// Keeps a padded rectangle around the lamina points and highlights the SP.
ProcessedFrame postprocess_frame(const GrayImage& frame, const LandmarkSet& landmarks,
                                 const PostprocessConfig& config = {});

/// Frame emitted when verification fails: all zero, no SP mask.
ProcessedFrame empty_processed_frame(int width = kFrameWidth, int height = kFrameHeight);

}  // namespace usspine
