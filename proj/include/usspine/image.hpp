#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace usspine {

inline constexpr int kFrameWidth = 640;
inline constexpr int kFrameHeight = 480;

/// 8-bit single channel image, row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0);

  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

  bool operator==(const GrayImage&) const = default;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

/// Binary portable graymap (P5, maxval 255).
void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);

/// I' = 255 ln(1 + I) / ln(256), as a lookup table over 0..255.
const std::array<double, 256>& log_intensity_table();

/// Geometric augmentation applied to a source frame: rotation about the
/// image centre, then an optional mirror about the vertical axis.
struct FrameWarp {
  double rotation_deg = 0.0;
  bool flip = false;

  /// Maps a source-frame point to the augmented frame.
  Point2 forward(Point2 p, int width, int height) const;
  /// Inverse of forward().
  Point2 inverse(Point2 p, int width, int height) const;
};

/// Builds the network input: log transform, warp, then bilinear resampling of
/// the source frame onto an out_size x out_size grid (aspect not preserved).
/// Output values lie in [0, 1]; samples falling outside the frame are 0.
std::vector<double> network_input(const GrayImage& frame, int out_size, const FrameWarp& warp = {});

}  // namespace usspine
