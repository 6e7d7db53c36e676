#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "usspine/geometry.hpp"
#include "usspine/image.hpp"
#include "usspine/landmarks.hpp"

namespace usspine {

/// Voxel (i, j, k) has its centre at origin + (i, j, k) * spacing.
struct GridSpec {
  Vec3 origin{0.0, 0.0, 0.0};
  Vec3 spacing{0.5, 0.5, 0.5};
  std::array<int, 3> dims{0, 0, 0};  // nx, ny, nz

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(dims[2]);
  }
  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * static_cast<std::size_t>(dims[1]) + static_cast<std::size_t>(y)) *
               static_cast<std::size_t>(dims[0]) +
           static_cast<std::size_t>(x);
  }
  Vec3 center(int x, int y, int z) const {
    return {origin[0] + x * spacing[0], origin[1] + y * spacing[1], origin[2] + z * spacing[2]};
  }
  /// Enclosing voxel of a world point, or nullopt outside the grid.
  std::optional<std::array<int, 3>> locate(const Vec3& p) const;

  bool operator==(const GridSpec&) const = default;
};

/// Pixel that won a voxel. Ordering is (squared distance, frame, pixel).
struct Contributor {
  double distance2 = std::numeric_limits<double>::infinity();  // mm^2 to the voxel centre
  std::int32_t frame = -1;
  std::int32_t pixel = -1;  // row-major index within the frame

  bool filled() const { return frame >= 0; }
  bool beats(const Contributor& o) const {
    if (distance2 != o.distance2) return distance2 < o.distance2;
    if (frame != o.frame) return frame < o.frame;
    return pixel < o.pixel;
  }
  bool operator==(const Contributor&) const = default;
};

struct VoxelGrid {
  GridSpec spec;
  std::vector<std::uint8_t> intensity;
  std::vector<std::uint8_t> sp_label;
  std::vector<Contributor> contributor;

  explicit VoxelGrid(GridSpec s = {});
  bool operator==(const VoxelGrid&) const = default;
};

struct ReconConfig {
  double voxel_mm = 0.5;
  std::optional<GridSpec> grid;  // overrides the fitted bounds
};

struct ReconResult {
  VoxelGrid grid;
  bool degenerate_poses = false;  // every pose identical
  std::size_t pixels_mapped = 0;
};

/// World position of pixel (col, row) under `pose`.
Vec3 pixel_to_world(const FramePose& pose, const PixelSpacing& spacing, int col, int row);

/// Bounds covering every frame's corners, at the configured voxel size.
GridSpec fit_grid(std::span<const FramePose> poses, const PixelSpacing& spacing, int width, int height, double voxel_mm);

/// Voxel nearest-neighbour compounding of the nonzero pixels of each frame.
ReconResult fill_vnn(std::span<const ProcessedFrame> frames, std::span<const FramePose> poses,
                     const PixelSpacing& spacing, const ReconConfig& config = {});

/// Empty voxels copy the nearest VNN-filled voxel within `radius` (Chebyshev,
/// in voxels); distance is measured in mm and ties go to the lowest (z, y, x).
VoxelGrid fill_holes(const VoxelGrid& grid, int radius = 1);

enum class Projection { max, mean };

struct CoronalImage {
  GrayImage image;              // width nx, height nz
  std::vector<SpPoint> sp_points;  // sorted by source frame
};

/// Depth-slab projection onto the (x, z) plane. The slab is [y_min, y_max] mm
/// and selects voxels whose centres fall inside it.
CoronalImage project_coronal(const VoxelGrid& grid, double y_min_mm, double y_max_mm,
                             Projection mode = Projection::max);

}  // namespace usspine
