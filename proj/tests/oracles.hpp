#pragma once

// Exhaustive reference implementations for the reconstruction tests.

#include <cmath>
#include <vector>

#include "usspine/recon.hpp"
#include "usspine/rng.hpp"

namespace usspine::testing {

struct VnnCase {
  std::vector<ProcessedFrame> frames;
  std::vector<FramePose> poses;
  PixelSpacing spacing{};
  GridSpec grid;
};

inline FramePose random_pose(Rng& rng, const Vec3& centre, double jitter) {
  FramePose p;
  std::array<double, 4> q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
  p.rotation = q;
  p = p.normalized();
  const auto r = p.rotation_matrix();
  // Place the frame's middle pixel near `centre`.
  p.translation = {centre[0] + rng.uniform(-jitter, jitter), centre[1] + rng.uniform(-jitter, jitter),
                   centre[2] + rng.uniform(-jitter, jitter)};
  const Vec3 mid = rigid_apply(r, {0, 0, 0}, {4.2, 3.5, 0.0});
  for (int a = 0; a < 3; ++a) p.translation[static_cast<std::size_t>(a)] -= mid[static_cast<std::size_t>(a)];
  return p;
}

/// Up to five small frames in random rigid poses around a 16^3 grid.
inline VnnCase random_vnn_case(std::uint64_t seed) {
  Rng rng(seed);
  VnnCase c;
  c.grid.origin = {0.0, 0.0, 0.0};
  c.grid.spacing = {1.0, 1.0, 1.0};
  c.grid.dims = {16, 16, 16};
  c.spacing = {0.7, 0.7};
  const int n = 1 + static_cast<int>(rng.below(5));
  for (int f = 0; f < n; ++f) {
    ProcessedFrame pf{GrayImage(13, 11), GrayImage(13, 11)};
    for (auto& v : pf.image.pixels) v = rng.bernoulli(0.1) ? 0 : static_cast<std::uint8_t>(1 + rng.below(255));
    for (auto& v : pf.sp_mask.pixels) v = rng.bernoulli(0.05) ? 1 : 0;
    c.frames.push_back(std::move(pf));
    c.poses.push_back(random_pose(rng, {7.5, 7.5, 7.5}, 4.0));
  }
  return c;
}

/// For each voxel, scans every pixel of every frame and keeps the nearest
/// one whose world position falls in that voxel's cell.
inline VoxelGrid brute_force_vnn(const VnnCase& c) {
  VoxelGrid g(c.grid);
  const auto& s = c.grid;
  for (int z = 0; z < s.dims[2]; ++z)
    for (int y = 0; y < s.dims[1]; ++y)
      for (int x = 0; x < s.dims[0]; ++x) {
        const Vec3 centre = s.center(x, y, z);
        const std::array<int, 3> cell{x, y, z};
        Contributor best;
        std::uint8_t value = 0, label = 0;
        for (std::size_t f = 0; f < c.frames.size(); ++f) {
          const auto& img = c.frames[f].image;
          const auto& mask = c.frames[f].sp_mask;
          for (int row = 0; row < img.height; ++row)
            for (int col = 0; col < img.width; ++col) {
              const std::size_t pix = static_cast<std::size_t>(row) * img.width + col;
              if (img.pixels[pix] == 0 && mask.pixels[pix] == 0) continue;
              const Vec3 w = pixel_to_world(c.poses[f], c.spacing, col, row);
              bool inside = true;
              for (std::size_t a = 0; a < 3; ++a) {
                const double u = (w[a] - s.origin[a]) / s.spacing[a] + 0.5;
                inside = inside && u >= cell[a] && u < cell[a] + 1;
              }
              if (!inside) continue;
              const double dx = w[0] - centre[0], dy = w[1] - centre[1], dz = w[2] - centre[2];
              const double d2 = dx * dx + dy * dy + dz * dz;
              const bool wins = d2 < best.distance2 ||
                                (d2 == best.distance2 && static_cast<int>(f) < best.frame);
              if (!wins) continue;
              best = {d2, static_cast<std::int32_t>(f), static_cast<std::int32_t>(pix)};
              value = img.pixels[pix];
              label = mask.pixels[pix] != 0 ? 1 : 0;
            }
        }
        const std::size_t v = s.index(x, y, z);
        g.contributor[v] = best;
        g.intensity[v] = value;
        g.sp_label[v] = label;
      }
  return g;
}

/// Every empty voxel takes the nearest filled voxel within the Chebyshev
/// radius, lowest (z, y, x) first among equally near ones.
inline VoxelGrid brute_force_holes(const VoxelGrid& in, int radius) {
  VoxelGrid out = in;
  const auto& s = in.spec;
  const auto [nx, ny, nz] = s.dims;
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x) {
        if (in.contributor[s.index(x, y, z)].filled()) continue;
        double best = INFINITY;
        std::uint8_t value = 0;
        for (int qz = 0; qz < nz; ++qz)
          for (int qy = 0; qy < ny; ++qy)
            for (int qx = 0; qx < nx; ++qx) {
              if (std::abs(qx - x) > radius || std::abs(qy - y) > radius || std::abs(qz - z) > radius) continue;
              const std::size_t q = s.index(qx, qy, qz);
              if (!in.contributor[q].filled()) continue;
              const double ex = (qx - x) * s.spacing[0], ey = (qy - y) * s.spacing[1], ez = (qz - z) * s.spacing[2];
              const double d2 = ex * ex + ey * ey + ez * ez;
              if (d2 < best) {
                best = d2;
                value = in.intensity[q];
              }
            }
        out.intensity[s.index(x, y, z)] = value;
      }
  return out;
}

}  // namespace usspine::testing
