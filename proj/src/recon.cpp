#include "usspine/recon.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace usspine {

namespace {

constexpr std::size_t kMaxVoxels = std::size_t{1} << 31;

}  // namespace

std::optional<std::array<int, 3>> GridSpec::locate(const Vec3& p) const {
  std::array<int, 3> idx{};
  for (int a = 0; a < 3; ++a) {
    const double f = std::floor((p[a] - origin[a]) / spacing[a] + 0.5);
    if (!(f >= 0.0 && f < dims[a])) return std::nullopt;
    idx[a] = static_cast<int>(f);
  }
  return idx;
}

VoxelGrid::VoxelGrid(GridSpec s)
    : spec(s), intensity(s.voxel_count(), 0), sp_label(s.voxel_count(), 0), contributor(s.voxel_count()) {}

Vec3 pixel_to_world(const FramePose& pose, const PixelSpacing& spacing, int col, int row) {
  return pose.apply({col * spacing.x, row * spacing.y, 0.0});
}

GridSpec fit_grid(std::span<const FramePose> poses, const PixelSpacing& spacing, int width, int height,
                  double voxel_mm) {
  if (poses.empty()) throw std::invalid_argument("fit_grid: no poses");
  if (!(voxel_mm > 0.0)) throw std::invalid_argument("fit_grid: voxel size must be positive");
  Vec3 lo{}, hi{};
  bool first = true;
  for (const auto& pose : poses) {
    for (int cx : {0, width - 1}) {
      for (int cy : {0, height - 1}) {
        const Vec3 w = pixel_to_world(pose, spacing, cx, cy);
        for (int a = 0; a < 3; ++a) {
          lo[a] = first ? w[a] : std::min(lo[a], w[a]);
          hi[a] = first ? w[a] : std::max(hi[a], w[a]);
        }
        first = false;
      }
    }
  }
  GridSpec g;
  g.origin = lo;
  g.spacing = {voxel_mm, voxel_mm, voxel_mm};
  for (int a = 0; a < 3; ++a) g.dims[a] = static_cast<int>(std::floor((hi[a] - lo[a]) / voxel_mm + 0.5)) + 1;
  if (g.voxel_count() > kMaxVoxels) throw std::invalid_argument("fit_grid: volume too large; increase the voxel size");
  return g;
}

ReconResult fill_vnn(std::span<const ProcessedFrame> frames, std::span<const FramePose> poses,
                     const PixelSpacing& spacing, const ReconConfig& config) {
  if (frames.empty()) throw std::invalid_argument("fill_vnn: no frames");
  if (frames.size() != poses.size()) {
    throw std::invalid_argument("fill_vnn: " + std::to_string(frames.size()) + " frames but " +
                                std::to_string(poses.size()) + " poses");
  }
  const int width = frames.front().image.width, height = frames.front().image.height;
  for (const auto& f : frames) {
    if (f.image.width != width || f.image.height != height || f.sp_mask.width != width || f.sp_mask.height != height) {
      throw std::invalid_argument("fill_vnn: frames and masks must share one size");
    }
  }

  ReconResult out;
  out.grid = VoxelGrid(config.grid ? *config.grid : fit_grid(poses, spacing, width, height, config.voxel_mm));
  out.degenerate_poses =
      poses.size() > 1 && std::all_of(poses.begin(), poses.end(), [&](const FramePose& p) { return p == poses[0]; });
  VoxelGrid& grid = out.grid;

  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto r = poses[f].rotation_matrix();
    const Vec3& t = poses[f].translation;
    const auto& img = frames[f].image;
    const auto& mask = frames[f].sp_mask;
    for (int row = 0; row < height; ++row) {
      for (int col = 0; col < width; ++col) {
        const std::size_t pix = static_cast<std::size_t>(row) * width + col;
        if (img.pixels[pix] == 0 && mask.pixels[pix] == 0) continue;
        const Vec3 w = rigid_apply(r, t, {col * spacing.x, row * spacing.y, 0.0});
        const auto idx = grid.spec.locate(w);
        if (!idx) continue;
        ++out.pixels_mapped;
        const Vec3 c = grid.spec.center((*idx)[0], (*idx)[1], (*idx)[2]);
        const double dx = w[0] - c[0], dy = w[1] - c[1], dz = w[2] - c[2];
        const Contributor cand{dx * dx + dy * dy + dz * dz, static_cast<std::int32_t>(f), static_cast<std::int32_t>(pix)};
        const std::size_t v = grid.spec.index((*idx)[0], (*idx)[1], (*idx)[2]);
        if (cand.beats(grid.contributor[v])) {
          grid.contributor[v] = cand;
          grid.intensity[v] = img.pixels[pix];
          grid.sp_label[v] = mask.pixels[pix] != 0 ? 1 : 0;
        }
      }
    }
  }
  return out;
}

VoxelGrid fill_holes(const VoxelGrid& grid, int radius) {
  if (radius < 0) throw std::invalid_argument("fill_holes: radius must be >= 0");
  VoxelGrid out = grid;
  if (radius == 0) return out;
  const auto& s = grid.spec;
  const auto [nx, ny, nz] = s.dims;

  // Offsets ranked by distance; equal distances share a rank.
  struct Offset {
    int dx, dy, dz;
    double d2;
    std::uint16_t rank;
  };
  std::vector<Offset> offsets;
  for (int dz = -radius; dz <= radius; ++dz) {
    for (int dy = -radius; dy <= radius; ++dy) {
      for (int dx = -radius; dx <= radius; ++dx) {
        if (dx == 0 && dy == 0 && dz == 0) continue;
        const double ex = dx * s.spacing[0], ey = dy * s.spacing[1], ez = dz * s.spacing[2];
        offsets.push_back({dx, dy, dz, ex * ex + ey * ey + ez * ez, 0});
      }
    }
  }
  std::vector<double> levels;
  for (const auto& o : offsets) levels.push_back(o.d2);
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  if (levels.size() >= 0xFFFF) throw std::invalid_argument("fill_holes: radius too large");
  for (auto& o : offsets) {
    o.rank = static_cast<std::uint16_t>(std::lower_bound(levels.begin(), levels.end(), o.d2) - levels.begin());
  }

  // Sources are visited in ascending (z, y, x), so a strict comparison keeps
  // the lowest source among equally near ones.
  std::vector<std::uint16_t> best(s.voxel_count(), 0xFFFF);
  for (int z = 0; z < nz; ++z) {
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x) {
        const std::size_t src = s.index(x, y, z);
        if (!grid.contributor[src].filled()) continue;
        for (const auto& o : offsets) {
          const int tx = x - o.dx, ty = y - o.dy, tz = z - o.dz;
          if (tx < 0 || ty < 0 || tz < 0 || tx >= nx || ty >= ny || tz >= nz) continue;
          const std::size_t dst = s.index(tx, ty, tz);
          if (grid.contributor[dst].filled() || o.rank >= best[dst]) continue;
          best[dst] = o.rank;
          out.intensity[dst] = grid.intensity[src];
        }
      }
    }
  }
  return out;
}

CoronalImage project_coronal(const VoxelGrid& grid, double y_min_mm, double y_max_mm, Projection mode) {
  const auto& s = grid.spec;
  const auto [nx, ny, nz] = s.dims;
  int j0 = ny, j1 = -1;
  for (int j = 0; j < ny; ++j) {
    const double yc = s.origin[1] + j * s.spacing[1];
    if (yc >= y_min_mm && yc <= y_max_mm) {
      j0 = std::min(j0, j);
      j1 = std::max(j1, j);
    }
  }
  if (j1 < j0) throw std::invalid_argument("project_coronal: depth slab contains no voxels");

  CoronalImage out;
  out.image = GrayImage(nx, nz);
  struct Acc {
    double sx = 0.0, sz = 0.0;
    long n = 0;
  };
  std::map<int, Acc> sp;
  for (int z = 0; z < nz; ++z) {
    for (int x = 0; x < nx; ++x) {
      unsigned peak = 0, sum = 0, count = 0;
      for (int j = j0; j <= j1; ++j) {
        const std::size_t v = s.index(x, j, z);
        const unsigned val = grid.intensity[v];
        peak = std::max(peak, val);
        if (val != 0) {
          sum += val;
          ++count;
        }
        if (grid.sp_label[v] != 0) {
          Acc& a = sp[grid.contributor[v].frame];
          a.sx += x;
          a.sz += z;
          ++a.n;
        }
      }
      const unsigned value = mode == Projection::max ? peak : (count == 0 ? 0 : (sum + count / 2) / count);
      out.image.at(x, z) = static_cast<std::uint8_t>(value);
    }
  }
  for (const auto& [frame, a] : sp) {
    out.sp_points.push_back({a.sx / static_cast<double>(a.n), a.sz / static_cast<double>(a.n), frame});
  }
  return out;
}

}  // namespace usspine
