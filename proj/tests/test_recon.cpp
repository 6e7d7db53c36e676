#include <doctest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "usspine/infer.hpp"
#include "usspine/phantom.hpp"
#include "usspine/pipeline.hpp"
#include "usspine/recon.hpp"

using namespace usspine;
using namespace usspine::testing;

namespace {

VoxelGrid filled_grid(std::array<int, 3> dims, std::uint8_t value) {
  GridSpec s;
  s.dims = dims;
  VoxelGrid g(s);
  for (std::size_t i = 0; i < g.intensity.size(); ++i) {
    g.intensity[i] = value;
    g.contributor[i] = {0.0, 0, static_cast<std::int32_t>(i)};
  }
  return g;
}

TrackedScan short_scan(const SpinePhantom& ph, int frames) {
  ScanOptions opt;
  opt.frame_count = frames;
  return render_scan(ph, opt, 21);
}

SpinePhantom short_phantom() {
  SpinePhantom ph;
  ph.vertebra_count = 5;
  ph.speckle = 0.0;
  return ph;
}

}  // namespace

TEST_SUITE("recon") {
  TEST_CASE("axis-aligned stacking copies frame k into slice k") {
    std::vector<ProcessedFrame> frames;
    std::vector<FramePose> poses;
    Rng rng(1);
    for (int k = 0; k < 6; ++k) {
      ProcessedFrame f{GrayImage(8, 5), GrayImage(8, 5)};
      for (auto& v : f.image.pixels) v = static_cast<std::uint8_t>(1 + rng.below(255));
      frames.push_back(f);
      poses.push_back(FramePose{{0.0, 0.0, 0.5 * k}, {1, 0, 0, 0}});
    }
    const ReconResult r = fill_vnn(frames, poses, PixelSpacing{0.5, 0.5}, ReconConfig{0.5, std::nullopt});
    REQUIRE(r.grid.spec.dims == std::array<int, 3>{8, 5, 6});
    for (int k = 0; k < 6; ++k)
      for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 8; ++x) CHECK(r.grid.intensity[r.grid.spec.index(x, y, k)] == frames[static_cast<std::size_t>(k)].image.at(x, y));
    CHECK(r.pixels_mapped == 240);
    CHECK_FALSE(r.degenerate_poses);
  }

  TEST_CASE("nearest contributor wins regardless of frame order") {
    GridSpec s;
    s.spacing = {1.0, 1.0, 1.0};
    s.dims = {3, 3, 3};
    ProcessedFrame near{GrayImage(1, 1, 100), GrayImage(1, 1)};
    ProcessedFrame far{GrayImage(1, 1, 200), GrayImage(1, 1)};
    const FramePose at_near{{1.1, 1.0, 1.0}, {1, 0, 0, 0}};
    const FramePose at_far{{1.0, 1.3, 1.0}, {1, 0, 0, 0}};
    for (bool near_first : {true, false}) {
      std::vector<ProcessedFrame> fs = near_first ? std::vector{near, far} : std::vector{far, near};
      std::vector<FramePose> ps = near_first ? std::vector{at_near, at_far} : std::vector{at_far, at_near};
      const ReconResult r = fill_vnn(fs, ps, {}, ReconConfig{1.0, s});
      const std::size_t v = s.index(1, 1, 1);
      CHECK(r.grid.intensity[v] == 100);
      CHECK(r.grid.contributor[v].distance2 == doctest::Approx(0.01));
      CHECK(r.grid.contributor[v].frame == (near_first ? 0 : 1));
    }
  }

  TEST_CASE("VNN matches the brute-force scan on random poses") {
    for (std::uint64_t s = 0; s < 10; ++s) {
      const VnnCase c = random_vnn_case(stream_seed(500, s));
      const ReconResult r = fill_vnn(c.frames, c.poses, c.spacing, ReconConfig{1.0, c.grid});
      const VoxelGrid oracle = brute_force_vnn(c);
      CHECK(r.grid == oracle);
    }
  }

  TEST_CASE("VNN is invariant to frame order") {
    for (std::uint64_t s = 0; s < 5; ++s) {
      VnnCase c = random_vnn_case(stream_seed(600, s));
      const ReconResult a = fill_vnn(c.frames, c.poses, c.spacing, ReconConfig{1.0, c.grid});
      std::reverse(c.frames.begin(), c.frames.end());
      std::reverse(c.poses.begin(), c.poses.end());
      const ReconResult b = fill_vnn(c.frames, c.poses, c.spacing, ReconConfig{1.0, c.grid});
      CHECK(a.grid.intensity == b.grid.intensity);
      CHECK(a.grid.sp_label == b.grid.sp_label);
      const auto n = static_cast<std::int32_t>(c.frames.size());
      for (std::size_t v = 0; v < a.grid.contributor.size(); ++v) {
        if (!a.grid.contributor[v].filled()) continue;
        CHECK(b.grid.contributor[v].frame == n - 1 - a.grid.contributor[v].frame);
        CHECK(b.grid.contributor[v].distance2 == a.grid.contributor[v].distance2);
      }
    }
  }

  TEST_CASE("identical poses are flagged and mismatched inputs rejected") {
    std::vector<ProcessedFrame> fs(2, ProcessedFrame{GrayImage(4, 4, 9), GrayImage(4, 4)});
    std::vector<FramePose> ps(2);
    CHECK(fill_vnn(fs, ps, {}).degenerate_poses);
    ps.pop_back();
    CHECK_THROWS_AS(fill_vnn(fs, ps, {}), std::invalid_argument);
  }

  TEST_CASE("world to voxel to world stays within half a voxel diagonal") {
    GridSpec s;
    s.origin = {-3.0, 2.0, 10.0};
    s.spacing = {0.5, 0.5, 0.5};
    s.dims = {40, 30, 20};
    Rng rng(2);
    for (int i = 0; i < 1000; ++i) {
      const Vec3 p{rng.uniform(-3.2, 16.7), rng.uniform(1.8, 16.7), rng.uniform(9.8, 19.7)};
      const auto idx = s.locate(p);
      REQUIRE(idx.has_value());
      CHECK(distance(p, s.center((*idx)[0], (*idx)[1], (*idx)[2])) <= 0.5 * std::sqrt(3.0) * 0.5);
    }
    CHECK_FALSE(s.locate({-10.0, 5.0, 12.0}).has_value());
  }

  TEST_CASE("hole filling: radius 0 is the identity") {
    const VnnCase c = random_vnn_case(700);
    const VoxelGrid g = fill_vnn(c.frames, c.poses, c.spacing, ReconConfig{1.0, c.grid}).grid;
    CHECK(fill_holes(g, 0) == g);
    CHECK_THROWS_AS(fill_holes(g, -1), std::invalid_argument);
  }

  TEST_CASE("hole filling: an empty voxel inside a constant block takes its value") {
    VoxelGrid g = filled_grid({3, 3, 3}, 200);
    const std::size_t centre = g.spec.index(1, 1, 1);
    g.intensity[centre] = 0;
    g.contributor[centre] = {};
    const VoxelGrid out = fill_holes(g, 1);
    CHECK(out.intensity[centre] == 200);
    CHECK_FALSE(out.contributor[centre].filled());
  }

  TEST_CASE("hole filling matches the exhaustive scan") {
    Rng rng(9);
    VoxelGrid checker = filled_grid({5, 5, 5}, 0);
    for (int z = 0; z < 5; ++z)
      for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) {
          const std::size_t v = checker.spec.index(x, y, z);
          if ((x + y + z) % 2 == 0) {
            checker.intensity[v] = static_cast<std::uint8_t>(1 + rng.below(255));
          } else {
            checker.contributor[v] = {};
          }
        }
    CHECK(fill_holes(checker, 1) == brute_force_holes(checker, 1));
    CHECK(fill_holes(checker, 2) == brute_force_holes(checker, 2));

    for (std::uint64_t s = 0; s < 5; ++s) {
      const VnnCase c = random_vnn_case(stream_seed(800, s));
      VoxelGrid g = fill_vnn(c.frames, c.poses, c.spacing, ReconConfig{1.0, c.grid}).grid;
      g.spec.spacing = {1.0, 0.75, 1.25};
      for (int radius : {1, 2}) CHECK(fill_holes(g, radius) == brute_force_holes(g, radius));
    }
  }

  TEST_CASE("projection of one bright voxel") {
    GridSpec s;
    s.dims = {6, 8, 5};
    VoxelGrid g(s);
    g.intensity[s.index(4, 3, 2)] = 180;
    const CoronalImage img = project_coronal(g, 0.0, 4.0);
    REQUIRE(img.image.width == 6);
    REQUIRE(img.image.height == 5);
    for (int z = 0; z < 5; ++z)
      for (int x = 0; x < 6; ++x) CHECK(img.image.at(x, z) == ((x == 4 && z == 2) ? 180 : 0));
    // Outside the slab the voxel disappears.
    CHECK(project_coronal(g, 2.0, 3.0).image.at(4, 2) == 0);
    CHECK_THROWS_AS(project_coronal(g, 10.0, 20.0), std::invalid_argument);
  }

  TEST_CASE("uniform slab projects to a uniform image in both modes") {
    VoxelGrid g = filled_grid({7, 4, 3}, 90);
    for (Projection mode : {Projection::max, Projection::mean}) {
      const CoronalImage img = project_coronal(g, 0.0, 1.5, mode);
      for (auto v : img.image.pixels) CHECK(v == 90);
    }
    g.intensity[g.spec.index(0, 1, 0)] = 30;
    g.intensity[g.spec.index(0, 2, 0)] = 0;
    CHECK(project_coronal(g, 0.0, 1.5, Projection::mean).image.at(0, 0) == 70);
    CHECK(project_coronal(g, 0.0, 1.5, Projection::max).image.at(0, 0) == 90);
  }

  TEST_CASE("SP labels become one centroid per source frame") {
    GridSpec s;
    s.dims = {5, 3, 4};
    VoxelGrid g(s);
    auto mark = [&](int x, int y, int z, int frame) {
      const std::size_t v = s.index(x, y, z);
      g.sp_label[v] = 1;
      g.intensity[v] = 255;
      g.contributor[v] = {0.0, frame, 0};
    };
    mark(1, 0, 1, 7);
    mark(2, 1, 1, 7);
    mark(4, 2, 3, 2);
    const CoronalImage img = project_coronal(g, 0.0, 1.0);
    REQUIRE(img.sp_points.size() == 2);
    CHECK(img.sp_points[0] == SpPoint{4.0, 3.0, 2});
    CHECK(img.sp_points[1] == SpPoint{1.5, 1.0, 7});
  }

  TEST_CASE("straight quiet spine gives collinear SP points near the truth") {
    const SpinePhantom ph = short_phantom();
    const TrackedScan scan = short_scan(ph, 240);
    const InferResult inf = apply_landmarks(scan.frames, scan.labels);
    const Reconstruction rec = reconstruct(inf.processed, scan.poses, scan.spacing, ReconstructionConfig{});
    const auto& pts = rec.coronal.sp_points;
    REQUIRE(pts.size() > 100);
    // Least-squares line x = a + b z.
    double sz = 0, sx = 0, szz = 0, szx = 0;
    for (const auto& p : pts) {
      sz += p.z;
      sx += p.x;
      szz += p.z * p.z;
      szx += p.z * p.x;
    }
    const double n = static_cast<double>(pts.size());
    const double b = (n * szx - sz * sx) / (n * szz - sz * sz);
    const double a = (sx - b * sz) / n;
    double ss = 0;
    for (const auto& p : pts) ss += (p.x - a - b * p.z) * (p.x - a - b * p.z);
    CHECK(std::sqrt(ss / n) <= 1.0);

    // Every truth SP position lies within one voxel of a labelled voxel.
    const VoxelGrid& g = rec.vnn.grid;
    for (std::size_t i = 0; i < scan.size(); ++i) {
      if (!scan.on_vertebra[i]) continue;
      const Point2 sp = scan.labels[i][Landmark::SP];
      const Vec3 w = scan.poses[i].apply({sp.x * scan.spacing.x, sp.y * scan.spacing.y, 0.0});
      const auto idx = g.spec.locate(w);
      REQUIRE(idx.has_value());
      bool found = false;
      for (int dz = -1; dz <= 1 && !found; ++dz)
        for (int dy = -1; dy <= 1 && !found; ++dy)
          for (int dx = -1; dx <= 1 && !found; ++dx) {
            const int x = (*idx)[0] + dx, y = (*idx)[1] + dy, z = (*idx)[2] + dz;
            if (x < 0 || y < 0 || z < 0 || x >= g.spec.dims[0] || y >= g.spec.dims[1] || z >= g.spec.dims[2]) continue;
            found = g.sp_label[g.spec.index(x, y, z)] != 0;
          }
      CHECK(found);
    }
  }

  TEST_CASE("reconstruction is deterministic") {
    const TrackedScan scan = short_scan(short_phantom(), 60);
    const InferResult inf = apply_landmarks(scan.frames, scan.labels);
    const Reconstruction a = reconstruct(inf.processed, scan.poses, scan.spacing, ReconstructionConfig{});
    const Reconstruction b = reconstruct(inf.processed, scan.poses, scan.spacing, ReconstructionConfig{});
    CHECK(a.filled == b.filled);
    CHECK(a.coronal.image == b.coronal.image);
    CHECK(a.coronal.sp_points == b.coronal.sp_points);
  }
}
