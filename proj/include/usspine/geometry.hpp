#pragma once

#include <array>

namespace usspine {

using Vec3 = std::array<double, 3>;

/// Rigid probe pose: world = R(rotation) * local + translation, with the
/// local frame point of pixel (col, row) at (col * sx, row * sy, 0) mm.
struct FramePose {
  Vec3 translation{0.0, 0.0, 0.0};
  std::array<double, 4> rotation{1.0, 0.0, 0.0, 0.0};  // unit quaternion (w, x, y, z)

  bool operator==(const FramePose&) const = default;

  /// Quaternion normalized to unit length; throws if it is zero.
  FramePose normalized() const;
  bool is_unit(double tol = 1e-9) const;

  std::array<double, 9> rotation_matrix() const;  // row-major
  Vec3 apply(const Vec3& local) const;

  /// Rotation of `angle_deg` about the lateral (x) axis plus a translation.
  static FramePose tilted(Vec3 translation, double angle_deg);
};

struct PixelSpacing {
  double x = 0.15;   // mm per column
  double y = 0.125;  // mm per row
};

/// SP location on the coronal image, in coronal pixels.
struct SpPoint {
  double x = 0.0;
  double z = 0.0;
  int source_frame = -1;

  bool operator==(const SpPoint&) const = default;
};

double distance(const Vec3& a, const Vec3& b);

/// r * p + t with r row-major.
inline Vec3 rigid_apply(const std::array<double, 9>& r, const Vec3& t, const Vec3& p) {
  return {r[0] * p[0] + r[1] * p[1] + r[2] * p[2] + t[0], r[3] * p[0] + r[4] * p[1] + r[5] * p[2] + t[1],
          r[6] * p[0] + r[7] * p[1] + r[8] * p[2] + t[2]};
}

}  // namespace usspine
