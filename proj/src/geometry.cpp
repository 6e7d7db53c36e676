#include "usspine/geometry.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace usspine {

FramePose FramePose::normalized() const {
  const auto& q = rotation;
  const double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  if (n == 0.0) throw std::invalid_argument("FramePose: zero quaternion");
  FramePose out = *this;
  for (auto& c : out.rotation) c /= n;
  return out;
}

bool FramePose::is_unit(double tol) const {
  const auto& q = rotation;
  const double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  return std::abs(n - 1.0) <= tol;
}

std::array<double, 9> FramePose::rotation_matrix() const {
  const double w = rotation[0], x = rotation[1], y = rotation[2], z = rotation[3];
  return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
          2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
          2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
}

Vec3 FramePose::apply(const Vec3& p) const {
  return rigid_apply(rotation_matrix(), translation, p);
}

FramePose FramePose::tilted(Vec3 translation, double angle_deg) {
  const double half = 0.5 * angle_deg * std::numbers::pi / 180.0;
  FramePose p;
  p.translation = translation;
  p.rotation = {std::cos(half), std::sin(half), 0.0, 0.0};
  return p;
}

double distance(const Vec3& a, const Vec3& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

}  // namespace usspine
