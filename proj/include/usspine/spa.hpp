#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "usspine/geometry.hpp"
#include "usspine/polynomial.hpp"

namespace usspine {

inline constexpr int kCurveDegree = 5;
inline constexpr int kMinCurvePoints = 2 * (kCurveDegree + 1);

/// x = f(u) on the coronal image, u = 2 (z - z_min) / (z_max - z_min) - 1.
struct SpineCurve {
  std::array<double, kCurveDegree + 1> coeffs{};
  double z_min = 0.0;  // coronal pixels
  double z_max = 1.0;
  double fit_rms = 0.0;

  Polynomial poly() const { return Polynomial(std::vector<double>(coeffs.begin(), coeffs.end())); }
  double to_u(double z) const { return 2.0 * (z - z_min) / (z_max - z_min) - 1.0; }
  double from_u(double u) const { return z_min + 0.5 * (u + 1.0) * (z_max - z_min); }
  double x_at(double z) const { return poly()(to_u(z)); }
};

/// Physical size of one coronal pixel.
struct CoronalScale {
  double x_mm = 0.5;
  double z_mm = 0.5;
};

/// Least-squares degree-5 fit via column-pivoted QR of the Vandermonde
/// matrix. Throws with fewer than 12 points, when the points cover less than
/// half of `z_range` (if given), or when the system is rank deficient.
SpineCurve fit_curve(std::span<const SpPoint> points, std::optional<double> z_range = std::nullopt);

struct FilterConfig {
  double dwell_mm = 0.01;         // minimum probe travel from the previous frame
  double outlier_factor = 3.0;    // times the median absolute residual
  double outlier_floor_px = 1.0;  // one coronal pixel; residuals below it are never outliers
};

struct FilteredPoints {
  std::vector<SpPoint> points;
  int stacked_rejected = 0;
  int outlier_rejected = 0;
  int fits = 0;
  SpineCurve curve;
};

/// Drops points from dwell frames, then fits, rejects residual outliers and
/// refits at most once.
FilteredPoints filter_points(std::span<const SpPoint> points, std::span<const FramePose> poses,
                             const FilterConfig& config = {});

struct SpaReport {
  std::vector<AngleSegment> segments;  // start/end in u
  int points_used = 0;
  int stacked_rejected = 0;
  int outlier_rejected = 0;
};

/// Tangent-angle differences between consecutive inflection points of the
/// curve (domain ends included), in physical units.
SpaReport measure_spa(const SpineCurve& curve, const CoronalScale& scale = {}, double merge_below_deg = 1.0);

/// "14.0/23.0°" style summary, angles rounded to 0.1 degree; "none" when empty.
std::string format_angles(const std::vector<AngleSegment>& segments);

}  // namespace usspine
