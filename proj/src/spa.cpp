#include "usspine/spa.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace usspine {

SpineCurve fit_curve(std::span<const SpPoint> points, std::optional<double> z_range) {
  if (points.size() < static_cast<std::size_t>(kMinCurvePoints)) {
    throw std::invalid_argument("fit_curve: need at least " + std::to_string(kMinCurvePoints) + " points, got " +
                                std::to_string(points.size()));
  }
  double z_min = points.front().z, z_max = points.front().z;
  for (const auto& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.z)) throw std::invalid_argument("fit_curve: non-finite point");
    z_min = std::min(z_min, p.z);
    z_max = std::max(z_max, p.z);
  }
  if (!(z_max > z_min)) throw std::invalid_argument("fit_curve: rank deficient (all points share one z)");
  if (z_range && z_max - z_min < 0.5 * *z_range) {
    throw std::invalid_argument("fit_curve: points span less than half of the z range");
  }

  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd a(n, kCurveDegree + 1);
  Eigen::VectorXd b(n);
  SpineCurve curve;
  curve.z_min = z_min;
  curve.z_max = z_max;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = curve.to_u(points[static_cast<std::size_t>(i)].z);
    double p = 1.0;
    for (int k = 0; k <= kCurveDegree; ++k, p *= u) a(i, k) = p;
    b(i) = points[static_cast<std::size_t>(i)].x;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-10);
  if (qr.rank() < kCurveDegree + 1) throw std::invalid_argument("fit_curve: rank deficient point set");
  const Eigen::VectorXd c = qr.solve(b);
  for (int k = 0; k <= kCurveDegree; ++k) curve.coeffs[static_cast<std::size_t>(k)] = c(k);

  const Eigen::VectorXd r = a * c - b;
  curve.fit_rms = std::sqrt(r.squaredNorm() / static_cast<double>(n));
  return curve;
}

namespace {

double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

}  // namespace

FilteredPoints filter_points(std::span<const SpPoint> points, std::span<const FramePose> poses,
                             const FilterConfig& config) {
  FilteredPoints out;
  std::vector<bool> dwell(poses.size(), false);
  for (std::size_t i = 1; i < poses.size(); ++i) {
    dwell[i] = distance(poses[i].translation, poses[i - 1].translation) < config.dwell_mm;
  }
  std::vector<SpPoint> kept;
  for (const auto& p : points) {
    if (p.source_frame < 0 || static_cast<std::size_t>(p.source_frame) >= poses.size()) {
      throw std::out_of_range("filter_points: source frame " + std::to_string(p.source_frame) + " has no pose");
    }
    if (dwell[static_cast<std::size_t>(p.source_frame)]) {
      ++out.stacked_rejected;
    } else {
      kept.push_back(p);
    }
  }

  SpineCurve curve = fit_curve(kept);
  out.fits = 1;
  std::vector<double> residual(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) residual[i] = std::abs(kept[i].x - curve.x_at(kept[i].z));
  const double threshold = std::max(config.outlier_factor * median(residual), config.outlier_floor_px);

  std::vector<SpPoint> inliers;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (residual[i] > threshold) {
      ++out.outlier_rejected;
    } else {
      inliers.push_back(kept[i]);
    }
  }
  if (out.outlier_rejected > 0) {
    curve = fit_curve(inliers);
    out.fits = 2;
  }
  out.points = std::move(inliers);
  out.curve = curve;
  return out;
}

SpaReport measure_spa(const SpineCurve& curve, const CoronalScale& scale, double merge_below_deg) {
  if (!(curve.z_max > curve.z_min)) throw std::invalid_argument("measure_spa: empty curve domain");
  const Polynomial f = curve.poly();
  const Polynomial df = f.derivative();
  const double s = 2.0 / (curve.z_max - curve.z_min) * (scale.x_mm / scale.z_mm);

  std::vector<double> bounds{-1.0};
  for (double u : df.derivative().sign_changes_in(-1.0, 1.0)) bounds.push_back(u);
  bounds.push_back(1.0);
  auto angle = [&](double u) { return std::atan(s * df(u)) * 180.0 / std::numbers::pi; };
  SpaReport report;
  report.segments = tangent_angle_segments(std::move(bounds), angle, merge_below_deg);
  return report;
}

std::string format_angles(const std::vector<AngleSegment>& segments) {
  if (segments.empty()) return "none";
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(1);
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (i > 0) os << '/';
    os << segments[i].degrees;
  }
  os << "°";
  return os.str();
}

}  // namespace usspine
