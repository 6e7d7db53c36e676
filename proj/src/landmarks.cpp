#include "usspine/landmarks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace usspine {

std::string_view landmark_name(Landmark lm) {
  switch (lm) {
    case Landmark::LA0: return "LA0";
    case Landmark::LA1: return "LA1";
    case Landmark::SP: return "SP";
    case Landmark::LA2: return "LA2";
    case Landmark::LA3: return "LA3";
  }
  return "?";
}

std::string_view rejection_name(RejectionReason reason) {
  switch (reason) {
    case RejectionReason::order_violation: return "order_violation";
    case RejectionReason::lamina_distance: return "lamina_distance";
  }
  return "?";
}

std::optional<RejectionReason> parse_rejection(std::string_view text) {
  if (text == "order_violation") return RejectionReason::order_violation;
  if (text == "lamina_distance") return RejectionReason::lamina_distance;
  return std::nullopt;
}

Point2 decode_peak(std::span<const double> map, int side) {
  if (map.size() != static_cast<std::size_t>(side) * side) {
    throw std::invalid_argument("decode_peak: map has " + std::to_string(map.size()) + " values, expected " +
                                std::to_string(side * side));
  }
  std::size_t first = 0;
  for (std::size_t i = 1; i < map.size(); ++i) {
    if (map[i] > map[first]) first = i;
  }
  std::size_t second = first == 0 ? 1 : 0;
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (i != first && map[i] > map[second]) second = i;
  }
  if (map[second] == map[first] && std::all_of(map.begin(), map.end(), [&](double v) { return v == map[first]; })) {
    throw std::invalid_argument("decode_peak: constant heatmap has no unique maximum");
  }
  const double x1 = static_cast<double>(first % side), y1 = static_cast<double>(first / side);
  const double x2 = static_cast<double>(second % side), y2 = static_cast<double>(second / side);
  const double dx = x2 - x1, dy = y2 - y1;
  const double norm = std::hypot(dx, dy);
  return Point2{x1 + 0.25 * dx / norm, y1 + 0.25 * dy / norm};
}

Point2 to_image_coords(Point2 p, const HeatmapScale& scale) { return Point2{scale.gamma_x * p.x, scale.gamma_y * p.y}; }

LandmarkSet verify_landmarks(LandmarkSet set, const VerifyConfig& config) {
  set.valid = true;
  set.reason.reset();
  for (std::size_t i = 1; i < set.points.size(); ++i) {
    if (set.points[i].x < set.points[i - 1].x) {
      set.valid = false;
      set.reason = RejectionReason::order_violation;
      return set;
    }
  }
  auto dist = [&](Landmark a, Landmark b) { return std::hypot(set[a].x - set[b].x, set[a].y - set[b].y); };
  for (double d : {dist(Landmark::LA0, Landmark::LA1), dist(Landmark::LA2, Landmark::LA3)}) {
    if (d < config.lamina_min_px || d > config.lamina_max_px) {
      set.valid = false;
      set.reason = RejectionReason::lamina_distance;
      return set;
    }
  }
  return set;
}

LandmarkSet decode_frame(const Tensor& stack, const HeatmapScale& scale, const VerifyConfig& config) {
  const Shape& s = stack.shape();
  const bool batched = s.rank() == 4 && s[0] == 1;
  if (!(s.rank() == 3 || batched)) {
    throw std::invalid_argument("decode_frame: expected [K,H,W] or [1,K,H,W], got " + s.str());
  }
  const int k = batched ? s[1] : s[0];
  const int h = batched ? s[2] : s[1];
  const int w = batched ? s[3] : s[2];
  if (k != kNumLandmarks || h != w) throw std::invalid_argument("decode_frame: expected 5 square maps, got " + s.str());
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  LandmarkSet set;
  for (int c = 0; c < k; ++c) {
    const Point2 p = decode_peak(stack.data().subspan(static_cast<std::size_t>(c) * plane, plane), h);
    set[kChannelLandmark[static_cast<std::size_t>(c)]] = to_image_coords(p, scale);
  }
  return verify_landmarks(set, config);
}

Tensor make_target(const LandmarkSet& landmarks, const TargetConfig& config) {
  const int side = config.side;
  Tensor out(Shape{kNumLandmarks, side, side});
  const double radius = config.truncate * config.sigma;
  const double inv2s2 = 1.0 / (2.0 * config.sigma * config.sigma);
  for (int c = 0; c < kNumLandmarks; ++c) {
    const Point2 p = landmarks[kChannelLandmark[static_cast<std::size_t>(c)]];
    const double cx = p.x / config.scale.gamma_x;
    const double cy = p.y / config.scale.gamma_y;
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
    const int x1 = std::min(side - 1, static_cast<int>(std::ceil(cx + radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
    const int y1 = std::min(side - 1, static_cast<int>(std::ceil(cy + radius)));
    double* plane = out.raw() + static_cast<std::size_t>(c) * side * side;
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        if (d2 > radius * radius) continue;
        plane[y * side + x] = std::exp(-d2 * inv2s2);
      }
    }
  }
  return out;
}

ProcessedFrame empty_processed_frame(int width, int height) {
  return ProcessedFrame{GrayImage(width, height), GrayImage(width, height)};
}

ProcessedFrame postprocess_frame(const GrayImage& frame, const LandmarkSet& landmarks, const PostprocessConfig& config) {
  if (!landmarks.valid) throw std::invalid_argument("postprocess_frame: landmark set failed verification");
  ProcessedFrame out = empty_processed_frame(frame.width, frame.height);

  double xmin = landmarks[Landmark::LA0].x, xmax = xmin;
  double ymin = landmarks[Landmark::LA0].y, ymax = ymin;
  for (Landmark lm : {Landmark::LA1, Landmark::LA2, Landmark::LA3}) {
    xmin = std::min(xmin, landmarks[lm].x);
    xmax = std::max(xmax, landmarks[lm].x);
    ymin = std::min(ymin, landmarks[lm].y);
    ymax = std::max(ymax, landmarks[lm].y);
  }
  const int x0 = std::max(0, static_cast<int>(std::floor(xmin)) - config.margin_px);
  const int x1 = std::min(frame.width - 1, static_cast<int>(std::ceil(xmax)) + config.margin_px);
  const int y0 = std::max(0, static_cast<int>(std::floor(ymin)) - config.margin_px);
  const int y1 = std::min(frame.height - 1, static_cast<int>(std::ceil(ymax)) + config.margin_px);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) out.image.at(x, y) = frame.at(x, y);
  }

  const int sx = static_cast<int>(std::lround(landmarks[Landmark::SP].x));
  const int sy = static_cast<int>(std::lround(landmarks[Landmark::SP].y));
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      if (!out.image.contains(sx + dx, sy + dy)) continue;
      out.image.at(sx + dx, sy + dy) = 255;
      out.sp_mask.at(sx + dx, sy + dy) = 1;
    }
  }
  return out;
}

}  // namespace usspine
