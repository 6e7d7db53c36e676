#include "usspine/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "usspine/rng.hpp"

namespace usspine {

namespace {

constexpr double kBackground = 10.0;
constexpr double kBandAmplitude = 70.0;
constexpr double kBandSigma = 2.5;
constexpr double kSpAmplitude = 225.0;
constexpr double kLaminaAmplitude = 190.0;
constexpr double kLaminaSigma = 1.8;
constexpr double kRibSigma = 2.2;
constexpr double kFrameMargin = 4.0;

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

// Shape of the vertebra under a frame, in frame pixels.
struct FrameAnatomy {
  double sp_x = 0.0;
  double sp_y = 0.0;
  double inner_offset = 0.0;  // SP to inner lamina endpoint, lateral
  double arc = 0.0;
  double slope_deg = 0.0;
  double lamina_y = 0.0;      // depth of the inner endpoints
};

struct VertebraJitter {
  double arc = 1.0;
  double spacing = 1.0;
  double sp_depth = 1.0;
  double lamina_depth_mm = 0.0;
  double slope_deg = 0.0;
};

VertebraJitter vertebra_jitter(const SpinePhantom& ph, int k) {
  Rng rng(stream_seed(ph.seed, static_cast<std::uint64_t>(k)));
  const double j = ph.anatomy_jitter;
  VertebraJitter v;
  v.arc = 1.0 + j * rng.uniform(-1.0, 1.0);
  v.spacing = 1.0 + j * rng.uniform(-1.0, 1.0);
  v.sp_depth = 1.0 + 0.5 * j * rng.uniform(-1.0, 1.0);
  v.lamina_depth_mm = 10.0 * j * rng.uniform(-1.0, 1.0);
  v.slope_deg = 40.0 * j * rng.uniform(-1.0, 1.0);
  return v;
}

int vertebra_index(const SpinePhantom& ph, double z) {
  return static_cast<int>(std::floor(z / ph.period_mm()));
}

FrameAnatomy anatomy_at(const SpinePhantom& ph, double z) {
  const int k = std::clamp(vertebra_index(ph, z), 0, ph.vertebra_count - 1);
  const double s = std::clamp((z - k * ph.period_mm()) / ph.vertebra_length_mm, 0.0, 1.0);
  const VertebraJitter v = vertebra_jitter(ph, k);
  FrameAnatomy a;
  a.sp_x = ph.lateral_offset_mm(z) / ph.spacing.x + 0.5 * kFrameWidth;
  a.sp_y = ph.sp_depth_mm * v.sp_depth / ph.spacing.y;
  a.inner_offset = ph.lamina_spacing_mm * v.spacing / ph.spacing.x;
  a.arc = ph.lamina_arc_px * v.arc * (0.9 + 0.2 * std::sin(std::numbers::pi * s));
  a.slope_deg = ph.lamina_slope_deg + v.slope_deg;
  a.lamina_y = (ph.lamina_depth_mm + v.lamina_depth_mm) / ph.spacing.y + 4.0 * (s - 0.5);
  return a;
}

LandmarkSet landmarks_from(const FrameAnatomy& a) {
  const double dx = a.arc * std::cos(deg2rad(a.slope_deg));
  const double dy = a.arc * std::sin(deg2rad(a.slope_deg));
  LandmarkSet lm;
  lm[Landmark::SP] = {a.sp_x, a.sp_y};
  lm[Landmark::LA1] = {a.sp_x - a.inner_offset, a.lamina_y};
  lm[Landmark::LA0] = {a.sp_x - a.inner_offset - dx, a.lamina_y + dy};
  lm[Landmark::LA2] = {a.sp_x + a.inner_offset, a.lamina_y};
  lm[Landmark::LA3] = {a.sp_x + a.inner_offset + dx, a.lamina_y + dy};
  lm.valid = true;
  return lm;
}

class Canvas {
 public:
  Canvas(int w, int h) : w_(w), h_(h), v_(static_cast<std::size_t>(w) * h, kBackground) {}

  double& at(int x, int y) { return v_[static_cast<std::size_t>(y) * w_ + x]; }

  void blob(Point2 c, double amp, double sigma) {
    const double r = 4.0 * sigma;
    for_box(c.x - r, c.y - r, c.x + r, c.y + r, [&](int x, int y) {
      const double dx = x - c.x, dy = y - c.y;
      return amp * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
    });
  }

  // Bright segment a -> b whose amplitude falls linearly to amp * (1 - fade) at b.
  void segment(Point2 a, Point2 b, double amp, double sigma, double fade) {
    const double r = 4.0 * sigma;
    const double ex = b.x - a.x, ey = b.y - a.y;
    const double len2 = ex * ex + ey * ey;
    for_box(std::min(a.x, b.x) - r, std::min(a.y, b.y) - r, std::max(a.x, b.x) + r, std::max(a.y, b.y) + r,
            [&](int x, int y) {
              double t = len2 > 0.0 ? ((x - a.x) * ex + (y - a.y) * ey) / len2 : 0.0;
              t = std::clamp(t, 0.0, 1.0);
              const double dx = x - (a.x + t * ex), dy = y - (a.y + t * ey);
              return amp * (1.0 - fade * t) * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            });
  }

  void band(double y0, double amp, double wobble, double wavelength, double phase) {
    for (int x = 0; x < w_; ++x) {
      const double yc = y0 + wobble * std::sin(2.0 * std::numbers::pi * x / wavelength + phase);
      const int lo = std::max(0, static_cast<int>(std::floor(yc - 4.0 * kBandSigma)));
      const int hi = std::min(h_ - 1, static_cast<int>(std::ceil(yc + 4.0 * kBandSigma)));
      for (int y = lo; y <= hi; ++y) {
        const double d = y - yc;
        at(x, y) += amp * std::exp(-d * d / (2.0 * kBandSigma * kBandSigma));
      }
    }
  }

  GrayImage finish(Rng& rng, double speckle) {
    GrayImage img(w_, h_);
    for (std::size_t i = 0; i < v_.size(); ++i) {
      double v = v_[i];
      if (speckle > 0.0) v *= rng.uniform(1.0 - speckle, 1.0 + speckle);
      img.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
    }
    return img;
  }

 private:
  template <class F>
  void for_box(double x0, double y0, double x1, double y1, F&& f) {
    const int xa = std::max(0, static_cast<int>(std::floor(x0)));
    const int ya = std::max(0, static_cast<int>(std::floor(y0)));
    const int xb = std::min(w_ - 1, static_cast<int>(std::ceil(x1)));
    const int yb = std::min(h_ - 1, static_cast<int>(std::ceil(y1)));
    for (int y = ya; y <= yb; ++y) {
      for (int x = xa; x <= xb; ++x) at(x, y) += f(x, y);
    }
  }

  int w_, h_;
  std::vector<double> v_;
};

Polynomial curve_poly(const std::array<double, 6>& c) { return Polynomial(std::vector<double>(c.begin(), c.end())); }

double max_abs_on(const Polynomial& p, double lo, double hi) {
  double m = std::max(std::abs(p(lo)), std::abs(p(hi)));
  for (double r : p.derivative().roots_in(lo, hi)) m = std::max(m, std::abs(p(r)));
  return m;
}

std::array<double, 6> random_coeffs(Rng& rng, int degree) {
  std::array<double, 6> c{};
  for (int k = 0; k <= degree; ++k) c[static_cast<std::size_t>(k)] = rng.uniform(-1.0, 1.0);
  double& top = c[static_cast<std::size_t>(degree)];
  if (std::abs(top) < 0.3) top = top < 0.0 ? -0.3 : 0.3;
  return c;
}

void scale_to(std::array<double, 6>& c, double max_abs) {
  const double m = max_abs_on(curve_poly(c), -1.0, 1.0);
  if (m == 0.0) return;
  for (auto& v : c) v *= max_abs / m;
}

}  // namespace

Polynomial SpinePhantom::lateral_offset_t() const { return curve_poly(lateral_coeffs); }

double SpinePhantom::lateral_offset_mm(double z) const {
  return lateral_offset_t()(2.0 * z / extent_mm() - 1.0);
}

double SpinePhantom::lateral_slope(double z) const {
  return lateral_offset_t().derivative()(2.0 * z / extent_mm() - 1.0) * 2.0 / extent_mm();
}

bool SpinePhantom::on_vertebra(double z) const {
  if (z < 0.0 || z > sp_domain_end_mm()) return false;
  const int k = vertebra_index(*this, z);
  return z - k * period_mm() <= vertebra_length_mm;
}

void SpinePhantom::validate() const {
  for (double c : lateral_coeffs) {
    if (!std::isfinite(c)) throw std::invalid_argument("phantom: non-finite lateral coefficient");
  }
  if (vertebra_count < 1) throw std::invalid_argument("phantom: vertebra_count must be >= 1");
  if (!(vertebra_length_mm > 0.0) || !(gap_length_mm > 0.0)) {
    throw std::invalid_argument("phantom: vertebra and gap lengths must be positive");
  }
  if (!(spacing.x > 0.0) || !(spacing.y > 0.0)) throw std::invalid_argument("phantom: pixel spacing must be positive");
  if (!(speckle >= 0.0 && speckle < 1.0)) throw std::invalid_argument("phantom: speckle must lie in [0, 1)");
  if (!(anatomy_jitter >= 0.0 && anatomy_jitter < 0.5)) throw std::invalid_argument("phantom: anatomy_jitter must lie in [0, 0.5)");
  if (!(rib_probability >= 0.0 && rib_probability <= 1.0)) throw std::invalid_argument("phantom: rib_probability must lie in [0, 1]");

  const double arc_lo = lamina_arc_px * (1.0 - anatomy_jitter) * 0.9;
  const double arc_hi = lamina_arc_px * (1.0 + anatomy_jitter) * 1.1;
  VerifyConfig band;
  if (arc_lo < band.lamina_min_px || arc_hi > band.lamina_max_px) {
    throw std::invalid_argument("phantom: lamina arc length leaves the [10, 80] px band");
  }
  const double slope_hi = lamina_slope_deg + 40.0 * anatomy_jitter;
  const double slope_lo = lamina_slope_deg - 40.0 * anatomy_jitter;
  if (slope_lo < 0.0 || slope_hi >= 80.0) throw std::invalid_argument("phantom: lamina slope out of range");

  const double lateral_reach = lamina_spacing_mm * (1.0 + anatomy_jitter) / spacing.x + arc_hi;
  const double g_max = max_abs_on(lateral_offset_t(), -1.0, 1.0) / spacing.x;
  if (g_max + lateral_reach > 0.5 * kFrameWidth - kFrameMargin) {
    throw std::invalid_argument("phantom: lateral offset moves laminae out of the frame");
  }
  const double sp_lo = sp_depth_mm * (1.0 - 0.5 * anatomy_jitter) / spacing.y;
  const double lam_hi = (lamina_depth_mm + 10.0 * anatomy_jitter) / spacing.y + 2.0 + arc_hi * std::sin(deg2rad(slope_hi));
  const double lam_lo = (lamina_depth_mm - 10.0 * anatomy_jitter) / spacing.y - 2.0;
  if (sp_lo < kFrameMargin || lam_hi > kFrameHeight - kFrameMargin) {
    throw std::invalid_argument("phantom: depth layout leaves the frame");
  }
  if (lam_lo <= sp_depth_mm * (1.0 + 0.5 * anatomy_jitter) / spacing.y) {
    throw std::invalid_argument("phantom: laminae must lie deeper than the SP");
  }
}

LandmarkSet phantom_landmarks(const SpinePhantom& phantom, double z) {
  if (!phantom.on_vertebra(z)) return LandmarkSet{};
  return landmarks_from(anatomy_at(phantom, z));
}

LabeledFrame render_frame(const SpinePhantom& phantom, double z, std::uint64_t seed) {
  if (!(z >= 0.0 && z <= phantom.extent_mm())) throw std::out_of_range("render_frame: z outside the scan extent");
  Rng rng(seed);
  Canvas canvas(kFrameWidth, kFrameHeight);

  for (double depth : phantom.tissue_band_depths_mm) {
    const double amp = kBandAmplitude * rng.uniform(0.8, 1.2);
    const double wobble = rng.uniform(0.5, 3.0);
    const double wavelength = rng.uniform(200.0, 600.0);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    canvas.band(depth / phantom.spacing.y, amp, wobble, wavelength, phase);
  }

  LabeledFrame out;
  const FrameAnatomy a = anatomy_at(phantom, z);
  out.on_vertebra = phantom.on_vertebra(z);
  if (out.on_vertebra) {
    out.landmarks = landmarks_from(a);
    const auto& lm = out.landmarks;
    canvas.blob(lm[Landmark::SP], kSpAmplitude, phantom.sp_sigma_px);
    canvas.segment(lm[Landmark::LA1], lm[Landmark::LA0], kLaminaAmplitude, kLaminaSigma, 0.25);
    canvas.segment(lm[Landmark::LA2], lm[Landmark::LA3], kLaminaAmplitude, kLaminaSigma, 0.25);
  }

  if (rng.bernoulli(phantom.rib_probability)) {
    const int sides = rng.bernoulli(0.5) ? 2 : 1;
    const double first = rng.bernoulli(0.5) ? -1.0 : 1.0;
    for (int i = 0; i < sides; ++i) {
      const double side = i == 0 ? first : -first;
      const double x0 = a.sp_x + side * rng.uniform(120.0, 200.0);
      const double y0 = a.lamina_y + rng.uniform(-20.0, 60.0);
      const double len = rng.uniform(30.0, 60.0);
      const double tilt = deg2rad(rng.uniform(-15.0, 15.0));
      const double amp = rng.uniform(140.0, 200.0);
      canvas.segment({x0, y0}, {x0 + side * len * std::cos(tilt), y0 + len * std::sin(tilt)}, amp, kRibSigma, 0.0);
    }
  }

  out.frame = canvas.finish(rng, phantom.speckle);
  return out;
}

std::vector<double> scan_positions(const SpinePhantom& phantom, const ScanOptions& options) {
  const int n = options.frame_count;
  const int s = options.stacked_head_tail;
  if (n < 10) throw std::invalid_argument("render_scan: frame_count must be >= 10");
  if (s < 0 || 2 * s >= n - 1) throw std::invalid_argument("render_scan: stacked_head_tail too large for frame_count");
  std::vector<double> z(static_cast<std::size_t>(n));
  const double extent = phantom.extent_mm();
  for (int i = 0; i < n; ++i) z[static_cast<std::size_t>(i)] = extent * i / (n - 1);
  for (int i = 0; i < s; ++i) {
    z[static_cast<std::size_t>(i)] = z[static_cast<std::size_t>(s)];
    z[static_cast<std::size_t>(n - 1 - i)] = z[static_cast<std::size_t>(n - 1 - s)];
  }
  return z;
}

TrackedScan render_scan(const SpinePhantom& phantom, const ScanOptions& options, std::uint64_t seed) {
  phantom.validate();
  const std::vector<double> z = scan_positions(phantom, options);
  const int n = options.frame_count;
  const int s = options.stacked_head_tail;

  std::vector<double> tilt(static_cast<std::size_t>(n), 0.0);
  if (options.tilt_deg != 0.0) {
    Rng rng(stream_seed(seed, 0xF00DULL << 32));
    for (auto& t : tilt) t = options.tilt_deg * rng.uniform(-1.0, 1.0);
    for (int i = 0; i < s; ++i) {
      tilt[static_cast<std::size_t>(i)] = tilt[static_cast<std::size_t>(s)];
      tilt[static_cast<std::size_t>(n - 1 - i)] = tilt[static_cast<std::size_t>(n - 1 - s)];
    }
  }

  TrackedScan scan;
  scan.spacing = phantom.spacing;
  scan.frames.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const FramePose pose = FramePose::tilted({0.0, 0.0, z[ui]}, tilt[ui]);
    // A tilted plane meets the spine at the SP depth further along z.
    const double z_sp = std::clamp(z[ui] + phantom.sp_depth_mm * std::sin(deg2rad(tilt[ui])), 0.0, phantom.extent_mm());
    LabeledFrame f = render_frame(phantom, z_sp, stream_seed(seed, ui));
    scan.frames.push_back(std::move(f.frame));
    scan.poses.push_back(pose);
    scan.labels.push_back(f.landmarks);
    scan.on_vertebra.push_back(f.on_vertebra);
  }
  scan.truth_spa = analytic_spa(phantom);
  return scan;
}

std::vector<AngleSegment> analytic_spa(const SpinePhantom& phantom, double merge_below_deg) {
  const double extent = phantom.extent_mm();
  const Polynomial g = phantom.lateral_offset_t();
  const Polynomial dg = g.derivative();
  const double t0 = 2.0 * phantom.sp_domain_start_mm() / extent - 1.0;
  const double t1 = 2.0 * phantom.sp_domain_end_mm() / extent - 1.0;
  std::vector<double> bounds{phantom.sp_domain_start_mm()};
  for (double t : dg.derivative().sign_changes_in(t0, t1)) bounds.push_back((t + 1.0) * 0.5 * extent);
  bounds.push_back(phantom.sp_domain_end_mm());
  auto angle = [&](double z) { return rad2deg(std::atan(dg(2.0 * z / extent - 1.0) * 2.0 / extent)); };
  return tangent_angle_segments(std::move(bounds), angle, merge_below_deg);
}

std::array<double, 6> random_spine_curve(const SpinePhantom& base, std::uint64_t seed, int degree,
                                         const CurveLimits& limits) {
  if (degree < 1 || degree > 5) throw std::invalid_argument("random_spine_curve: degree must lie in [1, 5]");
  Rng rng(seed);
  SpinePhantom ph = base;
  const double extent = ph.extent_mm();
  const double t0 = -1.0;
  const double t1 = 2.0 * ph.sp_domain_end_mm() / extent - 1.0;
  const double span = ph.sp_domain_end_mm() - ph.sp_domain_start_mm();
  for (int attempt = 0; attempt < 100000; ++attempt) {
    auto c = random_coeffs(rng, degree);
    scale_to(c, limits.max_offset_mm * rng.uniform(0.3, 1.0));
    if (degree == 1) return c;
    ph.lateral_coeffs = c;

    const auto inflections = curve_poly(c).derivative().derivative().sign_changes_in(t0, t1);
    std::vector<double> marks{ph.sp_domain_start_mm()};
    for (double t : inflections) marks.push_back((t + 1.0) * 0.5 * extent);
    marks.push_back(ph.sp_domain_end_mm());
    bool ok = true;
    for (std::size_t i = 1; i < marks.size(); ++i) {
      if (marks[i] - marks[i - 1] < limits.min_separation * span) ok = false;
    }
    if (!ok) continue;
    for (const auto& seg : analytic_spa(ph, 0.0)) {
      if (seg.degrees < limits.min_segment_deg || seg.degrees > limits.max_segment_deg) ok = false;
    }
    if (ok) return c;
  }
  throw std::runtime_error("random_spine_curve: no admissible curve found");
}

SpinePhantom random_phantom(std::uint64_t seed) {
  Rng rng(seed);
  SpinePhantom ph;
  const int degree = 2 + static_cast<int>(rng.below(4));
  ph.lateral_coeffs = random_coeffs(rng, degree);
  scale_to(ph.lateral_coeffs, rng.uniform(3.0, 25.0));
  ph.sp_depth_mm = rng.uniform(11.0, 17.0);
  ph.lamina_depth_mm = ph.sp_depth_mm + rng.uniform(8.0, 12.0);
  ph.lamina_spacing_mm = rng.uniform(3.5, 5.5);
  ph.lamina_arc_px = rng.uniform(30.0, 50.0);
  ph.lamina_slope_deg = rng.uniform(6.0, 22.0);
  ph.sp_sigma_px = rng.uniform(2.5, 3.5);
  ph.speckle = rng.uniform(0.15, 0.45);
  ph.rib_probability = 0.3;
  const int bands = 2 + static_cast<int>(rng.below(3));
  ph.tissue_band_depths_mm.clear();
  for (int i = 0; i < bands; ++i) ph.tissue_band_depths_mm.push_back(rng.uniform(2.0, ph.sp_depth_mm - 3.0));
  std::sort(ph.tissue_band_depths_mm.begin(), ph.tissue_band_depths_mm.end());
  ph.seed = rng.next();
  ph.validate();
  return ph;
}

SpinePhantom default_phantom() {
  // Skewed single bend g(t) = -A t^2 + (A / 6) t^3, whose inflection lies
  // outside the scan; A is chosen so the bend measures 20 deg.
  SpinePhantom ph;
  auto set = [&](double amp) { ph.lateral_coeffs = {0.0, 0.0, -amp, amp / 6.0, 0.0, 0.0}; };
  double lo = 0.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    set(mid);
    (analytic_spa(ph).front().degrees < 20.0 ? lo : hi) = mid;
  }
  set(0.5 * (lo + hi));
  ph.validate();
  return ph;
}

std::vector<LabeledFrame> render_training_frames(int count, std::uint64_t seed, double rib_probability) {
  if (count < 0) throw std::invalid_argument("render_training_frames: negative count");
  std::vector<LabeledFrame> frames;
  frames.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const auto ui = static_cast<std::uint64_t>(i);
    SpinePhantom ph = random_phantom(stream_seed(seed, 2 * ui));
    ph.rib_probability = rib_probability;
    Rng rng(stream_seed(seed, 2 * ui + 1));
    const int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(ph.vertebra_count)));
    const double z = k * ph.period_mm() + rng.uniform(0.0, ph.vertebra_length_mm);
    frames.push_back(render_frame(ph, z, rng.next()));
  }
  return frames;
}

}  // namespace usspine
