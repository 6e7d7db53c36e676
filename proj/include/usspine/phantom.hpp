#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "usspine/geometry.hpp"
#include "usspine/image.hpp"
#include "usspine/landmarks.hpp"
#include "usspine/polynomial.hpp"

namespace usspine {

/// Synthetic spine with analytically known landmark geometry.
///
/// The lateral SP offset g(z) (mm) is a polynomial of degree <= 5 in the
/// normalized coordinate t = 2 z / extent - 1 over the scan extent
/// [0, extent]. Vertebra k occupies z in [k P, k P + vertebra_length] with
/// period P = vertebra_length + gap_length; the rest is inter-vertebral gap.
struct SpinePhantom {
  std::array<double, 6> lateral_coeffs{};  // g(t), mm
  int vertebra_count = 17;
  double vertebra_length_mm = 18.0;
  double gap_length_mm = 6.0;

  double lamina_spacing_mm = 4.5;  // SP to inner lamina endpoint, lateral
  double lamina_arc_px = 40.0;
  double lamina_slope_deg = 14.0;  // laminae descend laterally

  double sp_depth_mm = 14.0;
  double lamina_depth_mm = 24.0;
  std::vector<double> tissue_band_depths_mm{3.0, 6.5, 10.0};

  double sp_sigma_px = 3.0;
  double speckle = 0.3;            // multiplicative, uniform in [1-a, 1+a]
  double rib_probability = 0.0;    // per thoracic frame
  double anatomy_jitter = 0.1;     // per-vertebra relative variation
  std::uint64_t seed = 1;

  PixelSpacing spacing{};

  double period_mm() const { return vertebra_length_mm + gap_length_mm; }
  double extent_mm() const { return vertebra_count * period_mm(); }
  /// z-range that carries SP landmarks: first vertebra start to last vertebra end.
  double sp_domain_start_mm() const { return 0.0; }
  double sp_domain_end_mm() const { return (vertebra_count - 1) * period_mm() + vertebra_length_mm; }

  Polynomial lateral_offset_t() const;  // g as a function of t
  double lateral_offset_mm(double z) const;
  double lateral_slope(double z) const;  // dg/dz, mm per mm
  bool on_vertebra(double z) const;

  /// Throws when g exceeds degree 5, the anatomy leaves the frame, or the
  /// lamina arcs fall outside the verifier's distance band.
  void validate() const;
};

struct LabeledFrame {
  GrayImage frame;
  LandmarkSet landmarks;  // valid == on_vertebra
  bool on_vertebra = false;
};

/// Analytic landmark positions at z (frame pixels), ignoring noise.
LandmarkSet phantom_landmarks(const SpinePhantom& phantom, double z);

LabeledFrame render_frame(const SpinePhantom& phantom, double z, std::uint64_t seed);

struct ScanOptions {
  int frame_count = 1200;
  int stacked_head_tail = 0;
  double tilt_deg = 0.0;  // max |random tilt| about the lateral axis
};

struct TrackedScan {
  std::vector<GrayImage> frames;
  std::vector<FramePose> poses;
  PixelSpacing spacing{};
  std::vector<LandmarkSet> labels;   // empty when unlabeled
  std::vector<bool> on_vertebra;     // parallel to labels
  std::vector<AngleSegment> truth_spa;  // start/end in mm

  std::size_t size() const { return frames.size(); }
  bool has_labels() const { return !labels.empty(); }
};

TrackedScan render_scan(const SpinePhantom& phantom, const ScanOptions& options, std::uint64_t seed);

/// z positions (mm) of each frame of a scan produced by render_scan.
std::vector<double> scan_positions(const SpinePhantom& phantom, const ScanOptions& options);

/// Tangent-angle segments of g between consecutive inflection points over
/// the SP domain, boundaries in mm.
std::vector<AngleSegment> analytic_spa(const SpinePhantom& phantom, double merge_below_deg = 1.0);

struct CurveLimits {
  double max_offset_mm = 22.0;
  double min_segment_deg = 5.0;
  double max_segment_deg = 35.0;
  double min_separation = 0.1;  // fraction of the SP domain
};

/// Random lateral curve of exactly `degree` for `base`'s geometry whose
/// inflection points sit at least min_separation from the domain ends and
/// from each other and whose segment angles all lie in the given band.
std::array<double, 6> random_spine_curve(const SpinePhantom& base, std::uint64_t seed, int degree,
                                         const CurveLimits& limits = {});

/// Phantom whose anatomy parameters are drawn at random for training variety.
SpinePhantom random_phantom(std::uint64_t seed);

/// Phantom used by the default scan: a single lateral bend of about 20 deg.
SpinePhantom default_phantom();

/// Independent on-vertebra frames drawn from random phantoms.
std::vector<LabeledFrame> render_training_frames(int count, std::uint64_t seed, double rib_probability = 0.3);

}  // namespace usspine
