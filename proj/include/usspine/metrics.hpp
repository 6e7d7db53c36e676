#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "usspine/landmarks.hpp"

namespace usspine {

struct PckResult {
  std::array<double, kNumLandmarks> per_landmark{};  // indexed by Landmark
  double total = 0.0;         // mean of the per-landmark fractions
  double frames_all_hit = 0.0;  // fraction of frames with all five points within radius
  double radius = 15.0;
  int n_frames = 0;           // frames with valid truth
};

/// Percentage of correct keypoints. Frames whose truth is invalid are
/// skipped; an invalid prediction misses all five points. A point at exactly
/// `radius` counts as a hit.
PckResult pck(std::span<const LandmarkSet> pred, std::span<const LandmarkSet> truth, double radius = 15.0);

struct AgreementStats {
  double mad = 0.0;      // mean |a - b|
  double sd = 0.0;       // sample standard deviation of |a - b|
  double max_diff = 0.0;
  int over_threshold = 0;
  double threshold = 5.0;
};

AgreementStats mad_sd(std::span<const double> a, std::span<const double> b, double threshold = 5.0);

/// Sample correlation, accumulated in a single stable pass.
double pearson(std::span<const double> a, std::span<const double> b);

/// Two-way random effects, absolute agreement, single rater. ratings[i][j]
/// is target i scored by rater j.
double icc_2_1(const std::vector<std::vector<double>>& ratings);

std::string format_pck_table(const PckResult& result);
std::string format_agreement_table(const AgreementStats& stats, double r);

}  // namespace usspine
