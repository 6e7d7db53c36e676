#include "usspine/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace usspine {

namespace {

void check_pairs(std::span<const double> a, std::span<const double> b, std::size_t min_n, const char* who) {
  if (a.size() != b.size()) throw std::invalid_argument(std::string(who) + ": length mismatch");
  if (a.size() < min_n) {
    throw std::invalid_argument(std::string(who) + ": need at least " + std::to_string(min_n) + " pairs");
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i])) throw std::invalid_argument(std::string(who) + ": non-finite value");
  }
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

PckResult pck(std::span<const LandmarkSet> pred, std::span<const LandmarkSet> truth, double radius) {
  if (pred.size() != truth.size()) throw std::invalid_argument("pck: prediction and truth counts differ");
  PckResult out;
  out.radius = radius;
  std::array<int, kNumLandmarks> hits{};
  int all_hit = 0;
  for (std::size_t f = 0; f < truth.size(); ++f) {
    if (!truth[f].valid) continue;
    ++out.n_frames;
    if (!pred[f].valid) continue;
    int frame_hits = 0;
    for (std::size_t k = 0; k < kNumLandmarks; ++k) {
      const double d = std::hypot(pred[f].points[k].x - truth[f].points[k].x, pred[f].points[k].y - truth[f].points[k].y);
      if (d <= radius) {
        ++hits[k];
        ++frame_hits;
      }
    }
    if (frame_hits == kNumLandmarks) ++all_hit;
  }
  if (out.n_frames == 0) return out;
  double sum = 0.0;
  for (std::size_t k = 0; k < kNumLandmarks; ++k) {
    out.per_landmark[k] = static_cast<double>(hits[k]) / out.n_frames;
    sum += out.per_landmark[k];
  }
  out.total = sum / kNumLandmarks;
  out.frames_all_hit = static_cast<double>(all_hit) / out.n_frames;
  return out;
}

AgreementStats mad_sd(std::span<const double> a, std::span<const double> b, double threshold) {
  check_pairs(a, b, 2, "mad_sd");
  AgreementStats s;
  s.threshold = threshold;
  const auto n = static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(a[i] - b[i]);
    s.mad += d;
    s.max_diff = std::max(s.max_diff, d);
    if (d > threshold) ++s.over_threshold;
  }
  s.mad /= n;
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double e = std::abs(a[i] - b[i]) - s.mad;
    ss += e * e;
  }
  s.sd = std::sqrt(ss / (n - 1.0));
  return s;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  check_pairs(a, b, 3, "pearson");
  double ma = 0.0, mb = 0.0, caa = 0.0, cbb = 0.0, cab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double n = static_cast<double>(i + 1);
    const double da = a[i] - ma, db = b[i] - mb;
    ma += da / n;
    mb += db / n;
    caa += da * (a[i] - ma);
    cbb += db * (b[i] - mb);
    cab += da * (b[i] - mb);
  }
  if (caa == 0.0 || cbb == 0.0) throw std::invalid_argument("pearson: zero variance");
  return cab / std::sqrt(caa * cbb);
}

double icc_2_1(const std::vector<std::vector<double>>& ratings) {
  const std::size_t n = ratings.size();
  if (n < 2) throw std::invalid_argument("icc_2_1: need at least 2 targets");
  const std::size_t k = ratings.front().size();
  if (k < 2) throw std::invalid_argument("icc_2_1: need at least 2 raters");
  for (const auto& row : ratings) {
    if (row.size() != k) throw std::invalid_argument("icc_2_1: incomplete rating matrix");
    for (double v : row) {
      if (!std::isfinite(v)) throw std::invalid_argument("icc_2_1: incomplete rating matrix");
    }
  }
  std::vector<double> row_mean(n, 0.0), col_mean(k, 0.0);
  double grand = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      row_mean[i] += ratings[i][j];
      col_mean[j] += ratings[i][j];
      grand += ratings[i][j];
    }
  }
  for (auto& m : row_mean) m /= static_cast<double>(k);
  for (auto& m : col_mean) m /= static_cast<double>(n);
  grand /= static_cast<double>(n * k);

  double ss_rows = 0.0, ss_cols = 0.0, ss_err = 0.0;
  for (std::size_t i = 0; i < n; ++i) ss_rows += (row_mean[i] - grand) * (row_mean[i] - grand);
  for (std::size_t j = 0; j < k; ++j) ss_cols += (col_mean[j] - grand) * (col_mean[j] - grand);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double e = ratings[i][j] - row_mean[i] - col_mean[j] + grand;
      ss_err += e * e;
    }
  }
  const double dn = static_cast<double>(n), dk = static_cast<double>(k);
  const double ms_rows = dk * ss_rows / (dn - 1.0);
  const double ms_cols = dn * ss_cols / (dk - 1.0);
  const double ms_err = ss_err / ((dn - 1.0) * (dk - 1.0));
  const double denom = ms_rows + (dk - 1.0) * ms_err + (dk / dn) * (ms_cols - ms_err);
  if (denom == 0.0) throw std::invalid_argument("icc_2_1: ratings have no variance");
  return (ms_rows - ms_err) / denom;
}

std::string format_pck_table(const PckResult& r) {
  std::string out = "PCK@" + fmt("%g", r.radius) + "px  frames=" + std::to_string(r.n_frames) + "\n";
  out += "  SP      LA0     LA1     LA2     LA3     Total   AllFive\n";
  const Landmark order[] = {Landmark::SP, Landmark::LA0, Landmark::LA1, Landmark::LA2, Landmark::LA3};
  out += " ";
  for (Landmark lm : order) out += fmt(" %6.1f ", 100.0 * r.per_landmark[static_cast<std::size_t>(lm)]);
  out += fmt(" %6.1f ", 100.0 * r.total);
  out += fmt(" %6.1f\n", 100.0 * r.frames_all_hit);
  return out;
}

std::string format_agreement_table(const AgreementStats& s, double r) {
  std::string out = "  MAD(deg)  SD(deg)  Max(deg)  >" + fmt("%g", s.threshold) + "deg  r\n";
  out += fmt("  %8.2f", s.mad) + fmt("  %7.2f", s.sd) + fmt("  %8.2f", s.max_diff) +
         "  " + std::to_string(s.over_threshold) + fmt("       %.3f\n", r);
  return out;
}

}  // namespace usspine
