// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "metric_fixtures.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"
#include "usspine/infer.hpp"
#include "usspine/metrics.hpp"
#include "usspine/pipeline.hpp"
#include "usspine/recon.hpp"
#include "usspine/spa.hpp"
#include "usspine/train.hpp"

using namespace usspine;
using namespace usspine::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome gradient_checks() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string worst_name;
  std::size_t cases = 0;
  for (const auto& pc : primitive_cases()) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      Rng rng(1000 + seed);
      const GradError e = check_gradients(pc.build, pc.inputs(rng), seed);
      if (e.max_rel >= worst) {
        worst = e.max_rel;
        worst_name = pc.name;
      }
      ++cases;
    }
  }
  const double t = seconds_since(t0);
  return {worst < 1e-4 && t < 60.0,
          std::to_string(cases) + " cases, worst rel err " + fmt("%.2e", worst) + " (" + worst_name + ")" +
              fmt(", %.1f s", t)};
}

Outcome decode_round_trip() {
  Rng rng(77);
  const HeatmapScale scale;
  double worst_x = 0.0, worst_y = 0.0;
  int checked = 0;
  while (checked < 1000) {
    LandmarkSet s;
    for (auto& p : s.points) {
      p = {scale.gamma_x * static_cast<double>(4 + rng.below(56)), scale.gamma_y * static_cast<double>(4 + rng.below(56))};
    }
    s.valid = true;
    const Tensor t = make_target(s);
    for (int c = 0; c < kNumLandmarks && checked < 1000; ++c, ++checked) {
      const auto map = t.data().subspan(static_cast<std::size_t>(c) * kHeatmapSize * kHeatmapSize,
                                        kHeatmapSize * kHeatmapSize);
      const Point2 got = to_image_coords(decode_peak(map), scale);
      const Point2 want = s[kChannelLandmark[static_cast<std::size_t>(c)]];
      worst_x = std::max(worst_x, std::abs(got.x - want.x));
      worst_y = std::max(worst_y, std::abs(got.y - want.y));
    }
  }
  return {worst_x <= 0.25 * scale.gamma_x && worst_y <= 0.25 * scale.gamma_y,
          "1000 landmarks, worst error " + fmt("(%.3f, %.3f) px", worst_x, worst_y)};
}

Outcome vnn_oracle() {
  int matched = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const VnnCase c = random_vnn_case(5000 + seed);
    const ReconResult r = fill_vnn(c.frames, c.poses, c.spacing, ReconConfig{1.0, c.grid});
    if (r.grid == brute_force_vnn(c)) ++matched;
  }
  return {matched == 50, std::to_string(matched) + "/50 grids bitwise equal"};
}

Outcome spa_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  int ok = 0;
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    PipelineConfig c;
    c.seed = 300 + static_cast<std::uint64_t>(i);
    c.phantom.speckle = 0.0;
    c.phantom.anatomy_jitter = 0.0;
    c.phantom.rib_probability = 0.0;
    c.phantom.lateral_coeffs = random_spine_curve(c.phantom, 900 + static_cast<std::uint64_t>(i), 2 + i % 4);
    const TrackedScan scan = render_scan(c.phantom, c.scan.options, stream_seed(c.seed, kScanStream));
    const PipelineRun run = run_scan(c, archive_from_scan(scan), nullptr);
    const auto errors = run.measurement.ok() ? segment_errors(run.measurement.report.segments, scan.truth_spa)
                                             : std::nullopt;
    if (!errors) {
      worst = 1e9;
      continue;
    }
    double e = 0.0;
    for (double v : *errors) e = std::max(e, v);
    worst = std::max(worst, e);
    if (e <= 2.0) ++ok;
  }
  const double t = seconds_since(t0);
  return {ok == 20 && t < 300.0,
          std::to_string(ok) + "/20 phantoms within 2 deg, worst " + fmt("%.3f deg, %.0f s", worst, t)};
}

PipelineConfig desk_config() {
  PipelineConfig c;
  c.override_schedule(20, 1e-3);
  return c;
}

ShnWeights train_desk(const PipelineConfig& c, double& train_seconds) {
  const auto frames = render_training_frames(c.training_data.frames, stream_seed(c.seed, kTrainDataStream),
                                             c.training_data.rib_probability);
  ShnWeights w = build_shn(c.network, stream_seed(c.seed, kInitStream));
  const auto t0 = std::chrono::steady_clock::now();
  train_shn(w, frames, c.train, stream_seed(c.seed, kTrainStream), [&](const EpochLog& e, const ShnWeights&) {
    std::cerr << "  epoch " << e.epoch << " loss " << e.mean_loss << fmt(" (%.0f s)", seconds_since(t0)) << "\n";
  });
  train_seconds = seconds_since(t0);
  return w;
}

Outcome desk_learning(const ShnWeights& w, double train_seconds) {
  const auto test = render_training_frames(200, 424242);
  std::vector<LandmarkSet> pred, truth;
  for (const auto& f : test) {
    pred.push_back(predict_landmarks(w, f.frame));
    truth.push_back(f.landmarks);
  }
  const PckResult p = pck(pred, truth, 15.0);
  const double sp = p.per_landmark[static_cast<std::size_t>(Landmark::SP)];
  return {p.total >= 0.80 && sp >= 0.85 && train_seconds <= 1800.0,
          fmt("PCK@15 total %.1f%%, SP %.1f%% on %.0f held-out frames, training %.0f s", 100 * p.total, 100 * sp,
              p.n_frames, train_seconds)};
}

Outcome end_to_end(const PipelineConfig& c, const ShnWeights& w) {
  const auto t0 = std::chrono::steady_clock::now();
  const TrackedScan scan = render_scan(c.phantom, c.scan.options, stream_seed(c.seed, kScanStream));
  const PipelineRun run = run_scan(c, archive_from_scan(scan), &w);
  const double t = seconds_since(t0);
  if (!run.measurement.ok()) return {false, "no SPA: " + run.measurement.failure};
  const auto errors = segment_errors(run.measurement.report.segments, scan.truth_spa);
  const std::string angles =
      "measured " + format_angles(run.measurement.report.segments) + " truth " + format_angles(scan.truth_spa);
  if (!errors) return {false, "segment count differs: " + angles};
  double worst = 0.0;
  for (double e : *errors) worst = std::max(worst, e);
  return {worst <= 5.0 && run.valid_rate_on_vertebra >= 0.90,
          angles + fmt(", worst %.2f deg, valid on vertebra %.1f%%, %.0f s", worst, 100 * run.valid_rate_on_vertebra, t)};
}

Outcome metric_fixtures() {
  int failed = 0;
  auto expect = [&](bool ok) { failed += ok ? 0 : 1; };
  expect(std::abs(pearson(kPairA, kPairB) - two_pass_pearson(kPairA, kPairB)) <= 1e-12);
  expect(std::abs(icc_2_1(kRatings) - two_pass_icc(kRatings)) <= 1e-12);
  expect(std::abs(icc_2_1(kRatings) - 0.28976) <= 1e-4);

  std::vector<LandmarkSet> truth(5, fixture_set(0));
  std::vector<LandmarkSet> pred = truth;
  pred[0][Landmark::SP].x += 20;
  pred[1][Landmark::LA0].y += 16;
  pred[2].valid = false;
  truth[3].valid = false;
  pred[4][Landmark::LA3].x -= 15;
  const PckResult p = pck(pred, truth);
  expect(p.n_frames == 4);
  expect(p.per_landmark[static_cast<std::size_t>(Landmark::SP)] == 0.5);
  expect(p.per_landmark[static_cast<std::size_t>(Landmark::LA3)] == 0.75);
  expect(p.total == 0.65);
  expect(p.frames_all_hit == 0.25);

  const AgreementStats s = mad_sd(std::vector<double>{10, 20, 30}, std::vector<double>{12, 17, 30}, 2.5);
  expect(std::abs(s.mad - 5.0 / 3.0) <= 1e-12);
  expect(s.max_diff == 3.0);
  expect(s.over_threshold == 1);
  return {failed == 0, std::to_string(12 - failed) + "/12 fixture values match"};
}

Outcome determinism() {
  PipelineConfig c;
  c.scan.min_frames = 10;
  c.scan.options.frame_count = 60;
  c.training_data.frames = 8;
  c.override_schedule(1, 1e-3);
  TempDir dir("accept_det");
  save_config(dir / "c.json", c);
  // Identical command lines; the first result is moved aside before the second run.
  const std::string cmd = std::string(USSPINE_CLI) + " pipeline --config " + (dir / "c.json").string() + " --out " +
                          (dir / "run").string() + " > /dev/null";
  for (const char* run : {"a", "b"}) {
    if (std::system(cmd.c_str()) != 0) return {false, "pipeline run failed"};
    std::filesystem::rename(dir / "run", dir / run);
  }
  const auto a = snapshot(dir / "a"), b = snapshot(dir / "b");
  std::size_t same = 0;
  for (const auto& [name, bytes] : a) {
    auto it = b.find(name);
    if (it != b.end() && it->second == bytes) ++same;
  }
  return {a.size() == b.size() && same == a.size() && !a.empty(),
          std::to_string(same) + "/" + std::to_string(a.size()) + " output files byte identical (two processes)"};
}

Outcome polynomial_recovery() {
  Rng rng(31337);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::array<double, 6> c{};
    for (auto& v : c) v = rng.uniform(1.0, 10.0) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
    const Polynomial f(std::vector<double>(c.begin(), c.end()));
    const double z_max = rng.uniform(100.0, 800.0);
    const int n = 60 + static_cast<int>(rng.below(200));
    std::vector<SpPoint> pts;
    for (int i = 0; i < n; ++i) {
      const double z = z_max * i / (n - 1);
      pts.push_back({f(2.0 * z / z_max - 1.0), z, i});
    }
    const SpineCurve fit = fit_curve(pts);
    for (std::size_t k = 0; k < 6; ++k) worst = std::max(worst, std::abs(fit.coeffs[k] - c[k]) / std::abs(c[k]));
  }
  return {worst <= 1e-6, "100 fits, worst relative coefficient error " + fmt("%.2e", worst)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  app.add_option("--only", only, "Run just these criteria (1-9)")->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);
  const std::set<int> wanted(only.begin(), only.end());
  auto enabled = [&](int k) { return wanted.empty() || wanted.count(k) > 0; };

  int failures = 0;
  auto report = [&](int k, const char* name, const std::function<Outcome()>& run) {
    if (!enabled(k)) return;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << "C" << k << " " << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.detail << std::endl;
  };

  report(1, "gradient checks", gradient_checks);
  report(2, "decode round trip", decode_round_trip);
  report(3, "VNN oracle", vnn_oracle);
  report(4, "SPA oracle (landmarks from truth)", spa_oracle);

  if (enabled(5) || enabled(6)) {
    const PipelineConfig c = desk_config();
    double train_seconds = 0.0;
    std::optional<ShnWeights> w;
    std::string error;
    try {
      w.emplace(train_desk(c, train_seconds));
    } catch (const std::exception& e) {
      error = e.what();
    }
    auto trained = [&](auto body) {
      return [&, body]() -> Outcome {
        if (!w) return {false, "training failed: " + error};
        return body();
      };
    };
    report(5, "desk-scale learning", trained([&] { return desk_learning(*w, train_seconds); }));
    report(6, "end to end with learned model", trained([&] { return end_to_end(c, *w); }));
  }

  report(7, "metric fixtures", metric_fixtures);
  report(8, "determinism", determinism);
  report(9, "polynomial recovery", polynomial_recovery);
  return failures == 0 ? 0 : 1;
}
