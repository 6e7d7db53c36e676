#include "usspine/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "usspine/rng.hpp"
#include "usspine/train.hpp"

namespace usspine {

namespace {

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * v);
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double on_vertebra_valid_rate(const InferResult& r, const std::vector<bool>& on_vertebra) {
  std::size_t n = 0, hit = 0;
  for (std::size_t i = 0; i < on_vertebra.size() && i < r.landmarks.size(); ++i) {
    if (!on_vertebra[i]) continue;
    ++n;
    hit += r.landmarks[i].valid ? 1 : 0;
  }
  return n == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(n);
}

CoronalScale coronal_scale(const ReconstructionConfig& c) { return {c.voxel_mm, c.voxel_mm}; }

std::vector<LabeledFrame> labeled_frames(const ScanArchive& a) {
  std::vector<LabeledFrame> out;
  for (std::size_t i = 0; i < a.labels.size(); ++i) {
    if (!a.on_vertebra[i]) continue;
    out.push_back({a.frames[i], a.labels[i], true});
  }
  return out;
}

}  // namespace

ScanArchive archive_from_scan(const TrackedScan& scan) {
  ScanArchive a;
  a.frames = scan.frames;
  a.poses = scan.poses;
  a.spacing = scan.spacing;
  a.labels = scan.labels;
  a.on_vertebra = scan.on_vertebra;
  return a;
}

ScanArchive archive_from_processed(const std::vector<ProcessedFrame>& processed, const std::vector<FramePose>& poses,
                                   const PixelSpacing& spacing) {
  ScanArchive a;
  for (const auto& p : processed) {
    a.frames.push_back(p.image);
    a.masks.push_back(p.sp_mask);
  }
  a.poses = poses;
  a.spacing = spacing;
  return a;
}

std::vector<ProcessedFrame> processed_from_archive(const ScanArchive& a) {
  if (a.masks.size() != a.frames.size()) throw std::runtime_error("archive has no SP masks; run infer first");
  std::vector<ProcessedFrame> out;
  for (std::size_t i = 0; i < a.frames.size(); ++i) out.push_back({a.frames[i], a.masks[i]});
  return out;
}

Reconstruction reconstruct(std::span<const ProcessedFrame> processed, std::span<const FramePose> poses,
                           const PixelSpacing& spacing, const ReconstructionConfig& config) {
  Reconstruction r;
  ReconConfig rc;
  rc.voxel_mm = config.voxel_mm;
  r.vnn = fill_vnn(processed, poses, spacing, rc);
  r.filled = fill_holes(r.vnn.grid, config.hole_radius);
  r.coronal = project_coronal(r.filled, config.slab_y_min_mm, config.slab_y_max_mm, config.projection);
  return r;
}

Measurement measure(std::span<const SpPoint> points, std::span<const FramePose> poses, const CoronalScale& scale,
                    const MeasureConfig& config) {
  Measurement m;
  try {
    m.filtered = filter_points(points, poses, config.filter);
  } catch (const std::invalid_argument& e) {
    // Too few or too clustered SP points: the scan has no measurable curve.
    m.failure = e.what();
    return m;
  }
  m.report = measure_spa(m.filtered.curve, scale, config.merge_below_deg);
  m.report.points_used = static_cast<int>(m.filtered.points.size());
  m.report.stacked_rejected = m.filtered.stacked_rejected;
  m.report.outlier_rejected = m.filtered.outlier_rejected;
  return m;
}

std::optional<std::vector<double>> segment_errors(const std::vector<AngleSegment>& measured,
                                                  const std::vector<AngleSegment>& truth) {
  if (measured.size() != truth.size()) return std::nullopt;
  std::vector<double> e;
  for (std::size_t i = 0; i < truth.size(); ++i) e.push_back(std::abs(measured[i].degrees - truth[i].degrees));
  return e;
}

PipelineRun run_scan(const PipelineConfig& config, const ScanArchive& scan, const ShnWeights* weights) {
  PipelineRun run;
  if (weights) {
    if (!(weights->config() == config.network)) throw std::invalid_argument("weights were built for a different network config");
    run.inference = infer_frames(*weights, scan.frames, config.decode);
  } else {
    if (scan.labels.empty()) throw std::invalid_argument("oracle landmarks requested but the scan has no labels");
    run.inference = apply_landmarks(scan.frames, scan.labels, config.decode);
  }
  if (!scan.on_vertebra.empty()) run.valid_rate_on_vertebra = on_vertebra_valid_rate(run.inference, scan.on_vertebra);
  run.recon = reconstruct(run.inference.processed, scan.poses, scan.spacing, config.recon);
  run.measurement = measure(run.recon.coronal.sp_points, scan.poses, coronal_scale(config.recon), config.measure);
  return run;
}

void cmd_phantom(const PipelineConfig& config, const fs::path& out, std::ostream& log) {
  config.validate();
  fs::create_directories(out);
  const TrackedScan scan = render_scan(config.phantom, config.scan.options, stream_seed(config.seed, kScanStream));
  write_archive(out / "scan", archive_from_scan(scan));
  write_segments_csv(out / "truth_spa.csv", scan.truth_spa);
  write_landmarks_csv(out / "truth_landmarks.csv", scan.labels);
  save_config(out / "config.json", config);
  std::size_t on = 0;
  for (bool b : scan.on_vertebra) on += b ? 1 : 0;
  log << "phantom: " << scan.size() << " frames (" << on << " on vertebra), truth SPA " << format_angles(scan.truth_spa)
      << "\n";
}

void cmd_train(const PipelineConfig& config, const std::vector<fs::path>& datasets, const fs::path& out,
               std::ostream& log) {
  config.validate();
  std::vector<LabeledFrame> frames;
  if (datasets.empty()) {
    frames = render_training_frames(config.training_data.frames, stream_seed(config.seed, kTrainDataStream),
                                    config.training_data.rib_probability);
  } else {
    for (const auto& d : datasets) {
      const ScanArchive a = read_archive(d);
      if (a.labels.empty()) throw std::runtime_error("dataset " + d.string() + " has no labels");
      for (auto& f : labeled_frames(a)) frames.push_back(std::move(f));
    }
  }
  if (frames.empty()) throw std::runtime_error("training set is empty");
  fs::create_directories(out);

  ShnWeights weights = build_shn(config.network, stream_seed(config.seed, kInitStream));
  CsvTable loss_log{{"epoch", "lr", "mean_loss"}, {}};
  const int every = config.train.checkpoint_every;
  if (every > 0) fs::create_directories(out / "checkpoints");
  train_shn(weights, frames, config.train, stream_seed(config.seed, kTrainStream),
            [&](const EpochLog& e, const ShnWeights& w) {
              loss_log.rows.push_back({std::to_string(e.epoch), format_real(e.lr), format_real(e.mean_loss)});
              log << "epoch " << e.epoch << " lr " << e.lr << " loss " << e.mean_loss << "\n" << std::flush;
              if (every > 0 && e.epoch % every == 0) {
                char name[32];
                std::snprintf(name, sizeof name, "epoch_%04d.shnw", e.epoch);
                save_weights(out / "checkpoints" / name, w);
              }
            });
  save_weights(out / "model.shnw", weights);
  write_csv(out / "loss_log.csv", loss_log);
  log << "train: " << frames.size() << " frames, " << config.train.total_epochs() << " epochs, "
      << weights.parameter_count() << " parameters\n";
}

void cmd_infer(const PipelineConfig& config, const std::optional<fs::path>& weights_path, const fs::path& scan_dir,
               const fs::path& out, std::ostream& log) {
  const ScanArchive scan = read_archive(scan_dir);
  InferResult r;
  if (weights_path) {
    const ShnWeights w = load_weights(*weights_path);
    if (!(w.config() == config.network)) throw std::invalid_argument("weight file config does not match the network config");
    r = infer_frames(w, scan.frames, config.decode);
  } else {
    if (scan.labels.empty()) throw std::invalid_argument("oracle landmarks requested but the scan has no labels");
    r = apply_landmarks(scan.frames, scan.labels, config.decode);
  }
  fs::create_directories(out);
  write_landmarks_csv(out / "landmarks.csv", r.landmarks);
  write_archive(out / "processed", archive_from_processed(r.processed, scan.poses, scan.spacing));
  log << "infer: " << r.landmarks.size() << " frames, valid " << percent(r.valid_rate());
  if (!scan.on_vertebra.empty()) log << ", valid on vertebra " << percent(on_vertebra_valid_rate(r, scan.on_vertebra));
  log << "\n";
}

void cmd_reconstruct(const PipelineConfig& config, const fs::path& processed_dir, const fs::path& out,
                     std::ostream& log) {
  const ScanArchive a = read_archive(processed_dir);
  const auto processed = processed_from_archive(a);
  const Reconstruction r = reconstruct(processed, a.poses, a.spacing, config.recon);
  fs::create_directories(out);
  save_volume(out / "volume.usv", r.filled);
  write_pgm(out / "coronal.pgm", r.coronal.image);
  write_sp_points_csv(out / "sp_points.csv", r.coronal.sp_points);
  const auto& d = r.vnn.grid.spec.dims;
  std::string report = "dims " + std::to_string(d[0]) + " " + std::to_string(d[1]) + " " + std::to_string(d[2]) + "\n";
  report += "pixels_mapped " + std::to_string(r.vnn.pixels_mapped) + "\n";
  report += "degenerate_poses " + std::string(r.vnn.degenerate_poses ? "1" : "0") + "\n";
  report += "sp_points " + std::to_string(r.coronal.sp_points.size()) + "\n";
  write_text(out / "recon_report.txt", report);
  log << "reconstruct: grid " << d[0] << "x" << d[1] << "x" << d[2] << ", " << r.coronal.sp_points.size()
      << " SP points" << (r.vnn.degenerate_poses ? " (degenerate poses)" : "") << "\n";
}

void cmd_measure(const PipelineConfig& config, const fs::path& points_csv, const fs::path& poses_csv,
                 const fs::path& out, std::ostream& log) {
  const auto points = read_sp_points_csv(points_csv);
  const auto poses = read_poses_csv(poses_csv);
  const Measurement m = measure(points, poses, coronal_scale(config.recon), config.measure);
  fs::create_directories(out);
  write_segments_csv(out / "spa_segments.csv", m.report.segments);
  if (!m.ok()) {
    write_text(out / "spa_report.txt", "spa unavailable\nreason " + m.failure + "\n");
    log << "measure: no SPA (" << m.failure << ")\n";
    return;
  }
  CsvTable curve{{"coefficient", "value"}, {}};
  for (std::size_t k = 0; k < m.filtered.curve.coeffs.size(); ++k) {
    curve.rows.push_back({"c" + std::to_string(k), format_real(m.filtered.curve.coeffs[k])});
  }
  curve.rows.push_back({"z_min", format_real(m.filtered.curve.z_min)});
  curve.rows.push_back({"z_max", format_real(m.filtered.curve.z_max)});
  curve.rows.push_back({"fit_rms", format_real(m.filtered.curve.fit_rms)});
  write_csv(out / "curve.csv", curve);
  std::string report = "spa " + format_angles(m.report.segments) + "\n";
  report += "points_used " + std::to_string(m.report.points_used) + "\n";
  report += "rejected_stacked_frame " + std::to_string(m.report.stacked_rejected) + "\n";
  report += "rejected_outlier " + std::to_string(m.report.outlier_rejected) + "\n";
  report += "fit_rms_px " + fixed(m.filtered.curve.fit_rms, 3) + "\n";
  write_text(out / "spa_report.txt", report);
  log << "measure: SPA " << format_angles(m.report.segments) << " from " << m.report.points_used << " points ("
      << m.report.stacked_rejected << " dwell, " << m.report.outlier_rejected << " outliers rejected)\n";
}

void cmd_evaluate(const PipelineConfig& config, const EvaluateInputs& in, const fs::path& out, std::ostream& log) {
  fs::create_directories(out);
  std::string text;
  if (in.pred_landmarks && in.truth_landmarks) {
    const auto pred = read_landmarks_csv(*in.pred_landmarks);
    const auto truth = read_landmarks_csv(*in.truth_landmarks);
    const PckResult p = pck(pred, truth, config.metrics.pck_radius_px);
    CsvTable t{{"landmark", "pck"}, {}};
    for (Landmark lm : {Landmark::SP, Landmark::LA0, Landmark::LA1, Landmark::LA2, Landmark::LA3}) {
      t.rows.push_back({std::string(landmark_name(lm)), format_real(p.per_landmark[static_cast<std::size_t>(lm)])});
    }
    t.rows.push_back({"total", format_real(p.total)});
    t.rows.push_back({"all_five", format_real(p.frames_all_hit)});
    write_csv(out / "pck.csv", t);
    text += format_pck_table(p);
  }
  if (in.pred_segments && in.truth_segments) {
    const auto pred = read_segments_csv(*in.pred_segments);
    const auto truth = read_segments_csv(*in.truth_segments);
    CsvTable t{{"segment", "measured_deg", "truth_deg", "abs_diff_deg"}, {}};
    const auto errors = segment_errors(pred, truth);
    if (errors) {
      for (std::size_t i = 0; i < truth.size(); ++i) {
        t.rows.push_back({std::to_string(i), format_real(pred[i].degrees), format_real(truth[i].degrees),
                          format_real((*errors)[i])});
      }
      text += "SPA measured " + format_angles(pred) + " truth " + format_angles(truth) + "\n";
      if (truth.size() >= 2) {
        std::vector<double> a, b;
        for (std::size_t i = 0; i < truth.size(); ++i) {
          a.push_back(pred[i].degrees);
          b.push_back(truth[i].degrees);
        }
        const AgreementStats s = mad_sd(a, b, config.metrics.mad_threshold_deg);
        text += "  MAD " + fixed(s.mad, 2) + " deg, SD " + fixed(s.sd, 2) + " deg, max " + fixed(s.max_diff, 2) + " deg\n";
      } else if (!truth.empty()) {
        text += "  abs diff " + fixed(errors->front(), 2) + " deg\n";
      }
    } else {
      text += "SPA segment count differs: measured " + format_angles(pred) + " truth " + format_angles(truth) + "\n";
    }
    write_csv(out / "spa_comparison.csv", t);
  }
  if (text.empty()) throw std::invalid_argument("evaluate: nothing to compare");
  write_text(out / "metrics.txt", text);
  log << text;
}

void cmd_pipeline(const PipelineConfig& config, const std::optional<fs::path>& weights, bool oracle_landmarks,
                  const fs::path& out, std::ostream& log) {
  config.validate();
  fs::create_directories(out);
  save_config(out / "config.json", config);
  cmd_phantom(config, out / "phantom", log);
  std::optional<fs::path> model = weights;
  if (!oracle_landmarks && !model) {
    cmd_train(config, {}, out / "train", log);
    model = out / "train" / "model.shnw";
  }
  cmd_infer(config, oracle_landmarks ? std::nullopt : model, out / "phantom" / "scan", out / "infer", log);
  cmd_reconstruct(config, out / "infer" / "processed", out / "recon", log);
  cmd_measure(config, out / "recon" / "sp_points.csv", out / "infer" / "processed" / "poses.csv", out / "measure", log);
  EvaluateInputs ev;
  ev.pred_landmarks = out / "infer" / "landmarks.csv";
  ev.truth_landmarks = out / "phantom" / "truth_landmarks.csv";
  ev.pred_segments = out / "measure" / "spa_segments.csv";
  ev.truth_segments = out / "phantom" / "truth_spa.csv";
  cmd_evaluate(config, ev, out / "evaluate", log);
}

}  // namespace usspine
