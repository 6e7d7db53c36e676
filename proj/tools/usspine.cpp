// Command-line front end: phantom, train, infer, reconstruct, measure,
// evaluate and pipeline.

#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "usspine/config.hpp"
#include "usspine/pipeline.hpp"

namespace {

using namespace usspine;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<int> frames;
  std::string projection;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "Pipeline config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Master seed");
  cmd->add_option("--out", o.out, "Output directory");
}

PipelineConfig resolve(const CommonOptions& o) {
  PipelineConfig c = o.config_path.empty() ? PipelineConfig{} : load_config(o.config_path);
  if (o.seed) c.seed = *o.seed;
  if (!o.out.empty()) c.output_dir = o.out;
  if (o.frames) c.scan.options.frame_count = *o.frames;
  if (o.epochs || o.lr) {
    const int epochs = o.epochs.value_or(c.train.total_epochs());
    const double lr = o.lr.value_or(c.train.schedule.front().lr);
    c.override_schedule(epochs, lr);
  }
  if (o.projection == "max") c.recon.projection = Projection::max;
  if (o.projection == "mean") c.recon.projection = Projection::mean;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spine ultrasound landmark detection and SPA measurement"};
  app.require_subcommand(1);
  CommonOptions o;

  auto* phantom = app.add_subcommand("phantom", "Render a synthetic tracked scan with truth files");
  add_common(phantom, o);
  phantom->add_option("--frames", o.frames, "Frame count");

  auto* train = app.add_subcommand("train", "Train the network on labeled scans or synthetic frames");
  add_common(train, o);
  std::vector<std::string> datasets;
  train->add_option("--data", datasets, "Labeled scan archive(s); synthetic frames when omitted")->check(CLI::ExistingDirectory);
  train->add_option("--epochs", o.epochs, "Single-phase schedule length");
  train->add_option("--lr", o.lr, "Single-phase learning rate");

  auto* infer = app.add_subcommand("infer", "Detect landmarks and write processed frames");
  add_common(infer, o);
  std::string weights_path, scan_dir;
  bool oracle = false;
  infer->add_option("--weights", weights_path, "Weight file")->check(CLI::ExistingFile);
  infer->add_option("--scan", scan_dir, "Scan archive")->required()->check(CLI::ExistingDirectory);
  infer->add_flag("--oracle-landmarks", oracle, "Use the archive's labels instead of the network");

  auto* recon = app.add_subcommand("reconstruct", "Build the volume, coronal image and SP points");
  add_common(recon, o);
  std::string processed_dir;
  recon->add_option("--processed", processed_dir, "Processed archive from infer")->required()->check(CLI::ExistingDirectory);

  auto* measure = app.add_subcommand("measure", "Fit the SP curve and measure SPAs");
  add_common(measure, o);
  std::string points_csv, poses_csv;
  measure->add_option("--points", points_csv, "SP points CSV")->required()->check(CLI::ExistingFile);
  measure->add_option("--poses", poses_csv, "Pose CSV")->required()->check(CLI::ExistingFile);

  auto* evaluate = app.add_subcommand("evaluate", "Compare predictions against truth");
  add_common(evaluate, o);
  std::string pred_lm, truth_lm, pred_spa, truth_spa;
  evaluate->add_option("--pred", pred_lm, "Predicted landmarks CSV")->check(CLI::ExistingFile);
  evaluate->add_option("--truth", truth_lm, "Truth landmarks CSV")->check(CLI::ExistingFile);
  evaluate->add_option("--pred-spa", pred_spa, "Measured SPA segments CSV")->check(CLI::ExistingFile);
  evaluate->add_option("--truth-spa", truth_spa, "Truth SPA segments CSV")->check(CLI::ExistingFile);

  auto* pipeline = app.add_subcommand("pipeline", "Run every stage end to end");
  add_common(pipeline, o);
  pipeline->add_option("--weights", weights_path, "Use this model instead of training")->check(CLI::ExistingFile);
  pipeline->add_flag("--oracle-landmarks", oracle, "Bypass the network with truth landmarks");
  pipeline->add_option("--epochs", o.epochs, "Single-phase schedule length");
  pipeline->add_option("--lr", o.lr, "Single-phase learning rate");
  pipeline->add_option("--frames", o.frames, "Frame count");

  for (auto* cmd : {recon, pipeline}) {
    cmd->add_option("--projection", o.projection, "Coronal projection")->check(CLI::IsMember({"max", "mean"}));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const PipelineConfig config = resolve(o);
    const fs::path out = config.output_dir;
    std::ostream& log = std::cout;
    const std::optional<fs::path> weights =
        weights_path.empty() ? std::nullopt : std::optional<fs::path>(weights_path);

    if (phantom->parsed()) {
      cmd_phantom(config, out, log);
    } else if (train->parsed()) {
      cmd_train(config, std::vector<fs::path>(datasets.begin(), datasets.end()), out, log);
    } else if (infer->parsed()) {
      if (!oracle && !weights) throw std::invalid_argument("infer needs --weights or --oracle-landmarks");
      cmd_infer(config, oracle ? std::nullopt : weights, scan_dir, out, log);
    } else if (recon->parsed()) {
      cmd_reconstruct(config, processed_dir, out, log);
    } else if (measure->parsed()) {
      cmd_measure(config, points_csv, poses_csv, out, log);
    } else if (evaluate->parsed()) {
      EvaluateInputs in;
      if (!pred_lm.empty()) in.pred_landmarks = pred_lm;
      if (!truth_lm.empty()) in.truth_landmarks = truth_lm;
      if (!pred_spa.empty()) in.pred_segments = pred_spa;
      if (!truth_spa.empty()) in.truth_segments = truth_spa;
      cmd_evaluate(config, in, out, log);
    } else if (pipeline->parsed()) {
      cmd_pipeline(config, weights, oracle, out, log);
    }
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& ch : msg) {
      if (ch == '\n') ch = ' ';
    }
    std::cerr << "error: " << msg << "\n";
    return 1;
  }
  return 0;
}
