#include "usspine/config.hpp"

#include <set>
#include <stdexcept>
#include <type_traits>

#include <json.hpp>

#include "usspine/io.hpp"

namespace usspine {

namespace {

using nlohmann::json;

template <class S>
using Bare = std::remove_const_t<S>;

// Field lists, shared by encoding and decoding.
template <class S, class F>
  requires std::same_as<Bare<S>, PixelSpacing>
void fields(S& s, F&& f) {
  f("x", s.x);
  f("y", s.y);
}

template <class S, class F>
  requires std::same_as<Bare<S>, SpinePhantom>
void fields(S& s, F&& f) {
  f("lateral_coeffs", s.lateral_coeffs);
  f("vertebra_count", s.vertebra_count);
  f("vertebra_length_mm", s.vertebra_length_mm);
  f("gap_length_mm", s.gap_length_mm);
  f("lamina_spacing_mm", s.lamina_spacing_mm);
  f("lamina_arc_px", s.lamina_arc_px);
  f("lamina_slope_deg", s.lamina_slope_deg);
  f("sp_depth_mm", s.sp_depth_mm);
  f("lamina_depth_mm", s.lamina_depth_mm);
  f("tissue_band_depths_mm", s.tissue_band_depths_mm);
  f("sp_sigma_px", s.sp_sigma_px);
  f("speckle", s.speckle);
  f("rib_probability", s.rib_probability);
  f("anatomy_jitter", s.anatomy_jitter);
  f("seed", s.seed);
  f("pixel_spacing", s.spacing);
}

template <class S, class F>
  requires std::same_as<Bare<S>, ScanConfig>
void fields(S& s, F&& f) {
  f("frame_count", s.options.frame_count);
  f("stacked_head_tail", s.options.stacked_head_tail);
  f("tilt_deg", s.options.tilt_deg);
  f("min_frames", s.min_frames);
  f("max_frames", s.max_frames);
}

template <class S, class F>
  requires std::same_as<Bare<S>, ShnConfig>
void fields(S& s, F&& f) {
  f("num_stacks", s.num_stacks);
  f("channels", s.channels);
  f("hourglass_depth", s.hourglass_depth);
  f("num_landmarks", s.num_landmarks);
  f("input_size", s.input_size);
  f("heatmap_size", s.heatmap_size);
  f("channel_norm", s.channel_norm);
}

template <class S, class F>
  requires std::same_as<Bare<S>, LrPhase>
void fields(S& s, F&& f) {
  f("epochs", s.epochs);
  f("lr", s.lr);
}

template <class S, class F>
  requires std::same_as<Bare<S>, HeatmapScale>
void fields(S& s, F&& f) {
  f("gamma_x", s.gamma_x);
  f("gamma_y", s.gamma_y);
}

template <class S, class F>
  requires std::same_as<Bare<S>, TargetConfig>
void fields(S& s, F&& f) {
  f("sigma", s.sigma);
  f("truncate", s.truncate);
  f("side", s.side);
  f("scale", s.scale);
}

template <class S, class F>
  requires std::same_as<Bare<S>, AdamConfig>
void fields(S& s, F&& f) {
  f("lr", s.lr);
  f("beta1", s.beta1);
  f("beta2", s.beta2);
  f("eps", s.eps);
}

template <class S, class F>
  requires std::same_as<Bare<S>, TrainConfig>
void fields(S& s, F&& f) {
  f("schedule", s.schedule);
  f("batch_size", s.batch_size);
  f("rotation_deg", s.rotation_deg);
  f("flip_probability", s.flip_probability);
  f("checkpoint_every", s.checkpoint_every);
  f("target", s.target);
  f("adam", s.adam);
}

template <class S, class F>
  requires std::same_as<Bare<S>, TrainingDataConfig>
void fields(S& s, F&& f) {
  f("frames", s.frames);
  f("rib_probability", s.rib_probability);
}

template <class S, class F>
  requires std::same_as<Bare<S>, DecodeConfig>
void fields(S& s, F&& f) {
  f("gamma_x", s.scale.gamma_x);
  f("gamma_y", s.scale.gamma_y);
  f("lamina_min_px", s.verify.lamina_min_px);
  f("lamina_max_px", s.verify.lamina_max_px);
  f("margin_px", s.postprocess.margin_px);
}

template <class S, class F>
  requires std::same_as<Bare<S>, ReconstructionConfig>
void fields(S& s, F&& f) {
  f("voxel_mm", s.voxel_mm);
  f("hole_radius", s.hole_radius);
  f("slab_y_min_mm", s.slab_y_min_mm);
  f("slab_y_max_mm", s.slab_y_max_mm);
  f("projection", s.projection);
}

template <class S, class F>
  requires std::same_as<Bare<S>, MeasureConfig>
void fields(S& s, F&& f) {
  f("merge_below_deg", s.merge_below_deg);
  f("dwell_mm", s.filter.dwell_mm);
  f("outlier_factor", s.filter.outlier_factor);
  f("outlier_floor_px", s.filter.outlier_floor_px);
}

template <class S, class F>
  requires std::same_as<Bare<S>, MetricsConfig>
void fields(S& s, F&& f) {
  f("pck_radius_px", s.pck_radius_px);
  f("mad_threshold_deg", s.mad_threshold_deg);
}

template <class S, class F>
  requires std::same_as<Bare<S>, PipelineConfig>
void fields(S& s, F&& f) {
  f("seed", s.seed);
  f("output_dir", s.output_dir);
  f("phantom", s.phantom);
  f("scan", s.scan);
  f("network", s.network);
  f("train", s.train);
  f("training_data", s.training_data);
  f("decode", s.decode);
  f("recon", s.recon);
  f("measure", s.measure);
  f("metrics", s.metrics);
}

template <class T>
concept HasFields = requires(T& t) { fields(t, [](const char*, auto&) {}); };

template <class T>
struct IsVector : std::false_type {};
template <class T>
struct IsVector<std::vector<T>> : std::true_type {};

template <class T>
json encode(const T& v) {
  if constexpr (HasFields<T>) {
    json j = json::object();
    fields(v, [&](const char* key, const auto& member) { j[key] = encode(member); });
    return j;
  } else if constexpr (std::is_same_v<T, Projection>) {
    return v == Projection::max ? "max" : "mean";
  } else if constexpr (IsVector<T>::value) {
    json j = json::array();
    for (const auto& e : v) j.push_back(encode(e));
    return j;
  } else {
    return json(v);
  }
}

template <class T>
void decode(const json& j, T& v, const std::string& where) {
  if constexpr (HasFields<T>) {
    if (!j.is_object()) throw std::runtime_error("config: " + where + " must be an object");
    std::set<std::string> known;
    fields(v, [&](const char* key, auto& member) {
      known.insert(key);
      if (j.contains(key)) decode(j.at(key), member, where + "." + key);
    });
    for (const auto& item : j.items()) {
      if (!known.count(item.key())) throw std::runtime_error("config: unknown key " + where + "." + item.key());
    }
  } else if constexpr (std::is_same_v<T, Projection>) {
    const std::string s = j.get<std::string>();
    if (s == "max") {
      v = Projection::max;
    } else if (s == "mean") {
      v = Projection::mean;
    } else {
      throw std::runtime_error("config: " + where + " must be \"max\" or \"mean\"");
    }
  } else if constexpr (IsVector<T>::value) {
    if (!j.is_array()) throw std::runtime_error("config: " + where + " must be an array");
    v.clear();
    for (std::size_t i = 0; i < j.size(); ++i) {
      typename T::value_type e{};
      decode(j[i], e, where + "[" + std::to_string(i) + "]");
      v.push_back(std::move(e));
    }
  } else {
    try {
      j.get_to(v);
    } catch (const json::exception& e) {
      throw std::runtime_error("config: bad value for " + where + ": " + e.what());
    }
  }
}

}  // namespace

void PipelineConfig::override_schedule(int epochs, double lr) { train.schedule = {{epochs, lr}}; }

void PipelineConfig::validate() const {
  phantom.validate();
  network.validate();
  const auto& so = scan.options;
  if (scan.min_frames < 10 || scan.max_frames < scan.min_frames) throw std::invalid_argument("config: bad frame range");
  if (so.frame_count < scan.min_frames || so.frame_count > scan.max_frames) {
    throw std::invalid_argument("config: scan.frame_count " + std::to_string(so.frame_count) + " outside [" +
                                std::to_string(scan.min_frames) + ", " + std::to_string(scan.max_frames) + "]");
  }
  if (so.stacked_head_tail < 0 || 2 * so.stacked_head_tail >= so.frame_count - 1) {
    throw std::invalid_argument("config: scan.stacked_head_tail out of range");
  }
  if (train.schedule.empty()) throw std::invalid_argument("config: train.schedule is empty");
  for (const auto& p : train.schedule) {
    if (p.epochs < 1 || !(p.lr > 0.0)) throw std::invalid_argument("config: schedule phases need epochs >= 1 and lr > 0");
  }
  if (train.batch_size < 1) throw std::invalid_argument("config: train.batch_size must be >= 1");
  if (train.target.side != network.heatmap_size) throw std::invalid_argument("config: target side differs from heatmap size");
  if (training_data.frames < 1) throw std::invalid_argument("config: training_data.frames must be >= 1");
  if (!(recon.voxel_mm > 0.0) || recon.hole_radius < 0) throw std::invalid_argument("config: bad reconstruction grid");
  if (!(recon.slab_y_min_mm < recon.slab_y_max_mm)) throw std::invalid_argument("config: empty projection slab");
  if (!(metrics.pck_radius_px > 0.0)) throw std::invalid_argument("config: pck radius must be positive");
}

std::string config_to_json(const PipelineConfig& config) { return encode(config).dump(2) + "\n"; }

PipelineConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("config: ") + e.what());
  }
  PipelineConfig c;
  decode(j, c, "config");
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) { return config_from_json(read_text(path)); }

void save_config(const std::filesystem::path& path, const PipelineConfig& config) {
  write_text(path, config_to_json(config));
}

bool same_config(const PipelineConfig& a, const PipelineConfig& b) { return config_to_json(a) == config_to_json(b); }

}  // namespace usspine
