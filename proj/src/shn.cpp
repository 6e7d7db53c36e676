#include "usspine/shn.hpp"

#include <cmath>
#include <stdexcept>

#include "usspine/rng.hpp"

namespace usspine {

namespace {

using Layout = std::vector<std::pair<std::string, Shape>>;

void add_conv(Layout& out, const std::string& prefix, int cin, int cout, int k) {
  out.emplace_back(prefix + ".w", Shape{cout, cin, k, k});
  out.emplace_back(prefix + ".b", Shape{cout});
}

void add_norm(Layout& out, const std::string& prefix, int channels) {
  out.emplace_back(prefix + ".gamma", Shape{channels});
  out.emplace_back(prefix + ".beta", Shape{channels});
}

void add_residual(Layout& out, const std::string& prefix, int cin, int cout, bool norm) {
  const int mid = cout / 2;
  add_conv(out, prefix + ".conv1", cin, mid, 1);
  if (norm) add_norm(out, prefix + ".norm1", mid);
  add_conv(out, prefix + ".conv2", mid, mid, 3);
  if (norm) add_norm(out, prefix + ".norm2", mid);
  add_conv(out, prefix + ".conv3", mid, cout, 1);
  if (cin != cout) add_conv(out, prefix + ".skip", cin, cout, 1);
}

void add_hourglass(Layout& out, const std::string& prefix, int depth, int c, bool norm) {
  add_residual(out, prefix + ".up", c, c, norm);
  add_residual(out, prefix + ".low1", c, c, norm);
  if (depth > 1) {
    add_hourglass(out, prefix + ".inner", depth - 1, c, norm);
  } else {
    add_residual(out, prefix + ".low2", c, c, norm);
  }
  add_residual(out, prefix + ".low3", c, c, norm);
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

ShnConfig ShnConfig::desk() {
  ShnConfig c;
  c.channels = 32;
  return c;
}

void ShnConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("ShnConfig: " + msg); };
  if (num_stacks < 1) fail("num_stacks must be >= 1");
  if (num_landmarks < 1) fail("num_landmarks must be >= 1");
  if (channels < 4 || channels % 4 != 0) fail("channels must be a positive multiple of 4, got " + std::to_string(channels));
  if (input_size != 4 * heatmap_size) {
    fail("heatmap side must be input side / 4 (" + std::to_string(input_size) + " vs " + std::to_string(heatmap_size) + ")");
  }
  if (hourglass_depth < 1) fail("hourglass_depth must be >= 1");
  int side = heatmap_size;
  for (int i = 0; i < hourglass_depth; ++i) {
    if (side % 2 != 0) fail("heatmap side not divisible by 2^depth");
    side /= 2;
  }
  if (side < 4) fail("hourglass bottleneck resolution " + std::to_string(side) + " is below 4");
}

// ---------------------------------------------------------------------------

ShnWeights::ShnWeights(ShnConfig config, std::vector<Parameter> params)
    : config_(config), params_(std::move(params)) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!index_.emplace(params_[i].name, i).second) {
      throw std::invalid_argument("ShnWeights: duplicate parameter name '" + params_[i].name + "'");
    }
  }
}

Parameter& ShnWeights::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ShnWeights: no parameter named '" + name + "'");
  return params_[it->second];
}

const Parameter& ShnWeights::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ShnWeights: no parameter named '" + name + "'");
  return params_[it->second];
}

std::vector<Parameter*> ShnWeights::param_ptrs() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::size_t ShnWeights::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ShnWeights::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

std::vector<std::pair<std::string, Shape>> shn_parameter_layout(const ShnConfig& config) {
  config.validate();
  const int c = config.channels;
  const int k = config.num_landmarks;
  const bool norm = config.channel_norm;
  Layout out;
  add_conv(out, "stem.conv", 1, c / 4, 7);
  if (norm) add_norm(out, "stem.norm", c / 4);
  add_residual(out, "stem.res1", c / 4, c / 2, norm);
  add_residual(out, "stem.res2", c / 2, c / 2, norm);
  add_residual(out, "stem.res3", c / 2, c, norm);
  for (int s = 0; s < config.num_stacks; ++s) {
    const std::string tag = std::to_string(s);
    add_hourglass(out, "hg" + tag, config.hourglass_depth, c, norm);
    add_conv(out, "post" + tag, c, c, 1);
    add_conv(out, "head" + tag, c, k, 1);
    if (s + 1 < config.num_stacks) {
      add_conv(out, "merge" + tag + ".feat", c, c, 1);
      add_conv(out, "merge" + tag + ".heat", k, c, 1);
    }
  }
  return out;
}

ShnWeights build_shn(const ShnConfig& config, std::uint64_t seed) {
  const auto layout = shn_parameter_layout(config);
  std::vector<Parameter> params;
  params.reserve(layout.size());
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& [name, shape] = layout[i];
    Parameter p{name, Tensor(shape), Tensor()};
    if (ends_with(name, ".gamma")) {
      p.value.fill(1.0);
    } else if (ends_with(name, ".beta")) {
      p.value.fill(0.0);
    } else {
      // Biases share the fan-in of their convolution, found just before them.
      const Shape& wshape = ends_with(name, ".b") ? layout[i - 1].second : shape;
      const int fan_in = wshape[1] * wshape[2] * wshape[3];
      const Real bound = 1.0 / std::sqrt(static_cast<Real>(fan_in));
      Rng rng(stream_seed(seed, i));
      for (Real& v : p.value.data()) v = rng.uniform(-bound, bound);
    }
    params.push_back(std::move(p));
  }
  return ShnWeights(config, std::move(params));
}

// ---------------------------------------------------------------------------

ShnGraph::ShnGraph(Tape& tape, ShnWeights& weights) : tape_(tape), mutable_(&weights), weights_(&weights) {}

ShnGraph::ShnGraph(Tape& tape, const ShnWeights& weights) : tape_(tape), weights_(&weights) {}

Var ShnGraph::param(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Var v = (mutable_ != nullptr && tape_.recording()) ? tape_.watch(mutable_->at(name))
                                                     : tape_.constant(weights_->at(name).value);
  bound_.emplace(name, v);
  return v;
}

Var ShnGraph::conv(const std::string& prefix, Var input, int stride, int padding) {
  return ops::conv2d(tape_, input, param(prefix + ".w"), param(prefix + ".b"), stride, padding);
}

Var ShnGraph::residual(const std::string& prefix, Var input) {
  const int cin = tape_.value(input).shape()[1];
  const int cout = weights_->at(prefix + ".conv3.w").value.shape()[0];
  if (cout % 2 != 0) {
    throw std::invalid_argument("residual block '" + prefix + "': output channels must be even, got " +
                                std::to_string(cout));
  }
  const bool norm = weights_->contains(prefix + ".norm1.gamma");
  Var h = conv(prefix + ".conv1", input, 1, 0);
  if (norm) h = ops::channel_norm(tape_, h, param(prefix + ".norm1.gamma"), param(prefix + ".norm1.beta"));
  h = ops::relu(tape_, h);
  h = conv(prefix + ".conv2", h, 1, 1);
  if (norm) h = ops::channel_norm(tape_, h, param(prefix + ".norm2.gamma"), param(prefix + ".norm2.beta"));
  h = ops::relu(tape_, h);
  h = conv(prefix + ".conv3", h, 1, 0);
  Var skip = input;
  if (cin != cout) skip = conv(prefix + ".skip", input, 1, 0);
  return ops::relu(tape_, ops::add(tape_, h, skip));
}

Var ShnGraph::hourglass(const std::string& prefix, int depth, Var input) {
  Var up = residual(prefix + ".up", input);
  Var low = residual(prefix + ".low1", ops::maxpool2(tape_, input));
  low = depth > 1 ? hourglass(prefix + ".inner", depth - 1, low) : residual(prefix + ".low2", low);
  low = residual(prefix + ".low3", low);
  return ops::add(tape_, up, ops::upsample_nearest2(tape_, low));
}

Var ShnGraph::stem(Var input) {
  Var h = conv("stem.conv", input, 2, 3);
  if (weights_->contains("stem.norm.gamma")) {
    h = ops::channel_norm(tape_, h, param("stem.norm.gamma"), param("stem.norm.beta"));
  }
  h = ops::relu(tape_, h);
  h = residual("stem.res1", h);
  h = ops::maxpool2(tape_, h);
  h = residual("stem.res2", h);
  return residual("stem.res3", h);
}

std::vector<Var> ShnGraph::forward(Var input) {
  const ShnConfig& cfg = weights_->config();
  const Shape& s = tape_.value(input).shape();
  if (s.rank() != 4 || s[1] != 1 || s[2] != cfg.input_size || s[3] != cfg.input_size) {
    throw std::invalid_argument("ShnGraph::forward: expected input [B,1," + std::to_string(cfg.input_size) + "," +
                                std::to_string(cfg.input_size) + "], got " + s.str());
  }
  std::vector<Var> heatmaps;
  Var x = stem(input);
  for (int st = 0; st < cfg.num_stacks; ++st) {
    const std::string tag = std::to_string(st);
    Var feat = hourglass("hg" + tag, cfg.hourglass_depth, x);
    feat = ops::relu(tape_, conv("post" + tag, feat, 1, 0));
    Var heat = conv("head" + tag, feat, 1, 0);
    heatmaps.push_back(heat);
    if (st + 1 < cfg.num_stacks) {
      Var merged = ops::add(tape_, conv("merge" + tag + ".feat", feat, 1, 0), conv("merge" + tag + ".heat", heat, 1, 0));
      x = ops::add(tape_, x, merged);
    }
  }
  return heatmaps;
}

Var shn_loss(Tape& tape, const std::vector<Var>& predicted, Var target) {
  if (predicted.empty()) throw std::invalid_argument("shn_loss: no predictions");
  Var total = ops::mse_loss(tape, predicted.front(), target);
  for (std::size_t i = 1; i < predicted.size(); ++i) {
    total = ops::add(tape, total, ops::mse_loss(tape, predicted[i], target));
  }
  return total;
}

Real shn_loss_value(const std::vector<Tensor>& predicted, const Tensor& target) {
  Tape tape(false);
  std::vector<Var> preds;
  for (const auto& p : predicted) preds.push_back(tape.constant(p));
  return tape.value(shn_loss(tape, preds, tape.constant(target)))[0];
}

std::vector<Tensor> shn_predict(const ShnWeights& weights, const Tensor& input) {
  Tape tape(false);
  ShnGraph graph(tape, weights);
  std::vector<Tensor> out;
  for (Var v : graph.forward(tape.constant(input))) out.push_back(tape.value(v));
  return out;
}

}  // namespace usspine
