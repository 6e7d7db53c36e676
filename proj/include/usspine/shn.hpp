#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "usspine/autograd.hpp"

namespace usspine {

/// Geometry of a stacked hourglass network.
struct ShnConfig {
  int num_stacks = 2;
  int channels = 256;
  int hourglass_depth = 4;
  int num_landmarks = 5;
  int input_size = 256;
  int heatmap_size = 64;
  bool channel_norm = false;

  /// Reduced variant that trains on a CPU.
  static ShnConfig desk();

  /// Throws std::invalid_argument describing the first inconsistency.
  void validate() const;

  bool operator==(const ShnConfig&) const = default;
};

/// Named parameters of the network. Names and shapes are a function of the
/// config alone; values come from build() or a weight file.
class ShnWeights {
 public:
  ShnWeights() = default;
  ShnWeights(ShnConfig config, std::vector<Parameter> params);

  const ShnConfig& config() const { return config_; }

  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }
  std::vector<Parameter*> param_ptrs();

  std::size_t parameter_count() const;
  void zero_grad();

 private:
  ShnConfig config_;
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

/// Parameter names and shapes for a config, in deterministic build order.
std::vector<std::pair<std::string, Shape>> shn_parameter_layout(const ShnConfig& config);

/// Fan-in scaled uniform initialization, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
ShnWeights build_shn(const ShnConfig& config, std::uint64_t seed);

/// Wires parameters of one ShnWeights onto a tape. When the tape records
/// gradients and the weights are mutable, gradients flow into Parameter::grad.
class ShnGraph {
 public:
  ShnGraph(Tape& tape, ShnWeights& weights);
  ShnGraph(Tape& tape, const ShnWeights& weights);

  /// Returns one [B, K, hm, hm] heatmap tensor per stack.
  std::vector<Var> forward(Var input);

  /// Stem alone, [B, C, hm, hm].
  Var stem(Var input);

  /// Bottleneck residual block; `prefix` selects its parameters.
  Var residual(const std::string& prefix, Var input);

  Var hourglass(const std::string& prefix, int depth, Var input);

 private:
  Var param(const std::string& name);
  Var conv(const std::string& prefix, Var input, int stride, int padding);

  Tape& tape_;
  ShnWeights* mutable_ = nullptr;
  const ShnWeights* weights_;
  std::map<std::string, Var> bound_;
};

/// Sum over stacks of the mean squared error against one target.
Var shn_loss(Tape& tape, const std::vector<Var>& predicted, Var target);
Real shn_loss_value(const std::vector<Tensor>& predicted, const Tensor& target);

/// Gradient-free forward pass.
std::vector<Tensor> shn_predict(const ShnWeights& weights, const Tensor& input);

}  // namespace usspine
