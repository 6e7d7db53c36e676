#pragma once

#include <span>
#include <vector>

#include "usspine/tensor.hpp"

namespace usspine {

struct AdamConfig {
  Real lr = 1e-3;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are keyed by position in the
/// parameter list, so the same list must be passed on every step.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void set_lr(Real lr) { config_.lr = lr; }
  const AdamConfig& config() const { return config_; }
  long step_count() const { return t_; }

  /// Applies one update. Every parameter must carry a gradient of its own shape.
  void step(std::span<Parameter* const> params);

 private:
  AdamConfig config_;
  long t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace usspine
