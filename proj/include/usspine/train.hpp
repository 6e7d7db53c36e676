#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "usspine/image.hpp"
#include "usspine/landmarks.hpp"
#include "usspine/optim.hpp"
#include "usspine/phantom.hpp"
#include "usspine/shn.hpp"

namespace usspine {

struct LrPhase {
  int epochs = 0;
  double lr = 0.0;
  bool operator==(const LrPhase&) const = default;
};

struct TrainConfig {
  std::vector<LrPhase> schedule{{500, 1e-5}, {500, 1e-7}};
  int batch_size = 4;
  double rotation_deg = 20.0;
  double flip_probability = 0.5;
  int checkpoint_every = 0;  // epochs; 0 disables
  TargetConfig target{};
  AdamConfig adam{};

  int total_epochs() const;
  double lr_for_epoch(int epoch) const;  // epoch counts from 1
};

/// A warped copy of a labeled frame's geometry; landmark slots are swapped
/// under a flip so LA0/LA1 stay on the left.
struct Augmentation {
  FrameWarp warp;
  LandmarkSet landmarks;
};

/// Landmarks after `warp`, with the LA0<->LA3 and LA1<->LA2 swap when flipped.
LandmarkSet warp_landmarks(const LandmarkSet& lm, const FrameWarp& warp, int width = kFrameWidth,
                           int height = kFrameHeight);

/// Draws rotation and flip; redraws (up to 100 times, then the identity) when
/// a landmark would leave the frame.
Augmentation draw_augmentation(const LandmarkSet& lm, const TrainConfig& config, std::uint64_t seed);

/// Network input tensor [1, 1, size, size] for one frame.
Tensor input_tensor(const GrayImage& frame, int size, const FrameWarp& warp = {});

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
};

using EpochCallback = std::function<void(const EpochLog&, const ShnWeights&)>;

/// Adam training with intermediate supervision on on_vertebra frames only.
/// Every draw (shuffle, augmentation) is derived from `seed`.
std::vector<EpochLog> train_shn(ShnWeights& weights, std::span<const LabeledFrame> frames, const TrainConfig& config,
                                std::uint64_t seed, const EpochCallback& on_epoch = {});

}  // namespace usspine
