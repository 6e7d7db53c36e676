#include "usspine/train.hpp"

#include <algorithm>
#include <stdexcept>

#include "usspine/rng.hpp"

namespace usspine {

int TrainConfig::total_epochs() const {
  int n = 0;
  for (const auto& p : schedule) n += p.epochs;
  return n;
}

double TrainConfig::lr_for_epoch(int epoch) const {
  if (epoch < 1) throw std::out_of_range("lr_for_epoch: epochs count from 1");
  int end = 0;
  for (const auto& p : schedule) {
    end += p.epochs;
    if (epoch <= end) return p.lr;
  }
  throw std::out_of_range("lr_for_epoch: epoch beyond the schedule");
}

LandmarkSet warp_landmarks(const LandmarkSet& lm, const FrameWarp& warp, int width, int height) {
  LandmarkSet out = lm;
  for (std::size_t k = 0; k < kNumLandmarks; ++k) out.points[k] = warp.forward(lm.points[k], width, height);
  if (warp.flip) {
    std::swap(out[Landmark::LA0], out[Landmark::LA3]);
    std::swap(out[Landmark::LA1], out[Landmark::LA2]);
  }
  return out;
}

Augmentation draw_augmentation(const LandmarkSet& lm, const TrainConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  for (int attempt = 0; attempt < 100; ++attempt) {
    FrameWarp warp;
    warp.rotation_deg = rng.uniform(-config.rotation_deg, config.rotation_deg);
    warp.flip = rng.bernoulli(config.flip_probability);
    LandmarkSet out = warp_landmarks(lm, warp);
    const bool inside = std::all_of(out.points.begin(), out.points.end(), [](const Point2& p) {
      return p.x >= 0.0 && p.y >= 0.0 && p.x <= kFrameWidth - 1 && p.y <= kFrameHeight - 1;
    });
    if (inside) return {warp, out};
  }
  return {FrameWarp{}, lm};
}

Tensor input_tensor(const GrayImage& frame, int size, const FrameWarp& warp) {
  return Tensor(Shape{1, 1, size, size}, network_input(frame, size, warp));
}

std::vector<EpochLog> train_shn(ShnWeights& weights, std::span<const LabeledFrame> frames, const TrainConfig& config,
                                std::uint64_t seed, const EpochCallback& on_epoch) {
  std::vector<const LabeledFrame*> usable;
  for (const auto& f : frames) {
    if (f.on_vertebra && f.landmarks.valid) usable.push_back(&f);
  }
  if (usable.empty()) throw std::invalid_argument("train_shn: no on-vertebra frames to train on");
  if (config.batch_size < 1) throw std::invalid_argument("train_shn: batch_size must be >= 1");
  if (config.total_epochs() < 1) throw std::invalid_argument("train_shn: schedule has no epochs");
  const ShnConfig& net = weights.config();
  if (net.num_landmarks != kNumLandmarks || net.heatmap_size != config.target.side) {
    throw std::invalid_argument("train_shn: network output does not match the target layout");
  }

  const int in = net.input_size, hm = net.heatmap_size;
  const std::size_t in_px = static_cast<std::size_t>(in) * in;
  const std::size_t tgt_px = static_cast<std::size_t>(kNumLandmarks) * hm * hm;
  std::vector<Parameter*> params = weights.param_ptrs();
  Adam adam(config.adam);
  Rng shuffle_rng(stream_seed(seed, 0));
  std::uint64_t draw = 0;

  std::vector<std::size_t> order(usable.size());
  std::vector<EpochLog> log;
  for (int epoch = 1; epoch <= config.total_epochs(); ++epoch) {
    adam.set_lr(config.lr_for_epoch(epoch));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t b = std::min(order.size() - start, static_cast<std::size_t>(config.batch_size));
      const int bi = static_cast<int>(b);
      Tensor input(Shape{bi, 1, in, in});
      Tensor target(Shape{bi, kNumLandmarks, hm, hm});
      for (std::size_t j = 0; j < b; ++j) {
        const LabeledFrame& f = *usable[order[start + j]];
        const Augmentation aug = draw_augmentation(f.landmarks, config, stream_seed(seed, 1 + draw++));
        const std::vector<double> x = network_input(f.frame, in, aug.warp);
        std::copy(x.begin(), x.end(), input.raw() + j * in_px);
        const Tensor t = make_target(aug.landmarks, config.target);
        std::copy(t.raw(), t.raw() + tgt_px, target.raw() + j * tgt_px);
      }
      Tape tape;
      ShnGraph graph(tape, weights);
      const auto heads = graph.forward(tape.constant(std::move(input)));
      const Var loss = shn_loss(tape, heads, tape.constant(std::move(target)));
      weights.zero_grad();
      tape.backward(loss);
      adam.step(params);
      loss_sum += tape.value(loss)[0];
      ++batches;
    }
    const EpochLog entry{epoch, config.lr_for_epoch(epoch), loss_sum / batches};
    log.push_back(entry);
    if (on_epoch) on_epoch(entry, weights);
  }
  return log;
}

}  // namespace usspine
