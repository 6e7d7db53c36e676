#include "usspine/infer.hpp"

#include <stdexcept>

#include "usspine/train.hpp"

namespace usspine {

LandmarkSet predict_landmarks(const ShnWeights& weights, const GrayImage& frame, const DecodeConfig& config) {
  const ShnConfig& net = weights.config();
  const auto heads = shn_predict(weights, input_tensor(frame, net.input_size));
  return decode_frame(heads.back(), config.scale, config.verify);
}

ProcessedFrame process_frame(const GrayImage& frame, const LandmarkSet& landmarks, const DecodeConfig& config) {
  if (!landmarks.valid) return empty_processed_frame(frame.width, frame.height);
  return postprocess_frame(frame, landmarks, config.postprocess);
}

double InferResult::valid_rate() const {
  if (landmarks.empty()) return 0.0;
  std::size_t n = 0;
  for (const auto& lm : landmarks) n += lm.valid ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(landmarks.size());
}

InferResult infer_frames(const ShnWeights& weights, std::span<const GrayImage> frames, const DecodeConfig& config) {
  InferResult out;
  out.landmarks.reserve(frames.size());
  out.processed.reserve(frames.size());
  for (const auto& f : frames) {
    out.landmarks.push_back(predict_landmarks(weights, f, config));
    out.processed.push_back(process_frame(f, out.landmarks.back(), config));
  }
  return out;
}

InferResult apply_landmarks(std::span<const GrayImage> frames, std::span<const LandmarkSet> landmarks,
                            const DecodeConfig& config) {
  if (frames.size() != landmarks.size()) throw std::invalid_argument("apply_landmarks: frame and landmark counts differ");
  InferResult out;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    LandmarkSet lm = landmarks[i];
    if (lm.valid) lm = verify_landmarks(lm, config.verify);
    out.landmarks.push_back(lm);
    out.processed.push_back(process_frame(frames[i], lm, config));
  }
  return out;
}

}  // namespace usspine
