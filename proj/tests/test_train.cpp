#include <doctest.h>

#include <cmath>

#include "usspine/image.hpp"
#include "usspine/phantom.hpp"
#include "usspine/train.hpp"

using namespace usspine;

namespace {

ShnConfig tiny_net() {
  ShnConfig c;
  c.channels = 8;
  c.hourglass_depth = 2;
  c.input_size = 64;
  c.heatmap_size = 16;
  return c;
}

TrainConfig tiny_train() {
  TrainConfig t;
  t.schedule = {{2, 1e-3}};
  t.batch_size = 2;
  t.target.side = 16;
  t.target.scale = {640.0 / 16, 480.0 / 16};
  t.target.sigma = 1.0;
  return t;
}

}  // namespace

TEST_SUITE("train") {
  TEST_CASE("default schedule is two phases of 500 epochs") {
    const TrainConfig t;
    CHECK(t.total_epochs() == 1000);
    CHECK(t.lr_for_epoch(1) == 1e-5);
    CHECK(t.lr_for_epoch(500) == 1e-5);
    CHECK(t.lr_for_epoch(501) == 1e-7);
    CHECK(t.lr_for_epoch(1000) == 1e-7);
    CHECK_THROWS(t.lr_for_epoch(1001));
    CHECK_THROWS(t.lr_for_epoch(0));
  }

  TEST_CASE("horizontal flip mirrors x about the last column and swaps lamina slots") {
    LandmarkSet s;
    s[Landmark::LA0] = {60, 220};
    s[Landmark::LA1] = {90, 210};
    s[Landmark::SP] = {100, 100};
    s[Landmark::LA2] = {130, 210};
    s[Landmark::LA3] = {170, 230};
    s.valid = true;
    const LandmarkSet f = warp_landmarks(s, FrameWarp{0.0, true});
    CHECK(f[Landmark::SP].x == 539.0);
    CHECK(f[Landmark::SP].y == 100.0);
    CHECK(f[Landmark::LA0].x == 639.0 - 170.0);
    CHECK(f[Landmark::LA3].x == 639.0 - 60.0);
    CHECK(f[Landmark::LA1].x == 639.0 - 130.0);
    CHECK(verify_landmarks(f).valid);
  }

  TEST_CASE("warp inverse undoes forward") {
    for (const FrameWarp w : {FrameWarp{17.0, false}, FrameWarp{-12.5, true}, FrameWarp{0.0, true}}) {
      const Point2 p{123.25, 301.5};
      const Point2 q = w.inverse(w.forward(p, 640, 480), 640, 480);
      CHECK(q.x == doctest::Approx(p.x).epsilon(1e-12));
      CHECK(q.y == doctest::Approx(p.y).epsilon(1e-12));
    }
    const Point2 c = FrameWarp{33.0, false}.forward({319.5, 239.5}, 640, 480);
    CHECK(c.x == doctest::Approx(319.5));
    CHECK(c.y == doctest::Approx(239.5));
  }

  TEST_CASE("augmentation keeps every landmark in the frame and is seeded") {
    const auto frames = render_training_frames(20, 3);
    const TrainConfig cfg;
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const Augmentation a = draw_augmentation(frames[i].landmarks, cfg, i);
      const Augmentation b = draw_augmentation(frames[i].landmarks, cfg, i);
      CHECK(a.landmarks == b.landmarks);
      CHECK(std::abs(a.warp.rotation_deg) <= cfg.rotation_deg);
      for (const auto& p : a.landmarks.points) {
        CHECK(p.x >= 0.0);
        CHECK(p.x <= 639.0);
        CHECK(p.y >= 0.0);
        CHECK(p.y <= 479.0);
      }
    }
  }

  TEST_CASE("network input is a log-scaled square in [0, 1]") {
    const auto& table = log_intensity_table();
    CHECK(table[0] == 0.0);
    CHECK(table[255] == doctest::Approx(255.0).epsilon(1e-12));
    CHECK(table[15] == doctest::Approx(255.0 * std::log(16.0) / std::log(256.0)).epsilon(1e-12));
    const auto frames = render_training_frames(1, 4);
    const Tensor x = input_tensor(frames[0].frame, 256, FrameWarp{10.0, true});
    CHECK(x.shape() == Shape({1, 1, 256, 256}));
    for (double v : x.data()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    GrayImage white(640, 480, 255);
    const auto full = network_input(white, 64);
    CHECK(full[32 * 64 + 32] == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("training logs one row per epoch and repeats exactly") {
    const auto frames = render_training_frames(5, 6);
    auto run = [&] {
      ShnWeights w = build_shn(tiny_net(), 1);
      int callbacks = 0;
      const auto log = train_shn(w, frames, tiny_train(), 9, [&](const EpochLog&, const ShnWeights&) { ++callbacks; });
      CHECK(callbacks == 2);
      return std::pair{log, w};
    };
    const auto [log1, w1] = run();
    const auto [log2, w2] = run();
    REQUIRE(log1.size() == 2);
    CHECK(log1[0].epoch == 1);
    CHECK(log1[1].epoch == 2);
    CHECK(log1[0].lr == 1e-3);
    for (std::size_t i = 0; i < 2; ++i) CHECK(log1[i].mean_loss == log2[i].mean_loss);
    for (std::size_t p = 0; p < w1.params().size(); ++p) CHECK(w1.params()[p].value.data()[0] == w2.params()[p].value.data()[0]);
    const ShnWeights fresh = build_shn(tiny_net(), 1);
    CHECK(fresh.params()[0].value[0] != w1.params()[0].value[0]);
  }

  TEST_CASE("training refuses unusable inputs") {
    ShnWeights w = build_shn(tiny_net(), 1);
    std::vector<LabeledFrame> gaps(3);
    for (auto& g : gaps) g.frame = GrayImage(640, 480);
    CHECK_THROWS_AS(train_shn(w, gaps, tiny_train(), 1), std::invalid_argument);
    const auto frames = render_training_frames(2, 6);
    TrainConfig wrong = tiny_train();
    wrong.target.side = 64;
    CHECK_THROWS_AS(train_shn(w, frames, wrong, 1), std::invalid_argument);
  }

  TEST_CASE("pgm round trip") {
    GrayImage img(7, 3);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 11);
    const auto path = std::filesystem::temp_directory_path() / "usspine_test_image.pgm";
    write_pgm(path, img);
    CHECK(read_pgm(path) == img);
    std::filesystem::remove(path);
  }
}
