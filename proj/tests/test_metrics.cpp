#include <doctest.h>

#include <cmath>

#include "metric_fixtures.hpp"
#include "usspine/metrics.hpp"
#include "usspine/rng.hpp"

using namespace usspine;
using namespace usspine::testing;

TEST_SUITE("metrics") {
  TEST_CASE("perfect predictions score 100 percent") {
    std::vector<LandmarkSet> truth{fixture_set(0), fixture_set(10), fixture_set(-20)};
    const PckResult r = pck(truth, truth);
    CHECK(r.total == 1.0);
    CHECK(r.frames_all_hit == 1.0);
    CHECK(r.n_frames == 3);
    for (double f : r.per_landmark) CHECK(f == 1.0);
  }

  TEST_CASE("a point exactly at the radius is a hit") {
    std::vector<LandmarkSet> truth{fixture_set(0)};
    std::vector<LandmarkSet> pred{fixture_set(0)};
    pred[0][Landmark::SP].x += 15.0;
    CHECK(pck(pred, truth).per_landmark[static_cast<std::size_t>(Landmark::SP)] == 1.0);
    CHECK(pck(pred, truth).total == 1.0);
    pred[0][Landmark::SP].x = 320.0 + 9.0;
    pred[0][Landmark::SP].y = 100.0 + 12.0;
    CHECK(pck(pred, truth).total == 1.0);
    pred[0][Landmark::SP].x += 1e-9;
    const PckResult miss = pck(pred, truth);
    CHECK(miss.per_landmark[static_cast<std::size_t>(Landmark::SP)] == 0.0);
    CHECK(miss.total == 0.8);
    CHECK(miss.frames_all_hit == 0.0);
  }

  TEST_CASE("hand-counted fixture") {
    std::vector<LandmarkSet> truth{fixture_set(0), fixture_set(0), fixture_set(0), fixture_set(0), fixture_set(0)};
    std::vector<LandmarkSet> pred = truth;
    pred[0][Landmark::SP].x += 20;   // SP miss
    pred[1][Landmark::LA0].y += 16;  // LA0 miss
    pred[2].valid = false;           // all five miss
    truth[3].valid = false;          // skipped
    pred[4][Landmark::LA3].x -= 14;  // hit
    const PckResult r = pck(pred, truth);
    CHECK(r.n_frames == 4);
    CHECK(r.per_landmark[static_cast<std::size_t>(Landmark::SP)] == 0.5);
    CHECK(r.per_landmark[static_cast<std::size_t>(Landmark::LA0)] == 0.5);
    CHECK(r.per_landmark[static_cast<std::size_t>(Landmark::LA1)] == 0.75);
    CHECK(r.per_landmark[static_cast<std::size_t>(Landmark::LA3)] == 0.75);
    CHECK(r.total == (0.5 + 0.5 + 0.75 + 0.75 + 0.75) / 5.0);
    CHECK(r.frames_all_hit == 0.25);
  }

  TEST_CASE("PCK is symmetric when both sides are valid") {
    Rng rng(4);
    std::vector<LandmarkSet> a, b;
    for (int i = 0; i < 50; ++i) {
      LandmarkSet s = fixture_set(rng.uniform(-50, 50)), t = s;
      for (auto& p : t.points) {
        p.x += rng.uniform(-20, 20);
        p.y += rng.uniform(-20, 20);
      }
      a.push_back(s);
      b.push_back(t);
    }
    const PckResult ab = pck(a, b), ba = pck(b, a);
    CHECK(ab.total == ba.total);
    CHECK(ab.per_landmark == ba.per_landmark);
  }

  TEST_CASE("PCK rejects misaligned inputs") {
    std::vector<LandmarkSet> one{fixture_set(0)}, two{fixture_set(0), fixture_set(0)};
    CHECK_THROWS_AS(pck(one, two), std::invalid_argument);
  }

  TEST_CASE("agreement statistics") {
    const std::vector<double> a{10, 20, 30}, b{10, 20, 30};
    const AgreementStats same = mad_sd(a, b);
    CHECK(same.mad == 0.0);
    CHECK(same.sd == 0.0);
    CHECK(same.max_diff == 0.0);
    CHECK(same.over_threshold == 0);

    const std::vector<double> x{5, 10}, y{4, 13};
    const AgreementStats d = mad_sd(x, y);
    CHECK(d.mad == 2.0);
    CHECK(d.sd == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(d.max_diff == 3.0);
    CHECK(mad_sd(x, y, 2.5).over_threshold == 1);
    CHECK_THROWS_AS(mad_sd(std::vector<double>{1}, std::vector<double>{1}), std::invalid_argument);
    CHECK_THROWS_AS(mad_sd(x, std::vector<double>{1, 2, 3}), std::invalid_argument);
  }

  TEST_CASE("agreement is invariant to pair order") {
    std::vector<double> a = kPairA, b = kPairB;
    const AgreementStats s1 = mad_sd(a, b);
    std::reverse(a.begin(), a.end());
    std::reverse(b.begin(), b.end());
    const AgreementStats s2 = mad_sd(a, b);
    CHECK(s1.mad == doctest::Approx(s2.mad).epsilon(1e-15));
    CHECK(s1.sd == doctest::Approx(s2.sd).epsilon(1e-15));
    CHECK(s1.max_diff == s2.max_diff);
  }

  TEST_CASE("Pearson correlation") {
    const std::vector<double> a{1, 2, 4, 7, 11};
    std::vector<double> up, down;
    for (double v : a) {
      up.push_back(2 * v + 1);
      down.push_back(-v);
    }
    CHECK(pearson(a, up) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(pearson(a, down) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(std::abs(pearson(kPairA, kPairB) - two_pass_pearson(kPairA, kPairB)) <= 1e-12);
    CHECK_THROWS_AS(pearson(a, std::vector<double>(5, 3.0)), std::invalid_argument);
    CHECK_THROWS_AS(pearson(std::vector<double>{1, 2}, std::vector<double>{2, 1}), std::invalid_argument);
  }

  TEST_CASE("Pearson is invariant to positive affine maps and permutation") {
    std::vector<double> a = kPairA, b = kPairB;
    const double r = pearson(a, b);
    std::vector<double> a2;
    for (double v : a) a2.push_back(3.5 * v - 100.0);
    CHECK(pearson(a2, b) == doctest::Approx(r).epsilon(1e-12));
    std::rotate(a.begin(), a.begin() + 3, a.end());
    std::rotate(b.begin(), b.begin() + 3, b.end());
    CHECK(pearson(a, b) == doctest::Approx(r).epsilon(1e-12));
  }

  TEST_CASE("ICC(2,1) on fixtures") {
    const std::vector<std::vector<double>> same{{1, 1}, {4, 4}, {9, 9}, {2, 2}};
    CHECK(icc_2_1(same) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::abs(icc_2_1(kRatings) - two_pass_icc(kRatings)) <= 1e-12);
    CHECK(icc_2_1(kRatings) == doctest::Approx(0.28976).epsilon(1e-4));
    CHECK_THROWS_AS(icc_2_1({{1, 2}, {3}}), std::invalid_argument);
    CHECK_THROWS_AS(icc_2_1({{1, 2}}), std::invalid_argument);
    CHECK_THROWS_AS(icc_2_1({{1}, {2}}), std::invalid_argument);
  }

  TEST_CASE("ICC is near zero when one rater is swamped by noise") {
    Rng rng(6);
    std::vector<std::vector<double>> m;
    for (int i = 0; i < 200; ++i) {
      const double t = rng.normal();
      m.push_back({t, t + 10.0 * rng.normal()});
    }
    CHECK(icc_2_1(m) < 0.2);
  }

  TEST_CASE("ICC is invariant to target and rater permutation") {
    const double base = icc_2_1(kRatings);
    auto rows = kRatings;
    std::reverse(rows.begin(), rows.end());
    CHECK(icc_2_1(rows) == doctest::Approx(base).epsilon(1e-12));
    auto cols = kRatings;
    for (auto& r : cols) std::rotate(r.begin(), r.begin() + 1, r.end());
    CHECK(icc_2_1(cols) == doctest::Approx(base).epsilon(1e-12));
  }

  TEST_CASE("report tables mention every landmark") {
    const std::vector<LandmarkSet> t{fixture_set(0)};
    const std::string table = format_pck_table(pck(t, t));
    for (const char* name : {"SP", "LA0", "LA1", "LA2", "LA3"}) CHECK(table.find(name) != std::string::npos);
    CHECK(format_agreement_table(mad_sd(kPairA, kPairB), 0.9).find("MAD") != std::string::npos);
  }
}
