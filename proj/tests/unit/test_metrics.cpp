#include <cmath>

#include "doctest.h"
#include "rarunet/metrics.hpp"
#include "unit/mask_oracles.hpp"

using namespace rarunet;

namespace {

BinaryMask square(int size, int y0, int x0, int side) {
  BinaryMask m(size, size);
  for (int y = y0; y < y0 + side; ++y)
    for (int x = x0; x < x0 + side; ++x) m.set(y, x, true);
  return m;
}

}  // namespace

TEST_CASE("confusion counts") {
  const BinaryMask g = oracle::mask_from({"##..", "##..", "..#.", "...."});
  const BinaryMask m = oracle::mask_from({"#...", "##.#", "....", "...."});
  auto c = confusion(g, g);
  CHECK(c.fp == 0);
  CHECK(c.fn == 0);
  c = confusion(complement(g), g);
  CHECK(c.tp == 0);
  CHECK(c.tn == 0);
  c = confusion(m, g);
  CHECK(c.tp == 3);
  CHECK(c.fp == 1);
  CHECK(c.fn == 2);
  CHECK(c.tn == 10);
  CHECK(c.total() == 16);
  CHECK_THROWS_AS(confusion(m, BinaryMask(4, 5)), Error);
}

TEST_CASE("overlap metrics") {
  auto perfect = overlap_metrics(Confusion{5, 0, 0, 11});
  for (double v : {perfect.dice, perfect.iou, perfect.accuracy, perfect.precision, perfect.recall,
                   perfect.specificity}) {
    CHECK(v == 1.0);
  }
  auto o = overlap_metrics(Confusion{2, 1, 1, 12});
  CHECK(o.dice == doctest::Approx(4.0 / 6.0));
  CHECK(o.iou == doctest::Approx(0.5));
  CHECK(o.dice == doctest::Approx(2 * o.iou / (1 + o.iou)));
  CHECK(o.accuracy == doctest::Approx(14.0 / 16.0));
  CHECK(o.precision == doctest::Approx(2.0 / 3.0));
  CHECK(o.recall == doctest::Approx(2.0 / 3.0));
  CHECK(o.specificity == doctest::Approx(12.0 / 13.0));
  auto empty = overlap_metrics(Confusion{0, 0, 0, 16});
  CHECK(empty.dice == 1.0);
  CHECK(empty.iou == 1.0);
  CHECK(empty.precision == 1.0);
  CHECK(empty.recall == 1.0);
}

TEST_CASE("boundary extraction") {
  BinaryMask dot(5, 5);
  dot.set(2, 3, true);
  CHECK(boundary(dot) == std::vector<Pixel>{{2, 3}});
  const auto sq = boundary(square(10, 3, 3, 4));
  CHECK(sq.size() == 12);
  BinaryMask full(4, 6);
  for (auto& b : full.bits) b = 1;
  for (auto [y, x] : boundary(full)) CHECK((y == 0 || x == 0 || y == 3 || x == 5));
  CHECK(boundary(full).size() == 16);
  CHECK(boundary(BinaryMask(3, 3)).empty());
}

TEST_CASE("distance metrics") {
  const BinaryMask g = square(12, 2, 2, 5);
  CHECK(hausdorff(g, g) == 0.0);
  CHECK(assd(g, g) == 0.0);
  BinaryMask a(8, 8), b(8, 8);
  a.set(0, 0, true);
  b.set(3, 4, true);
  CHECK(hausdorff(a, b) == doctest::Approx(5.0));
  CHECK(assd(a, b) == doctest::Approx(5.0));
  CHECK_THROWS_AS(hausdorff(a, BinaryMask(8, 8)), Error);
  try {
    assd(BinaryMask(8, 8), b);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUndefinedMetric);
  }
}

TEST_CASE("relative volume difference") {
  const BinaryMask g = oracle::mask_from({"##", "##"});
  CHECK(rvd(g, g) == 0.0);
  CHECK(rvd(oracle::mask_from({"##", "#."}), g) == doctest::Approx(0.25));
  CHECK(rvd(BinaryMask(2, 2), g) == 1.0);
  CHECK_THROWS_AS(rvd(g, BinaryMask(2, 2)), Error);
}

TEST_CASE("local and boundary Dice") {
  const BinaryMask g = square(8, 2, 2, 3);
  CHECK(local_dice(g, g, 2, 2) == 1.0);
  CHECK(local_dice(BinaryMask(8, 8), g, 2, 2) == 0.0);
  // Neighbourhood of (2, 2): G covers centre, right and down (3 pixels); M
  // covers centre and right only.
  const BinaryMask gt = oracle::mask_from({".....", ".....", "..##.", "..#..", "....."});
  const BinaryMask pred = oracle::mask_from({".....", ".....", "..##.", ".....", "....."});
  CHECK(local_dice(pred, gt, 2, 2) == doctest::Approx(0.8));
  CHECK(local_dice(gt, gt, 0, 0) == 1.0);  // both restrictions empty
  CHECK_THROWS_AS(local_dice(gt, gt, 5, 0), Error);

  CHECK(dbd(g, g) == 1.0);
  CHECK(sbd(g, g) == 1.0);
  const BinaryMask far = square(20, 15, 15, 3), near = square(20, 0, 0, 3);
  CHECK(dbd(far, near) == 0.0);
  CHECK(sbd(far, near) == 0.0);

  const BinaryMask s = square(10, 3, 3, 4), shifted = square(10, 3, 4, 4);
  const auto ref = oracle::metrics(shifted, s);
  CHECK(dbd(s, shifted) == doctest::Approx(*ref[9]).epsilon(1e-12));
  CHECK(dbd(shifted, s) == doctest::Approx(*ref[10]).epsilon(1e-12));
  CHECK(sbd(shifted, s) == doctest::Approx(*ref[11]).epsilon(1e-12));
  // Equal boundary sizes weight both directions equally.
  CHECK(sbd(shifted, s) == doctest::Approx((dbd(s, shifted) + dbd(shifted, s)) / 2));
  CHECK_THROWS_AS(dbd(BinaryMask(3, 3), g), Error);
}

TEST_CASE("evaluate agrees with the brute-force oracle on random pairs") {
  Rng rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const int h = 1 + static_cast<int>(rng.below(16)), w = 1 + static_cast<int>(rng.below(16));
    const BinaryMask m = trial % 3 ? oracle::random_blocky_mask(h, w, rng) : oracle::random_mask(h, w, rng, 0.3);
    const BinaryMask g = trial % 2 ? oracle::random_blocky_mask(h, w, rng) : oracle::random_mask(h, w, rng, 0.4);
    const MetricReport r = evaluate(m, g);
    const auto ref = oracle::metrics(m, g);
    for (std::size_t i = 0; i < 12; ++i) {
      CAPTURE(MetricReport::kFields[i]);
      REQUIRE(r.values[i].has_value() == ref[i].has_value());
      if (ref[i]) CHECK(std::abs(*r.values[i] - *ref[i]) <= 1e-9);
    }
    if (r["hd"]) {
      CHECK(*r["assd"] <= *r["hd"] + 1e-12);
      CHECK(hausdorff(g, m) == doctest::Approx(*r["hd"]));
      CHECK(sbd(g, m) == doctest::Approx(*r["sbd"]));
    }
    if (r["sbd"]) {
      CHECK(*r["sbd"] >= std::min(*r["dbd_g"], *r["dbd_m"]) - 1e-12);
      CHECK(*r["sbd"] <= std::max(*r["dbd_g"], *r["dbd_m"]) + 1e-12);
    }
    CHECK(*r["dice"] == doctest::Approx(2 * *r["iou"] / (1 + *r["iou"])));
  }
}

TEST_CASE("metric report JSON and aggregation") {
  MetricReport a, b;
  a["dice"] = 0.5;
  b["dice"] = 1.0;
  b["hd"] = 2.0;
  const MetricReport mean = aggregate({a, b});
  CHECK(*mean["dice"] == doctest::Approx(0.75));
  CHECK(*mean["hd"] == doctest::Approx(2.0));
  CHECK_FALSE(mean["iou"].has_value());
  const std::string json = mean.to_json();
  CHECK(json.find("\"dice\": 0.7500") != std::string::npos);
  CHECK(json.find("\"hd\": 2.0000") != std::string::npos);
  CHECK(json.find("\"iou\": null") != std::string::npos);
  std::size_t keys = 0;
  for (char ch : json) keys += ch == ':';
  CHECK(keys == 12);
  CHECK_THROWS_AS(mean["volume"], Error);
}
