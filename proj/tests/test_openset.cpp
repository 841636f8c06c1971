#include <cmath>

#include "doctest.h"
#include "maskscope/openset.h"
#include "maskscope/rng.h"
#include "maskscope/selfcheck.h"

using namespace maskscope;

TEST_SUITE_BEGIN("openset");

namespace {

Taxonomy demo_taxonomy() {
  Taxonomy tax;
  tax.things = {0, 1};
  tax.stuff = {2, 3};
  tax.road = 2;
  tax.unknown_id = 4;
  return tax;
}

}  // namespace

TEST_CASE("threshold_at_tpr worked examples") {
  CHECK(threshold_at_tpr({0.9, 0.8}, {1, 1}, 0.95) == doctest::Approx(0.8));
  CHECK(threshold_at_tpr({0.7}, {1}, 0.95) == doctest::Approx(0.7));
  // Separable scores: the threshold sits above every negative.
  const double tau = threshold_at_tpr({0.9, 0.8, 0.75, 0.2, 0.1}, {1, 1, 1, 0, 0}, 0.95);
  CHECK(tau == doctest::Approx(0.75));
  CHECK_THROWS_AS(threshold_at_tpr({0.5}, {0}, 0.95), ValidationError);
}

TEST_CASE("oss labeling overrides anomalous pixels with label Z") {
  Prediction p;
  p.class_logits = Tensor({1, 3});
  p.class_logits(0, 0) = 8.0;
  p.mask_logits = Tensor({1, 1, 2}, {8.0, -8.0});  // covers pixel 0 only
  const LabelMap labels = oss_inference(p, 0.8);
  CHECK(labels.labels[0] == 0);  // confidently class 0
  CHECK(labels.labels[1] == 2);  // uncovered pixel scores ~1, above 0.8

  // An unreachable threshold reproduces the closed-set labels exactly.
  const LabelMap closed = oss_inference(p, 2.0);
  const Segmentation seg = segment_map(p);
  CHECK(closed == seg.labels);
}

TEST_CASE("background region worked values") {
  // One fully confident known mask on the left half.
  KnownSubset k;
  k.class_logits = Tensor({1, 2});
  k.class_logits(0, 0) = 200.0;
  k.mask_logits = Tensor({1, 1, 2}, {500.0, -500.0});
  k.query_indices = {0};
  const ScoreMap b = background_region(k);
  CHECK(b.values(0, 0) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(b.values(0, 1) == doctest::Approx(1.0).epsilon(1e-9));

  // Empty subset: background everywhere.
  KnownSubset empty;
  empty.class_logits = Tensor({0, 2});
  empty.mask_logits = Tensor({0, 1, 2});
  for (double v : background_region(empty).values.data) CHECK(v == 1.0);

  // Confidence 0.8 with mask probability 0.5 leaves 0.6.
  KnownSubset partial;
  partial.class_logits = Tensor({1, 2}, {std::log(4.0), 0.0});  // softmax = [0.8, 0.2]
  partial.mask_logits = Tensor::zeros({1, 1, 1});
  const ScoreMap pb = background_region(partial);
  CHECK(pb.values(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("background stays within [0, 1] on random subsets") {
  for (std::uint64_t seed = 70; seed < 90; ++seed) {
    Rng rng(seed);
    const std::size_t n = 1 + rng.index(6);
    KnownSubset k;
    k.class_logits = Tensor({n, 4});
    for (double& v : k.class_logits.data) v = 3.0 * rng.normal();
    k.mask_logits = Tensor({n, 5, 5});
    for (double& v : k.mask_logits.data) v = 3.0 * rng.normal();
    for (double v : background_region(k).values.data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("connected components worked examples") {
  CHECK(connected_components(Tensor({1, 3}, {1.0, 0.0, 1.0})).count == 2);

  const Tensor diagonal({2, 2}, {1.0, 0.0, 0.0, 1.0});
  CHECK(connected_components(diagonal, 8).count == 1);
  CHECK(connected_components(diagonal, 4).count == 2);

  CHECK(connected_components(Tensor::zeros({4, 4})).count == 0);
}

TEST_CASE("component ids follow raster discovery order") {
  const Tensor map({2, 4}, {0.0, 1.0, 0.0, 1.0,
                            0.0, 1.0, 0.0, 1.0});
  const ComponentSet cc = connected_components(map, 4);
  REQUIRE(cc.count == 2);
  CHECK(cc.labels[1] == 1);
  CHECK(cc.labels[3] == 2);
}

TEST_CASE("connected components match flood fill and survive transposition") {
  for (std::uint64_t trial = 0; trial < 60; ++trial) {
    Rng rng(700 + trial);
    const int connectivity = trial % 2 == 0 ? 8 : 4;
    Tensor map({16, 16});
    const double fill = rng.uniform(0.2, 0.7);
    for (double& v : map.data) v = rng.uniform() < fill ? 1.0 : 0.0;
    const ComponentSet cc = connected_components(map, connectivity);
    CHECK(cc.count == reference_flood_fill_count(map, connectivity));

    Tensor transposed({16, 16});
    for (std::size_t r = 0; r < 16; ++r)
      for (std::size_t c = 0; c < 16; ++c) transposed(c, r) = map(r, c);
    CHECK(connected_components(transposed, connectivity).count == cc.count);
  }
}

TEST_CASE("connected components validate input") {
  CHECK_THROWS_AS(connected_components(Tensor::full({2, 2}, 0.5)), ValidationError);
  CHECK_THROWS_AS(connected_components(Tensor::zeros({2, 2}), 6), ValidationError);
}

TEST_CASE("mining reproduces the worked entropy decisions") {
  const Taxonomy tax = demo_taxonomy();
  auto scene = [&](const std::vector<double>& probs) {
    Prediction p;
    p.class_logits = Tensor({1, 5});
    for (std::size_t c = 0; c < 4; ++c) p.class_logits(0, c) = std::log(probs[c]);
    p.mask_logits = Tensor({1, 8, 8});
    for (std::size_t r = 0; r < 8; ++r)
      for (std::size_t c = 0; c < 8; ++c) p.mask_logits(0, r, c) = c < 4 ? 10.0 : -10.0;
    return p;
  };

  const Tensor background = Tensor::full({8, 8}, 1.0);
  {
    const MiningResult res =
        mine_unknown_instances(background, scene({0.45, 0.05, 0.25, 0.25}), tax);
    REQUIRE(res.decisions.size() == 1);
    CHECK(res.decisions[0].stuff_entropy == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    CHECK(res.decisions[0].things_entropy ==
          doctest::Approx(-(0.9 * std::log(0.9) + 0.1 * std::log(0.1))).epsilon(1e-9));
    CHECK(res.decisions[0].stuff_entropy == doctest::Approx(0.693).epsilon(1e-3));
    CHECK(res.decisions[0].things_entropy == doctest::Approx(0.325).epsilon(1e-3));
    CHECK(res.decisions[0].is_unknown);
    REQUIRE(res.unknown_masks.size() == 1);
  }
  {
    const MiningResult res =
        mine_unknown_instances(background, scene({0.4, 0.4, 0.15, 0.05}), tax);
    REQUIRE(res.decisions.size() == 1);
    CHECK(res.decisions[0].things_entropy == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    CHECK(res.decisions[0].stuff_entropy ==
          doctest::Approx(-(0.75 * std::log(0.75) + 0.25 * std::log(0.25))).epsilon(1e-9));
    CHECK(res.decisions[0].stuff_entropy == doctest::Approx(0.562).epsilon(1e-3));
    CHECK(!res.decisions[0].is_unknown);
    CHECK(res.unknown_masks.empty());
  }
  {
    // No mask reaches the overlap bar: no decision at all.
    Prediction p = scene({0.45, 0.05, 0.25, 0.25});
    p.mask_logits = Tensor::full({1, 8, 8}, -10.0);
    const MiningResult res = mine_unknown_instances(background, p, tax);
    CHECK(res.decisions.empty());
    CHECK(res.unknown_masks.empty());
  }
}

TEST_CASE("mining decisions are invariant to shifting class logits") {
  const Taxonomy tax = demo_taxonomy();
  Rng rng(71);
  Prediction p;
  p.class_logits = Tensor({2, 5});
  for (double& v : p.class_logits.data) v = rng.normal();
  p.mask_logits = Tensor({2, 8, 8});
  for (std::size_t q = 0; q < 2; ++q)
    for (std::size_t r = 0; r < 8; ++r)
      for (std::size_t c = 0; c < 8; ++c) p.mask_logits(q, r, c) = c < 4 ? 6.0 : -6.0;
  MiningConfig cfg;
  cfg.iou_min = 0.4;
  const Tensor background = Tensor::full({8, 8}, 1.0);
  const MiningResult base = mine_unknown_instances(background, p, tax, cfg);

  for (std::size_t c = 0; c < 5; ++c) p.class_logits(0, c) += 3.25;
  const MiningResult shifted = mine_unknown_instances(background, p, tax, cfg);
  REQUIRE(base.decisions.size() == shifted.decisions.size());
  for (std::size_t i = 0; i < base.decisions.size(); ++i) {
    CHECK(base.decisions[i].is_unknown == shifted.decisions[i].is_unknown);
    CHECK(base.decisions[i].stuff_entropy ==
          doctest::Approx(shifted.decisions[i].stuff_entropy).epsilon(1e-9));
  }
}

TEST_CASE("mining filters by area and requires both taxonomy sides") {
  const Taxonomy tax = demo_taxonomy();
  Prediction p;
  p.class_logits = Tensor({1, 5});
  p.mask_logits = Tensor::full({1, 4, 4}, 10.0);
  Tensor small_bg({4, 4});
  small_bg(0, 0) = 1.0;  // a single-pixel component, below min_area
  const MiningResult res = mine_unknown_instances(small_bg, p, tax);
  CHECK(res.kept_component_ids.empty());

  Taxonomy no_stuff = tax;
  no_stuff.stuff.clear();
  no_stuff.things = {0, 1, 2, 3};
  CHECK_THROWS_AS(mine_unknown_instances(small_bg, p, no_stuff), ValidationError);
}

TEST_CASE("top-k keeps the largest components") {
  const Taxonomy tax = demo_taxonomy();
  Prediction p;
  p.class_logits = Tensor({1, 5});
  p.mask_logits = Tensor::full({1, 6, 20}, -10.0);
  // Three separated blocks of sizes 24, 18, 6 in one row band.
  Tensor bg({6, 20});
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t c = 0; c < 4; ++c) bg(r, c) = 1.0;           // 24 px
    for (std::size_t c = 6; c < 9; ++c) bg(r, c) = 1.0;           // 18 px
    if (r < 1) {
      for (std::size_t c = 11; c < 17; ++c) bg(r, c) = 1.0;       // 6 px
    }
  }
  MiningConfig cfg;
  cfg.top_k = 2;
  cfg.min_area = 1;
  const MiningResult res = mine_unknown_instances(bg, p, tax, cfg);
  REQUIRE(res.kept_component_ids.size() == 2);
  CHECK(res.components.pixels[res.kept_component_ids[0] - 1].size() == 24);
  CHECK(res.components.pixels[res.kept_component_ids[1] - 1].size() == 18);
}

TEST_CASE("union-op cap splits components deterministically") {
  // A U shape needs one merge; with a zero budget the two arms stay apart.
  Tensor map({2, 3}, {1.0, 0.0, 1.0,
                      1.0, 1.0, 1.0});
  CHECK(connected_components(map, 4).count == 1);
  CHECK(connected_components(map, 4, 0).count == 2);
}

TEST_CASE("panoptic assembly paints by confidence and clips unknowns") {
  const Taxonomy tax = demo_taxonomy();
  Prediction p;
  p.class_logits = Tensor({2, 5});
  p.class_logits(0, 0) = 6.0;  // thing, very confident
  p.class_logits(1, 1) = 2.0;  // thing, weaker
  p.mask_logits = Tensor({2, 1, 2}, {8.0, -8.0, 8.0, -8.0});  // both cover pixel 0 only
  const KnownSubset known = build_known_subset(p, tax, 0.5);
  REQUIRE(known.query_indices.size() == 2);

  Tensor unknown_a({1, 2});
  unknown_a(0, 1) = 1.0;
  Tensor unknown_b = unknown_a;  // overlapping later component gets clipped away
  const PanopticMap pan = assemble_panoptic(p, known, {unknown_a, unknown_b}, tax);
  CHECK(pan.class_ids[0] == 0);  // the stronger query owns the contested pixel
  CHECK(pan.class_ids[1] == tax.unknown_id);
  CHECK(pan.instance_ids[1] != 0);

  // No unknowns: plain panoptic output with one instance per thing query.
  const PanopticMap plain = assemble_panoptic(p, known, {}, tax);
  CHECK(plain.class_ids[1] == tax.void_id);
}

TEST_CASE("known subset applies the confidence floor") {
  const Taxonomy tax = demo_taxonomy();
  Prediction p;
  p.class_logits = Tensor({2, 5});
  p.class_logits(0, 0) = 6.0;               // confident
  // Query 1 stays nearly uniform: top posterior ~0.25, below the floor.
  p.mask_logits = Tensor::zeros({2, 2, 2});
  const KnownSubset k = build_known_subset(p, tax, 0.5);
  REQUIRE(k.query_indices.size() == 1);
  CHECK(k.query_indices[0] == 0);
  CHECK(k.class_logits.cols() == 4);  // no-object column dropped
}

TEST_SUITE_END();
