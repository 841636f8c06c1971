#include <cmath>

#include "doctest.h"
#include "maskscope/rng.h"
#include "maskscope/scoring.h"
#include "maskscope/selfcheck.h"

using namespace maskscope;

TEST_SUITE_BEGIN("scoring");

namespace {

Prediction single_query(std::vector<double> class_row, double mask_logit, std::size_t h = 1,
                        std::size_t w = 1) {
  Prediction p;
  const std::size_t cols = class_row.size();
  p.class_logits = Tensor({1, cols}, std::move(class_row));
  p.mask_logits = Tensor::full({1, h, w}, mask_logit);
  return p;
}

Taxonomy demo_taxonomy() {
  Taxonomy tax;
  tax.things = {0, 1};
  tax.stuff = {2, 3};
  tax.road = 2;
  tax.unknown_id = 4;
  return tax;
}

}  // namespace

TEST_CASE("marginal scores: symmetric two-class query gives 0.25") {
  // C = [[0, 0]] over Z = 2 (no-object column appended), all mask logits 0.
  const Prediction p = single_query({0.0, 0.0, 0.0}, 0.0, 2, 2);
  const Tensor s = marginal_class_scores(p);
  for (std::size_t i = 0; i < s.numel(); ++i) {
    CHECK(s.data[i] == doctest::Approx(0.25).epsilon(1e-12));
  }
}

TEST_CASE("marginal scores saturate to 1 for a confident query") {
  Prediction p = single_query({100.0, -100.0, 0.0}, -100.0, 1, 2);
  p.mask_logits(0, 0, 0) = 100.0;
  const Tensor s = marginal_class_scores(p);
  CHECK(s(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(s(0, 1) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("marginal scores sum query contributions beyond 1") {
  Prediction p;
  p.class_logits = Tensor({2, 3}, {100.0, -100.0, 0.0, 100.0, -100.0, 0.0});
  p.mask_logits = Tensor::full({2, 1, 1}, 100.0);
  const Tensor s = marginal_class_scores(p);
  CHECK(s(0, 0) == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("the no-object column never influences inference scores") {
  Rng rng(41);
  Prediction a;
  a.class_logits = Tensor({2, 4});
  for (double& v : a.class_logits.data) v = rng.normal();
  a.mask_logits = Tensor({2, 2, 2});
  for (double& v : a.mask_logits.data) v = rng.normal();
  Prediction b = a;
  b.class_logits(0, 3) += 50.0;
  b.class_logits(1, 3) -= 50.0;
  const Tensor sa = marginal_class_scores(a);
  const Tensor sb = marginal_class_scores(b);
  for (std::size_t i = 0; i < sa.numel(); ++i) CHECK(sa.data[i] == sb.data[i]);
}

TEST_CASE("segment_map picks the confident class everywhere") {
  Prediction p = single_query({100.0, -100.0, 0.0}, 5.0, 2, 2);
  const Segmentation seg = segment_map(p);
  for (std::uint16_t v : seg.labels.labels) CHECK(v == 0);
}

TEST_CASE("segment_map breaks exact ties toward the lowest class id") {
  const Prediction p = single_query({1.0, 1.0, 0.0}, 3.0, 2, 2);
  const Segmentation seg = segment_map(p);
  for (std::uint16_t v : seg.labels.labels) CHECK(v == 0);
}

TEST_CASE("segment_map equals a brute-force per-pixel loop") {
  Rng rng(42);
  Prediction p;
  p.class_logits = Tensor({3, 4});
  for (double& v : p.class_logits.data) v = 2.0 * rng.normal();
  p.mask_logits = Tensor({3, 3, 3});
  for (double& v : p.mask_logits.data) v = 2.0 * rng.normal();
  const Segmentation seg = segment_map(p);
  const Tensor ref = reference_marginal_scores(p);
  for (std::size_t i = 0; i < 9; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < 3; ++c) {
      if (ref(c, i) > ref(best, i)) best = c;
    }
    CHECK(seg.labels.labels[i] == best);
    CHECK(seg.confidence.values.data[i] == doctest::Approx(ref(best, i)).epsilon(1e-9));
  }
}

TEST_CASE("segment_map argmax is invariant to shifting a class-logit row") {
  Rng rng(43);
  Prediction p;
  p.class_logits = Tensor({2, 4});
  for (double& v : p.class_logits.data) v = rng.normal();
  p.mask_logits = Tensor({2, 2, 3});
  for (double& v : p.mask_logits.data) v = rng.normal();
  const Segmentation base = segment_map(p);
  for (std::size_t c = 0; c < 3; ++c) p.class_logits(0, c) += 2.5;
  const Segmentation shifted = segment_map(p);
  CHECK(base.labels == shifted.labels);
}

TEST_CASE("pixel MSP worked values") {
  Tensor scores({2, 1, 1}, {0.7, 0.3});
  CHECK(pixel_msp(scores).values(0, 0) == doctest::Approx(0.3).epsilon(1e-12));
  Tensor uniform({4, 1, 1}, {0.25, 0.25, 0.25, 0.25});
  CHECK(pixel_msp(uniform).values(0, 0) == doctest::Approx(0.75).epsilon(1e-12));
  Tensor three({3, 1, 1}, {0.5, 0.3, 0.2});
  CHECK(pixel_msp(three).values(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("pixel MSP rejects unnormalized stacks") {
  Tensor bad({2, 1, 1}, {0.7, 0.4});
  CHECK_THROWS_AS(pixel_msp(bad), ValidationError);
}

TEST_CASE("mask anomaly score worked values") {
  const Prediction p = single_query({0.0, 0.0, 0.0}, 0.0, 2, 2);
  for (double v : mask_anomaly_score(p).values.data) {
    CHECK(v == doctest::Approx(0.75).epsilon(1e-12));
  }

  const Prediction off = single_query({0.0, 0.0, 0.0}, -1e6, 1, 1);
  CHECK(mask_anomaly_score(off).values(0, 0) == doctest::Approx(1.0).epsilon(1e-9));

  Prediction stacked;
  stacked.class_logits = Tensor({2, 3}, {100.0, -100.0, 0.0, 100.0, -100.0, 0.0});
  stacked.mask_logits = Tensor::full({2, 1, 1}, 100.0);
  CHECK(mask_anomaly_score(stacked).values(0, 0) == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("anomaly score equals 1 - max marginal against brute force") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    Rng rng(440 + seed);
    const std::size_t n = 1 + rng.index(8), z = 2 + rng.index(5);
    const std::size_t h = 1 + rng.index(16), w = 1 + rng.index(16);
    Prediction p;
    p.class_logits = Tensor({n, z + 1});
    for (double& v : p.class_logits.data) v = 2.0 * rng.normal();
    p.mask_logits = Tensor({n, h, w});
    for (double& v : p.mask_logits.data) v = 3.0 * rng.normal();
    const ScoreMap f = mask_anomaly_score(p);
    const Tensor ref = reference_anomaly_map(p);
    for (std::size_t i = 0; i < f.values.numel(); ++i) {
      CHECK(std::abs(f.values.data[i] - ref.data[i]) < 1e-9);
    }
  }
}

TEST_CASE("refinement mask: default semantics") {
  const Taxonomy tax = demo_taxonomy();
  auto one_query_scene = [](double top_logit, std::size_t top_class) {
    Prediction p;
    p.class_logits = Tensor({1, 5});
    p.class_logits(0, top_class) = top_logit;
    p.mask_logits = Tensor::full({1, 1, 2}, 8.0);
    p.mask_logits(0, 0, 1) = -8.0;  // covers only pixel 0
    return p;
  };

  // Confident sky (stuff, not road) zeroes its segment.
  const double confident = std::log(0.99 / 0.01 * 3.0);
  const RefinementMask sky = refinement_mask(one_query_scene(confident, 3), tax);
  CHECK(sky.values(0, 0) == 0.0);
  CHECK(sky.values(0, 1) == 1.0);

  // Confident road is exempt.
  const RefinementMask road = refinement_mask(one_query_scene(confident, 2), tax);
  CHECK(road.values(0, 0) == 1.0);

  // A 0.90-confidence stuff mask stays below the 0.95 gate.
  const double mild = std::log(0.90 / 0.10 * 3.0);
  const RefinementMask weak = refinement_mask(one_query_scene(mild, 3), tax);
  CHECK(weak.values(0, 0) == 1.0);
}

TEST_CASE("refinement mask: literal product form") {
  const Taxonomy tax = demo_taxonomy();
  Prediction p;
  p.class_logits = Tensor({1, 5});
  p.class_logits(0, 0) = std::log(0.99 / 0.01 * 3.0);  // confident thing
  p.mask_logits = Tensor::full({1, 1, 2}, 8.0);
  p.mask_logits(0, 0, 1) = -8.0;
  RefinementConfig cfg;
  cfg.formula_literal = true;
  const RefinementMask literal = refinement_mask(p, tax, cfg);
  // The printed product keeps only pixels covered by a confident thing/road
  // mask; everything else becomes zero.
  CHECK(literal.values(0, 0) == 1.0);
  CHECK(literal.values(0, 1) == 0.0);
}

TEST_CASE("refinement mask validates taxonomy coverage") {
  Taxonomy tax = demo_taxonomy();
  const Prediction p = single_query({0.0, 0.0, 0.0, 0.0, 0.0, 0.0}, 0.0);  // Z = 5
  CHECK_THROWS_AS(refinement_mask(p, tax), ValidationError);
}

TEST_CASE("refine_scores is an exact Hadamard product") {
  const ScoreMap f{Tensor({1, 2}, {0.8, 0.6}), ScoreKind::AnomalyScore};
  const RefinementMask r{Tensor({1, 2}, {0.0, 1.0})};
  const ScoreMap refined = refine_scores(f, r);
  CHECK(refined.values(0, 0) == 0.0);
  CHECK(refined.values(0, 1) == 0.6);
  CHECK(refined.kind == ScoreKind::RefinedScore);

  const RefinementMask ones{Tensor::full({1, 2}, 1.0)};
  const ScoreMap same = refine_scores(f, ones);
  CHECK(same.values.data == f.values.data);

  const RefinementMask zeros{Tensor::zeros({1, 2})};
  for (double v : refine_scores(f, zeros).values.data) CHECK(v == 0.0);

  const RefinementMask wrong{Tensor::zeros({2, 2})};
  CHECK_THROWS_AS(refine_scores(f, wrong), ShapeError);
}

TEST_SUITE_END();
