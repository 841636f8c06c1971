#include <cmath>
#include <functional>

#include "doctest.h"
#include "maskscope/attention.h"
#include "maskscope/losses.h"
#include "maskscope/rng.h"
#include "maskscope/selfcheck.h"

using namespace maskscope;

TEST_SUITE_BEGIN("losses");

namespace {

Prediction random_prediction(Rng& rng, std::size_t n, std::size_t z, std::size_t h,
                             std::size_t w) {
  Prediction p;
  p.class_logits = Tensor({n, z + 1});
  for (double& v : p.class_logits.data) v = 1.5 * rng.normal();
  p.mask_logits = Tensor({n, h, w});
  for (double& v : p.mask_logits.data) v = 1.5 * rng.normal();
  return p;
}

}  // namespace

TEST_CASE("mask loss worked values") {
  // Zero logits against an all-ones target: BCE is ln 2.
  const MaskLossTerms flat = bce_dice_mask_loss(Tensor::zeros({2, 2}), Tensor::full({2, 2}, 1.0));
  CHECK(flat.bce == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // Saturated correct prediction: dice vanishes.
  Tensor logits({1, 2}, {500.0, -500.0});
  Tensor gt({1, 2}, {1.0, 0.0});
  const MaskLossTerms sat = bce_dice_mask_loss(logits, gt);
  CHECK(sat.dice == doctest::Approx(0.0).epsilon(1e-7));

  // Probabilities [1, 0] against [1, 1]: dice = 1 - 2/3.
  Tensor half_gt({1, 2}, {1.0, 1.0});
  const MaskLossTerms third = bce_dice_mask_loss(logits, half_gt);
  CHECK(third.dice == doctest::Approx(1.0 / 3.0).epsilon(1e-7));
  CHECK(third.masks == doctest::Approx(5.0 * third.bce + 5.0 * third.dice).epsilon(1e-12));
}

TEST_CASE("mask loss rejects non-binary targets") {
  CHECK_THROWS_AS(bce_dice_mask_loss(Tensor::zeros({1, 2}), Tensor::full({1, 2}, 0.5)),
                  ValidationError);
}

TEST_CASE("hungarian worked example and determinism") {
  const MatchResult m = hungarian_assign(Tensor({2, 2}, {1.0, 2.0, 2.0, 4.0}));
  REQUIRE(m.pairs.size() == 2);
  CHECK(m.pairs[0] == std::pair<std::size_t, std::size_t>{0, 1});
  CHECK(m.pairs[1] == std::pair<std::size_t, std::size_t>{1, 0});
  CHECK(m.total_cost == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("hungarian prefers the diagonal when it is cheapest") {
  const MatchResult m =
      hungarian_assign(Tensor({3, 3}, {0.0, 5.0, 5.0, 5.0, 0.0, 5.0, 5.0, 5.0, 0.0}));
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(m.pairs[i] == std::pair<std::size_t, std::size_t>{i, i});
  }
}

TEST_CASE("hungarian ties resolve to the lexicographically smallest pairs") {
  // All-equal costs: every assignment is optimal, so (0,0),(1,1) must win.
  const MatchResult m = hungarian_assign(Tensor::full({3, 2}, 1.0));
  REQUIRE(m.pairs.size() == 2);
  CHECK(m.pairs[0] == std::pair<std::size_t, std::size_t>{0, 0});
  CHECK(m.pairs[1] == std::pair<std::size_t, std::size_t>{1, 1});
  REQUIRE(m.unmatched_predictions.size() == 1);
  CHECK(m.unmatched_predictions[0] == 2);
}

TEST_CASE("hungarian matches exhaustive enumeration on random rectangles") {
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    Rng rng(500 + trial);
    const std::size_t n_pred = 1 + rng.index(6);
    const std::size_t n_gt = 1 + rng.index(n_pred);
    Tensor cost({n_pred, n_gt});
    for (double& v : cost.data) v = rng.uniform(0.0, 10.0);
    const MatchResult m = hungarian_assign(cost);
    CHECK(m.pairs.size() == n_gt);
    CHECK(m.total_cost ==
          doctest::Approx(reference_min_assignment_cost(cost)).epsilon(1e-9));
    std::vector<char> gt_seen(n_gt, 0);
    for (const auto& [i, j] : m.pairs) {
      CHECK(!gt_seen[j]);
      gt_seen[j] = 1;
    }
  }
}

TEST_CASE("hungarian tie-break equals brute-force lexicographic minimum") {
  // Quantized costs make optima collide, exercising the tie-break rule.
  for (std::uint64_t trial = 0; trial < 200; ++trial) {
    Rng rng(900 + trial);
    const std::size_t n_pred = 1 + rng.index(5);
    const std::size_t n_gt = 1 + rng.index(n_pred);
    Tensor cost({n_pred, n_gt});
    for (double& v : cost.data) v = static_cast<double>(rng.index(3));

    // Enumerate every injective assignment; keep the lexicographically
    // smallest pair list among those with minimum cost.
    std::vector<std::pair<std::size_t, std::size_t>> best_pairs;
    double best_cost = 1e300;
    std::vector<int> pred_of_gt(n_gt, -1);
    std::vector<char> used(n_pred, 0);
    std::function<void(std::size_t)> recurse = [&](std::size_t j) {
      if (j == n_gt) {
        double total = 0.0;
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        for (std::size_t g = 0; g < n_gt; ++g) {
          total += cost(pred_of_gt[g], g);
          pairs.emplace_back(pred_of_gt[g], g);
        }
        std::sort(pairs.begin(), pairs.end());
        if (total < best_cost - 1e-12 ||
            (std::abs(total - best_cost) <= 1e-12 && pairs < best_pairs)) {
          best_cost = total;
          best_pairs = pairs;
        }
        return;
      }
      for (std::size_t i = 0; i < n_pred; ++i) {
        if (used[i]) continue;
        used[i] = 1;
        pred_of_gt[j] = static_cast<int>(i);
        recurse(j + 1);
        used[i] = 0;
      }
    };
    recurse(0);

    const MatchResult m = hungarian_assign(cost);
    CHECK(m.total_cost == doctest::Approx(best_cost).epsilon(1e-9));
    CHECK(m.pairs == best_pairs);
  }
}

TEST_CASE("hungarian validates its inputs") {
  CHECK_THROWS_AS(hungarian_assign(Tensor({1, 2})), ValidationError);
  Tensor inf_cost({2, 2});
  inf_cost(0, 0) = kNegInf;
  CHECK_THROWS_AS(hungarian_assign(inf_cost), ValidationError);
}

TEST_CASE("training loss on saturated perfect predictions is nearly zero") {
  Prediction p;
  p.class_logits = Tensor({2, 3});
  p.class_logits(0, 0) = 60.0;
  p.class_logits(1, 1) = 60.0;
  p.mask_logits = Tensor({2, 1, 2}, {500.0, -500.0, -500.0, 500.0});
  const std::vector<GtInstance> gt = {{Tensor({1, 2}, {1.0, 0.0}), 0},
                                      {Tensor({1, 2}, {0.0, 1.0}), 1}};
  CHECK(training_loss(p, gt).total < 1e-3);
}

TEST_CASE("single pair reduces to mask loss plus weighted cross entropy") {
  Rng rng(51);
  Prediction p = random_prediction(rng, 1, 2, 2, 2);
  Tensor gt_mask({2, 2});
  for (double& v : gt_mask.data) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
  const std::vector<GtInstance> gt = {{gt_mask, 1}};

  const Tensor plane = p.mask_logits.reshaped({2, 2});
  const MaskLossTerms terms = bce_dice_mask_loss(plane, gt_mask);
  // Cross entropy over the full row including the no-object column.
  double denom = 0.0;
  for (std::size_t c = 0; c < 3; ++c) denom += std::exp(p.class_logits(0, c));
  const double ce = std::log(denom) - p.class_logits(0, 1);
  CHECK(training_loss(p, gt).total ==
        doctest::Approx(terms.masks + 2.0 * ce).epsilon(1e-9));
}

TEST_CASE("three predictions, two targets: equals the hand-assembled optimum") {
  Rng rng(52);
  Prediction p = random_prediction(rng, 3, 2, 2, 2);
  Tensor a({2, 2}, {1.0, 1.0, 0.0, 0.0});
  Tensor b({2, 2}, {0.0, 0.0, 1.0, 1.0});
  const std::vector<GtInstance> gt = {{a, 0}, {b, 1}};

  // Enumerate all 3*2 injective assignments by hand.
  double best = 1e300;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      if (i == j) continue;
      double total = 0.0;
      for (std::size_t n = 0; n < 3; ++n) {
        double ce_target;
        const std::size_t px = 4;
        double denom = 0.0;
        for (std::size_t c = 0; c < 3; ++c) denom += std::exp(p.class_logits(n, c));
        const Tensor plane = Tensor(
            {2, 2}, std::vector<double>(p.mask_logits.data.begin() + n * px,
                                        p.mask_logits.data.begin() + (n + 1) * px));
        if (n == i) {
          ce_target = std::log(denom) - p.class_logits(n, 0);
          total += bce_dice_mask_loss(plane, a).masks + 2.0 * ce_target;
        } else if (n == j) {
          ce_target = std::log(denom) - p.class_logits(n, 1);
          total += bce_dice_mask_loss(plane, b).masks + 2.0 * ce_target;
        } else {
          ce_target = std::log(denom) - p.class_logits(n, 2);
          total += 0.1 * ce_target;
        }
      }
      best = std::min(best, total);
    }
  }
  CHECK(training_loss(p, gt).total == doctest::Approx(best).epsilon(1e-9));
}

TEST_CASE("training loss validates class ids") {
  Rng rng(53);
  Prediction p = random_prediction(rng, 2, 2, 1, 2);
  const std::vector<GtInstance> gt = {{Tensor({1, 2}, {1.0, 0.0}), 7}};
  CHECK_THROWS_AS(training_loss(p, gt), ValidationError);
}

TEST_CASE("negative likelihood worked values and exact identity") {
  Prediction confident;
  confident.class_logits = Tensor({1, 3});
  confident.class_logits(0, 0) = 60.0;
  confident.mask_logits = Tensor::full({1, 1, 1}, 500.0);
  CHECK(negative_likelihood(confident).values(0, 0) == doctest::Approx(-1.0).epsilon(1e-9));

  Prediction off;
  off.class_logits = Tensor({1, 3});
  off.mask_logits = Tensor::full({1, 1, 1}, -1e6);
  CHECK(negative_likelihood(off).values(0, 0) == doctest::Approx(0.0).epsilon(1e-9));

  const Prediction quarter = [] {
    Prediction p;
    p.class_logits = Tensor({1, 3});
    p.mask_logits = Tensor::zeros({1, 1, 1});
    return p;
  }();
  CHECK(negative_likelihood(quarter).values(0, 0) == doctest::Approx(-0.25).epsilon(1e-12));

  Rng rng(54);
  const Prediction p = random_prediction(rng, 3, 3, 4, 4);
  const ScoreMap l = negative_likelihood(p);
  const ScoreMap f = mask_anomaly_score(p);
  for (std::size_t i = 0; i < l.values.numel(); ++i) {
    CHECK(l.values.data[i] + 1.0 == f.values.data[i]);
  }
}

TEST_CASE("contrastive loss worked values at margin 0.75") {
  const Tensor outlier = Tensor::full({1, 1}, 1.0);
  const Tensor inlier = Tensor::zeros({1, 1});

  ScoreMap l{Tensor::zeros({1, 1}), ScoreKind::NegativeLikelihood};
  CHECK(contrastive_loss(l, outlier, 0.75) == doctest::Approx(0.28125).epsilon(1e-12));

  l.values(0, 0) = -1.0;
  CHECK(contrastive_loss(l, outlier, 0.75) == doctest::Approx(1.53125).epsilon(1e-12));

  CHECK(contrastive_loss(l, inlier, 0.75, ContrastiveMode::SymmetricInlier) == 0.0);
}

TEST_CASE("contrastive loss zero conditions and sign") {
  Rng rng(55);
  Tensor mood({2, 2});
  ScoreMap l{Tensor({2, 2}), ScoreKind::NegativeLikelihood};
  for (int trial = 0; trial < 20; ++trial) {
    for (double& v : mood.data) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
    for (double& v : l.values.data) v = -rng.uniform();
    CHECK(contrastive_loss(l, mood, 0.75) >= 0.0);
  }
  const Tensor all_inlier = Tensor::zeros({2, 2});
  CHECK(contrastive_loss({Tensor::zeros({2, 2}), ScoreKind::NegativeLikelihood}, all_inlier,
                         0.75) == 0.0);
  CHECK(contrastive_loss({Tensor::full({2, 2}, -1.0), ScoreKind::NegativeLikelihood}, all_inlier,
                         0.75, ContrastiveMode::SymmetricInlier) == 0.0);
  CHECK(contrastive_loss({Tensor::full({2, 2}, -1.0), ScoreKind::NegativeLikelihood}, all_inlier,
                         0.75) > 0.0);
  CHECK_THROWS_AS(contrastive_loss({Tensor::zeros({2, 2}), ScoreKind::NegativeLikelihood},
                                   all_inlier, 0.0),
                  ValidationError);
}

TEST_CASE("outlier BCE worked values") {
  const Tensor outlier = Tensor::full({1, 1}, 1.0);
  const Tensor inlier = Tensor::zeros({1, 1});

  ScoreMap l{Tensor::full({1, 1}, -1.0), ScoreKind::NegativeLikelihood};
  CHECK(outlier_bce_loss(l, inlier) == doctest::Approx(0.0).epsilon(1e-6));

  l.values(0, 0) = -0.5;
  CHECK(outlier_bce_loss(l, outlier) == doctest::Approx(std::log(2.0)).epsilon(1e-9));

  l.values(0, 0) = 0.0;
  CHECK(outlier_bce_loss(l, outlier) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("outlier total loss is exactly additive and reduces to the closed-set loss") {
  Rng rng(56);
  Prediction p = random_prediction(rng, 3, 2, 3, 3);
  Tensor m0({3, 3}), m1({3, 3});
  for (std::size_t i = 0; i < 9; ++i) {
    const bool a = rng.uniform() < 0.5;
    m0.data[i] = a;
    m1.data[i] = !a;
  }
  const std::vector<GtInstance> gt = {{m0, 0}, {m1, 1}};
  Tensor mood({3, 3});
  mood(1, 1) = 1.0;

  const OodLossBreakdown ood = ood_total_loss(p, gt, mood, 0.75);
  const double separate = training_loss(p, gt).total +
                          contrastive_loss(negative_likelihood(p), mood, 0.75);
  CHECK(std::abs(ood.total - separate) <= 1e-12);

  // A contrastive term of zero leaves only the closed-set objective.
  Prediction idle;
  idle.class_logits = Tensor({1, 3});
  idle.mask_logits = Tensor::full({1, 1, 2}, -1e6);
  const std::vector<GtInstance> idle_gt = {{Tensor({1, 2}, {0.0, 0.0}), 0}};
  // All mask probabilities are ~0, so the likelihood is ~0 and every pixel is
  // an inlier at the literal branch's zero target.
  const OodLossBreakdown quiet =
      ood_total_loss(idle, idle_gt, Tensor::zeros({1, 2}), 0.75);
  CHECK(quiet.contrastive == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(quiet.total == doctest::Approx(training_loss(idle, idle_gt).total).epsilon(1e-9));
}

TEST_CASE("loss gradients into class and mask logits match finite differences") {
  const double eps = 1e-5;
  for (std::uint64_t seed = 60; seed < 66; ++seed) {
    Rng rng(seed);
    Prediction p = random_prediction(rng, 2, 2, 2, 3);
    Tensor mood({2, 3});
    for (double& v : mood.data) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
    Tensor m0({2, 3}), m1({2, 3});
    for (std::size_t i = 0; i < 6; ++i) {
      const bool a = rng.uniform() < 0.5;
      m0.data[i] = a;
      m1.data[i] = !a;
    }
    const std::vector<GtInstance> gt = {{m0, 0}, {m1, 1}};

    struct Case {
      const char* name;
      std::function<double(const Prediction&, LossGrads*)> eval;
    };
    const std::vector<Case> cases = {
        {"contrastive",
         [&](const Prediction& q, LossGrads* g) {
           return g ? contrastive_loss_grads(q, mood, 0.75, ContrastiveMode::Literal, g)
                    : contrastive_loss(negative_likelihood(q), mood, 0.75);
         }},
        {"symmetric",
         [&](const Prediction& q, LossGrads* g) {
           return g ? contrastive_loss_grads(q, mood, 0.75, ContrastiveMode::SymmetricInlier, g)
                    : contrastive_loss(negative_likelihood(q), mood, 0.75,
                                       ContrastiveMode::SymmetricInlier);
         }},
        {"bce",
         [&](const Prediction& q, LossGrads* g) {
           return g ? outlier_bce_loss_grads(q, mood, g)
                    : outlier_bce_loss(negative_likelihood(q), mood);
         }},
        {"ood_total",
         [&](const Prediction& q, LossGrads* g) {
           return ood_total_loss(q, gt, mood, 0.75, ContrastiveMode::Literal, {}, g).total;
         }},
    };

    for (const Case& cs : cases) {
      CAPTURE(cs.name);
      LossGrads grads;
      cs.eval(p, &grads);
      double worst = 0.0;
      auto probe = [&](Tensor& slot, const Tensor& analytic) {
        for (std::size_t i = 0; i < slot.numel(); ++i) {
          const double saved = slot.data[i];
          slot.data[i] = saved + eps;
          const double hi = cs.eval(p, nullptr);
          slot.data[i] = saved - eps;
          const double lo = cs.eval(p, nullptr);
          slot.data[i] = saved;
          worst = std::max(worst, relative_error(analytic.data[i], (hi - lo) / (2 * eps)));
        }
      };
      probe(p.class_logits, grads.d_class_logits);
      probe(p.mask_logits, grads.d_mask_logits);
      CHECK(worst < 1e-5);
    }
  }
}

TEST_SUITE_END();
