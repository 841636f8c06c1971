#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "maskscope/scoring.h"
#include "maskscope/tensor.h"
#include "maskscope/types.h"

namespace maskscope {

struct LossWeights {
  double bce = 5.0;
  double dice = 5.0;
  double ce_matched = 2.0;
  double ce_no_object = 0.1;
};

// One annotated ground-truth segment.
struct GtInstance {
  Tensor mask;  // H x W binary
  std::size_t class_id = 0;
};

struct MaskLossTerms {
  double bce = 0.0;
  double dice = 0.0;
  double masks = 0.0;  // weights.bce * bce + weights.dice * dice
};

// Mean binary cross-entropy on sigmoid probabilities plus smoothed dice.
MaskLossTerms bce_dice_mask_loss(const Tensor& pred_logits, const Tensor& gt_mask,
                                 const LossWeights& w = {});

struct MatchResult {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (prediction, ground truth)
  std::vector<std::size_t> unmatched_predictions;          // assigned to no-object
  double total_cost = 0.0;
};

// Minimum-cost one-to-one assignment of every ground-truth column; requires
// n_pred >= n_gt. Among cost ties the lexicographically smallest pair list
// (ordered by prediction index) wins.
MatchResult hungarian_assign(const Tensor& cost);

struct LossGrads {
  Tensor d_class_logits;  // N x (Z+1)
  Tensor d_mask_logits;   // N x H x W
};

struct TrainingLossBreakdown {
  double total = 0.0;
  double mask_bce = 0.0;
  double mask_dice = 0.0;
  double ce = 0.0;  // weighted: matched plus no-object terms
  MatchResult match;
};

// Matching cost is L_masks + ce_matched * CE, mirroring the training
// objective; unmatched predictions pay ce_no_object * CE against the
// no-object column.
TrainingLossBreakdown training_loss(const Prediction& p, const std::vector<GtInstance>& gt,
                                    const LossWeights& w = {}, LossGrads* grads = nullptr);

// Per-pixel negative max marginal class score; equals mask_anomaly_score - 1
// exactly (both derive from the same marginal maximum).
ScoreMap negative_likelihood(const Prediction& p);

enum class ContrastiveMode {
  // The quadratic penalty as printed: inliers are pushed toward likelihood 0.
  Literal,
  // Inlier branch replaced by (l + 1), pulling inliers toward likelihood -1.
  SymmetricInlier,
};

// Mean over pixels of 0.5 * branch^2 with the outlier branch max(0, m - l).
double contrastive_loss(const ScoreMap& neg_likelihood, const Tensor& outlier_mask, double margin,
                        ContrastiveMode mode = ContrastiveMode::Literal);

// Same value, with analytic gradients through the marginal maximum into the
// class and mask logits.
double contrastive_loss_grads(const Prediction& p, const Tensor& outlier_mask, double margin,
                              ContrastiveMode mode, LossGrads* grads);

// Standard BCE on p = clamp(-l, eps, 1-eps); the printed log-of-negative form
// is undefined and intentionally not implemented.
double outlier_bce_loss(const ScoreMap& neg_likelihood, const Tensor& outlier_mask);
double outlier_bce_loss_grads(const Prediction& p, const Tensor& outlier_mask, LossGrads* grads);

struct OodLossBreakdown {
  double total = 0.0;
  double contrastive = 0.0;
  TrainingLossBreakdown closed_set;
};

// Contrastive term plus the closed-set objective on the same prediction.
OodLossBreakdown ood_total_loss(const Prediction& p, const std::vector<GtInstance>& gt,
                                const Tensor& outlier_mask, double margin,
                                ContrastiveMode mode = ContrastiveMode::Literal,
                                const LossWeights& w = {}, LossGrads* grads = nullptr);

}  // namespace maskscope
