#pragma once

#include "maskscope/taxonomy.h"
#include "maskscope/tensor.h"
#include "maskscope/types.h"

namespace maskscope {

// N x Z row softmax of the class logits with the trailing no-object column
// excluded before normalization.
Tensor class_posteriors(const Prediction& p);

// N x (H*W) sigmoid of the mask logits.
Tensor mask_probabilities(const Prediction& p);

// Z x (H*W): class_posteriors^T . mask_probabilities. Entries sum query
// contributions, so they live in [0, N].
Tensor marginal_class_scores(const Prediction& p);

struct Segmentation {
  LabelMap labels;      // per-pixel argmax class, ties to the lowest id
  ScoreMap confidence;  // the max marginal score itself
};
Segmentation segment_map(const Prediction& p);

// Per-pixel 1 - max class probability for an already-normalized Z x H x W
// score stack. Columns must sum to 1 within 1e-6.
ScoreMap pixel_msp(const Tensor& pixel_scores);

// Per-pixel 1 - max marginal class score. Not clipped; two stacked confident
// queries legitimately drive the score below 0.
ScoreMap mask_anomaly_score(const Prediction& p);

struct RefinementConfig {
  double confidence = 0.95;
  double mask_threshold = 0.5;
  // When set, uses the printed product form min(1, C_filter . M_binary)
  // instead of the default "zero out confident non-road stuff" semantics.
  bool formula_literal = false;
};

RefinementMask refinement_mask(const Prediction& p, const Taxonomy& tax,
                               const RefinementConfig& cfg = {});

// Hadamard product of scores with the binary refinement mask.
ScoreMap refine_scores(const ScoreMap& f, const RefinementMask& r);

}  // namespace maskscope
