#include "maskscope/scoring.h"

#include <cmath>

namespace maskscope {

void Prediction::validate() const {
  if (class_logits.rank() != 2) {
    throw ShapeError("prediction: class logits must be rank-2, got " +
                     shape_str(class_logits.shape));
  }
  if (class_logits.cols() < 2) {
    throw ShapeError("prediction: class logits need at least one class plus the no-object column");
  }
  if (mask_logits.rank() != 3) {
    throw ShapeError("prediction: mask logits must be rank-3, got " +
                     shape_str(mask_logits.shape));
  }
  if (mask_logits.dim(0) != class_logits.rows()) {
    throw ShapeError("prediction: query counts disagree between class and mask logits");
  }
  for (double v : class_logits.data) {
    if (!std::isfinite(v)) throw ValidationError("prediction: class logits must be finite");
  }
}

Tensor class_posteriors(const Prediction& p) {
  const std::size_t n = p.num_queries(), z = p.num_classes();
  Tensor known({n, z});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < z; ++j) known(i, j) = p.class_logits(i, j);
  return softmax_rows(known);
}

Tensor mask_probabilities(const Prediction& p) {
  return sigmoid_map(p.mask_logits.reshaped({p.num_queries(), p.num_pixels()}));
}

Tensor marginal_class_scores(const Prediction& p) {
  p.validate();
  return matmul(transpose(class_posteriors(p)), mask_probabilities(p));
}

Segmentation segment_map(const Prediction& p) {
  const Tensor scores = marginal_class_scores(p);
  const std::size_t z = scores.rows(), px = scores.cols();
  Segmentation out;
  out.labels = LabelMap(p.height(), p.width());
  out.confidence = ScoreMap{Tensor({p.height(), p.width()}), ScoreKind::MarginalConfidence};
  for (std::size_t i = 0; i < px; ++i) {
    std::size_t best = 0;
    double best_v = scores(0, i);
    for (std::size_t c = 1; c < z; ++c) {
      if (scores(c, i) > best_v) {  // strict: ties keep the lowest class id
        best_v = scores(c, i);
        best = c;
      }
    }
    out.labels.labels[i] = static_cast<std::uint16_t>(best);
    out.confidence.values.data[i] = best_v;
  }
  return out;
}

ScoreMap pixel_msp(const Tensor& pixel_scores) {
  if (pixel_scores.rank() != 3) {
    throw ShapeError("pixel_msp: expected Z x H x W scores, got " + shape_str(pixel_scores.shape));
  }
  const std::size_t z = pixel_scores.dim(0), h = pixel_scores.dim(1), w = pixel_scores.dim(2);
  ScoreMap out{Tensor({h, w}), ScoreKind::AnomalyScore};
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      double sum = 0.0, best = 0.0;
      for (std::size_t k = 0; k < z; ++k) {
        const double v = pixel_scores(k, r, c);
        sum += v;
        best = std::max(best, v);
      }
      if (std::abs(sum - 1.0) > 1e-6) {
        throw ValidationError("pixel_msp: per-pixel scores must sum to 1 (got " +
                              std::to_string(sum) + ")");
      }
      out.values(r, c) = 1.0 - best;
    }
  }
  return out;
}

ScoreMap mask_anomaly_score(const Prediction& p) {
  const Tensor scores = marginal_class_scores(p);
  const std::size_t z = scores.rows(), px = scores.cols();
  ScoreMap out{Tensor({p.height(), p.width()}), ScoreKind::AnomalyScore};
  for (std::size_t i = 0; i < px; ++i) {
    double best = scores(0, i);
    for (std::size_t c = 1; c < z; ++c) best = std::max(best, scores(c, i));
    out.values.data[i] = 1.0 - best;
  }
  return out;
}

RefinementMask refinement_mask(const Prediction& p, const Taxonomy& tax,
                               const RefinementConfig& cfg) {
  p.validate();
  const std::size_t z = p.num_classes();
  if (tax.num_known() != z) {
    throw ValidationError("refinement_mask: taxonomy covers " + std::to_string(tax.num_known()) +
                          " classes but prediction has " + std::to_string(z));
  }
  const Tensor posts = class_posteriors(p);
  const Tensor probs = mask_probabilities(p);
  const std::size_t n = p.num_queries(), px = p.num_pixels();

  std::vector<std::uint16_t> top_class(n);
  std::vector<double> top_conf(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < z; ++c) {
      if (posts(i, c) > posts(i, best)) best = c;
    }
    top_class[i] = static_cast<std::uint16_t>(best);
    top_conf[i] = posts(i, best);
  }

  RefinementMask out;
  out.values = Tensor({p.height(), p.width()});
  if (cfg.formula_literal) {
    // min(1, C_filter . M_binary): pixels covered by a confident things/road
    // mask become 1, everything else 0.
    for (std::size_t i = 0; i < n; ++i) {
      const bool keep = (tax.is_thing(top_class[i]) || top_class[i] == tax.road) &&
                        top_conf[i] > cfg.confidence;
      if (!keep) continue;
      for (std::size_t j = 0; j < px; ++j) {
        if (probs(i, j) > cfg.mask_threshold) out.values.data[j] = 1.0;
      }
    }
  } else {
    // Zero exactly the segments of confident non-road stuff masks, one
    // elsewhere.
    for (double& v : out.values.data) v = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool suppress = tax.is_stuff(top_class[i]) && top_class[i] != tax.road &&
                            top_conf[i] > cfg.confidence;
      if (!suppress) continue;
      for (std::size_t j = 0; j < px; ++j) {
        if (probs(i, j) > cfg.mask_threshold) out.values.data[j] = 0.0;
      }
    }
  }
  return out;
}

ScoreMap refine_scores(const ScoreMap& f, const RefinementMask& r) {
  if (f.values.shape != r.values.shape) {
    throw ShapeError("refine_scores: score shape " + shape_str(f.values.shape) +
                     " does not match mask " + shape_str(r.values.shape));
  }
  return ScoreMap{hadamard(f.values, r.values), ScoreKind::RefinedScore};
}

}  // namespace maskscope
