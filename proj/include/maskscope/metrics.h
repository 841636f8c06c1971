#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "maskscope/openset.h"
#include "maskscope/taxonomy.h"
#include "maskscope/types.h"

namespace maskscope {

struct PixelEvalResult {
  double auprc = 0.0;
  double fpr95 = 0.0;
  double threshold = 0.0;  // the 95%-TPR threshold behind fpr95
  std::size_t num_positives = 0;
  std::size_t num_negatives = 0;
};

// Pooled pixel scores against binary anomaly labels. AuPRC uses the
// step-function average-precision estimator over descending unique
// thresholds; fpr95 needs at least one negative.
PixelEvalResult evaluate_pixel_scores(const std::vector<double>& scores,
                                      const std::vector<std::uint8_t>& is_anomaly);

double auprc(const std::vector<ScoreMap>& scores, const std::vector<Tensor>& gt_masks);
double fpr_at_95tpr(const std::vector<ScoreMap>& scores, const std::vector<Tensor>& gt_masks);

struct ComponentEvalConfig {
  double tau = 0.25;
  std::vector<double> tau_sweep;  // defaults to 0.25..0.75 step 0.05
  int connectivity = 8;

  ComponentEvalConfig();
};

struct ComponentCounts {
  std::size_t tp = 0, fn = 0, fp = 0;
  double f1_star = 0.0;
};

struct ComponentMetricsResult {
  bool defined = false;  // false when no components exist on either side
  double siou_mean = 0.0;
  double ppv_mean = 0.0;
  double f1_star = 0.0;
  double f1_star_sweep_mean = 0.0;
  ComponentCounts at_tau;
  std::vector<std::pair<double, ComponentCounts>> sweep;
  std::size_t num_gt_components = 0;
  std::size_t num_pred_components = 0;
  std::vector<double> siou_values;  // per ground-truth component, pooled
  std::vector<double> ppv_values;   // per predicted component, pooled
};

// Component-level detection quality over paired binary maps. sIoU uses the
// union denominator with the adjustment set removed; PPV charges predicted
// components against the ground truth they touch.
ComponentMetricsResult component_metrics(const std::vector<Tensor>& pred_maps,
                                         const std::vector<Tensor>& gt_maps,
                                         const ComponentEvalConfig& cfg = {});

struct OpenIouResult {
  std::vector<double> per_class;  // size Z, meaningful where present[c]
  std::vector<bool> present;      // class appears in gt or prediction
  double mean = 0.0;              // over present known classes
  std::vector<std::vector<std::size_t>> confusion;  // (Z+1) x (Z+1), row = gt
};

// Labels must be < num_known, equal to anomaly_label, or void (skipped).
OpenIouResult open_iou(const std::vector<LabelMap>& pred, const std::vector<LabelMap>& gt,
                       std::size_t num_known, std::uint16_t anomaly_label,
                       std::uint16_t void_label = kVoidLabel);

struct PqClassStats {
  std::size_t tp = 0, fp = 0, fn = 0;
  double iou_sum = 0.0;
};

struct PqTriple {
  bool defined = false;
  double pq = 0.0, sq = 0.0, rq = 0.0;
};

struct PqResult {
  PqTriple overall;  // all classes present in prediction or ground truth
  PqTriple things;
  PqTriple stuff;
  PqTriple unknown;
  std::map<std::uint16_t, PqClassStats> per_class;
};

// Segments match when IoU > 0.5 (unique by construction); pixels void in the
// ground truth are excluded from all overlap computations.
PqResult panoptic_quality(const std::vector<PanopticMap>& pred,
                          const std::vector<PanopticMap>& gt, const Taxonomy& tax);

}  // namespace maskscope
