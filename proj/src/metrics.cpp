#include "maskscope/metrics.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace maskscope {

namespace {

void pool_pixels(const std::vector<ScoreMap>& scores, const std::vector<Tensor>& gt_masks,
                 std::vector<double>* s, std::vector<std::uint8_t>* y) {
  if (scores.size() != gt_masks.size()) {
    throw ShapeError("pixel metrics: score and ground-truth image counts differ");
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i].values.shape != gt_masks[i].shape) {
      throw ShapeError("pixel metrics: image " + std::to_string(i) + " shape mismatch");
    }
    for (std::size_t j = 0; j < gt_masks[i].numel(); ++j) {
      const double g = gt_masks[i].data[j];
      if (g != 0.0 && g != 1.0) {
        throw ValidationError("pixel metrics: ground truth must be binary");
      }
      s->push_back(scores[i].values.data[j]);
      y->push_back(g == 1.0 ? 1 : 0);
    }
  }
}

}  // namespace

PixelEvalResult evaluate_pixel_scores(const std::vector<double>& scores,
                                      const std::vector<std::uint8_t>& is_anomaly) {
  if (scores.size() != is_anomaly.size()) {
    throw ShapeError("evaluate_pixel_scores: scores and labels differ in length");
  }
  PixelEvalResult out;
  for (std::uint8_t y : is_anomaly) (y ? out.num_positives : out.num_negatives)++;
  if (out.num_positives == 0) {
    throw ValidationError("evaluate_pixel_scores: no positive pixels");
  }

  // Descending sweep over unique thresholds; AP accumulates precision at each
  // recall increment.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double ap = 0.0;
  std::size_t tp = 0, fp = 0;
  double prev_recall = 0.0;
  const double total_pos = static_cast<double>(out.num_positives);
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (is_anomaly[order[j]] ? tp : fp)++;
      ++j;
    }
    const double recall = static_cast<double>(tp) / total_pos;
    const double precision =
        (tp + fp) == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  out.auprc = ap;

  if (out.num_negatives == 0) {
    throw ValidationError("evaluate_pixel_scores: no negative pixels for FPR");
  }
  out.threshold = threshold_at_tpr(scores, is_anomaly, 0.95);
  std::size_t fp95 = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!is_anomaly[i] && scores[i] >= out.threshold) ++fp95;
  }
  out.fpr95 = static_cast<double>(fp95) / static_cast<double>(out.num_negatives);
  return out;
}

double auprc(const std::vector<ScoreMap>& scores, const std::vector<Tensor>& gt_masks) {
  std::vector<double> s;
  std::vector<std::uint8_t> y;
  pool_pixels(scores, gt_masks, &s, &y);
  return evaluate_pixel_scores(s, y).auprc;
}

double fpr_at_95tpr(const std::vector<ScoreMap>& scores, const std::vector<Tensor>& gt_masks) {
  std::vector<double> s;
  std::vector<std::uint8_t> y;
  pool_pixels(scores, gt_masks, &s, &y);
  return evaluate_pixel_scores(s, y).fpr95;
}

ComponentEvalConfig::ComponentEvalConfig() {
  for (int i = 0; i <= 10; ++i) tau_sweep.push_back(0.25 + 0.05 * i);
}

ComponentMetricsResult component_metrics(const std::vector<Tensor>& pred_maps,
                                         const std::vector<Tensor>& gt_maps,
                                         const ComponentEvalConfig& cfg) {
  if (pred_maps.size() != gt_maps.size()) {
    throw ShapeError("component_metrics: prediction and ground-truth image counts differ");
  }
  if (cfg.tau <= 0.0 || cfg.tau >= 1.0) {
    throw ValidationError("component_metrics: tau must lie in (0, 1)");
  }

  ComponentMetricsResult out;
  for (std::size_t img = 0; img < pred_maps.size(); ++img) {
    if (pred_maps[img].shape != gt_maps[img].shape) {
      throw ShapeError("component_metrics: image " + std::to_string(img) + " shape mismatch");
    }
    const ComponentSet gt_cc = connected_components(gt_maps[img], cfg.connectivity);
    const ComponentSet pred_cc = connected_components(pred_maps[img], cfg.connectivity);
    out.num_gt_components += static_cast<std::size_t>(gt_cc.count);
    out.num_pred_components += static_cast<std::size_t>(pred_cc.count);

    for (int k = 1; k <= gt_cc.count; ++k) {
      const std::vector<std::size_t>& comp = gt_cc.pixels[k - 1];
      // Predicted components touching this target.
      std::vector<char> pred_hit(static_cast<std::size_t>(pred_cc.count) + 1, 0);
      std::size_t inter = 0;
      for (std::size_t i : comp) {
        const int pid = pred_cc.labels[i];
        if (pid > 0) {
          pred_hit[pid] = 1;
          ++inter;
        }
      }
      // Union of those components, minus pixels correctly covering other
      // ground-truth targets.
      std::size_t union_size = comp.size();
      std::size_t adjustment = 0;
      for (int pid = 1; pid <= pred_cc.count; ++pid) {
        if (!pred_hit[pid]) continue;
        for (std::size_t i : pred_cc.pixels[pid - 1]) {
          const int gid = gt_cc.labels[i];
          if (gid == k) continue;  // already counted inside comp
          ++union_size;
          if (gid > 0) ++adjustment;
        }
      }
      const double denom = static_cast<double>(union_size - adjustment);
      out.siou_values.push_back(denom == 0.0 ? 0.0 : static_cast<double>(inter) / denom);
    }

    for (int pid = 1; pid <= pred_cc.count; ++pid) {
      const std::vector<std::size_t>& comp = pred_cc.pixels[pid - 1];
      std::size_t covered = 0;
      for (std::size_t i : comp) {
        if (gt_cc.labels[i] > 0) ++covered;
      }
      out.ppv_values.push_back(static_cast<double>(covered) / static_cast<double>(comp.size()));
    }
  }

  if (out.siou_values.empty() && out.ppv_values.empty()) {
    out.defined = false;  // nothing to evaluate on either side
    return out;
  }
  out.defined = true;
  out.siou_mean = out.siou_values.empty()
                      ? 0.0
                      : std::accumulate(out.siou_values.begin(), out.siou_values.end(), 0.0) /
                            static_cast<double>(out.siou_values.size());
  out.ppv_mean = out.ppv_values.empty()
                     ? 0.0
                     : std::accumulate(out.ppv_values.begin(), out.ppv_values.end(), 0.0) /
                           static_cast<double>(out.ppv_values.size());

  auto counts_at = [&](double tau) {
    ComponentCounts c;
    for (double v : out.siou_values) (v > tau ? c.tp : c.fn)++;
    for (double v : out.ppv_values) {
      if (v <= tau) ++c.fp;
    }
    const double denom = static_cast<double>(2 * c.tp + c.fn + c.fp);
    c.f1_star = denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / denom;
    return c;
  };
  out.at_tau = counts_at(cfg.tau);
  out.f1_star = out.at_tau.f1_star;
  double sweep_sum = 0.0;
  for (double tau : cfg.tau_sweep) {
    out.sweep.emplace_back(tau, counts_at(tau));
    sweep_sum += out.sweep.back().second.f1_star;
  }
  out.f1_star_sweep_mean =
      cfg.tau_sweep.empty() ? 0.0 : sweep_sum / static_cast<double>(cfg.tau_sweep.size());
  return out;
}

OpenIouResult open_iou(const std::vector<LabelMap>& pred, const std::vector<LabelMap>& gt,
                       std::size_t num_known, std::uint16_t anomaly_label,
                       std::uint16_t void_label) {
  if (pred.size() != gt.size()) {
    throw ShapeError("open_iou: prediction and ground-truth image counts differ");
  }
  const std::size_t z = num_known;
  OpenIouResult out;
  out.confusion.assign(z + 1, std::vector<std::size_t>(z + 1, 0));

  auto to_index = [&](std::uint16_t label) -> std::size_t {
    if (label == anomaly_label) return z;
    if (label < z) return label;
    throw ValidationError("open_iou: label " + std::to_string(label) + " out of range");
  };

  for (std::size_t img = 0; img < pred.size(); ++img) {
    if (pred[img].h != gt[img].h || pred[img].w != gt[img].w) {
      throw ShapeError("open_iou: image " + std::to_string(img) + " shape mismatch");
    }
    for (std::size_t i = 0; i < gt[img].size(); ++i) {
      if (gt[img].labels[i] == void_label) continue;  // void pixels excluded
      out.confusion[to_index(gt[img].labels[i])][to_index(pred[img].labels[i])]++;
    }
  }

  out.per_class.assign(z, 0.0);
  out.present.assign(z, false);
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t a = 0; a < z; ++a) {
    const std::size_t tp = out.confusion[a][a];
    std::size_t fp_ood = 0, fn_ood = 0;
    for (std::size_t i = 0; i <= z; ++i) {
      if (i == a) continue;
      fp_ood += out.confusion[i][a];  // predicted a, truly i (anomaly included)
      fn_ood += out.confusion[a][i];  // truly a, predicted i
    }
    const std::size_t denom = tp + fp_ood + fn_ood;
    out.present[a] = denom > 0;
    if (denom > 0) {
      out.per_class[a] = static_cast<double>(tp) / static_cast<double>(denom);
      sum += out.per_class[a];
      ++counted;
    }
  }
  out.mean = counted == 0 ? 0.0 : sum / static_cast<double>(counted);
  return out;
}

namespace {

struct SegmentKey {
  std::uint16_t class_id;
  std::uint16_t instance_id;
  bool operator<(const SegmentKey& o) const {
    return class_id != o.class_id ? class_id < o.class_id : instance_id < o.instance_id;
  }
};

using SegmentMapByClass = std::map<SegmentKey, std::vector<std::size_t>>;

// Collect segments, skipping pixels that are void in the ground truth.
SegmentMapByClass collect_segments(const PanopticMap& m, const PanopticMap& gt_for_void,
                                   std::uint16_t void_id) {
  SegmentMapByClass out;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m.class_ids[i] == void_id) continue;
    if (gt_for_void.class_ids[i] == void_id) continue;
    out[{m.class_ids[i], m.instance_ids[i]}].push_back(i);
  }
  return out;
}

PqTriple reduce_classes(const std::map<std::uint16_t, PqClassStats>& per_class,
                        const std::vector<std::uint16_t>& ids) {
  PqTriple t;
  double pq_sum = 0.0, sq_sum = 0.0, rq_sum = 0.0;
  std::size_t counted = 0;
  for (std::uint16_t id : ids) {
    const auto it = per_class.find(id);
    if (it == per_class.end()) continue;
    const PqClassStats& s = it->second;
    if (s.tp + s.fp + s.fn == 0) continue;
    const double denom = static_cast<double>(s.tp) + 0.5 * static_cast<double>(s.fp + s.fn);
    const double rq = denom == 0.0 ? 0.0 : static_cast<double>(s.tp) / denom;
    const double sq = s.tp == 0 ? 0.0 : s.iou_sum / static_cast<double>(s.tp);
    pq_sum += denom == 0.0 ? 0.0 : s.iou_sum / denom;
    sq_sum += sq;
    rq_sum += rq;
    ++counted;
  }
  if (counted == 0) return t;
  t.defined = true;
  t.pq = pq_sum / static_cast<double>(counted);
  t.sq = sq_sum / static_cast<double>(counted);
  t.rq = rq_sum / static_cast<double>(counted);
  return t;
}

}  // namespace

PqResult panoptic_quality(const std::vector<PanopticMap>& pred,
                          const std::vector<PanopticMap>& gt, const Taxonomy& tax) {
  if (pred.size() != gt.size()) {
    throw ShapeError("panoptic_quality: prediction and ground-truth image counts differ");
  }
  PqResult out;
  for (std::size_t img = 0; img < pred.size(); ++img) {
    if (pred[img].h != gt[img].h || pred[img].w != gt[img].w) {
      throw ShapeError("panoptic_quality: image " + std::to_string(img) + " shape mismatch");
    }
    for (std::size_t i = 0; i < gt[img].size(); ++i) {
      const std::uint16_t c = gt[img].class_ids[i];
      if (c != tax.void_id && !tax.is_known(c) && c != tax.unknown_id) {
        throw ValidationError("panoptic_quality: ground-truth class " + std::to_string(c) +
                              " not in taxonomy");
      }
      if (c != tax.void_id && tax.is_stuff(c) && gt[img].instance_ids[i] != 0) {
        throw ValidationError("panoptic_quality: stuff pixels must carry instance id 0");
      }
    }
    const SegmentMapByClass gt_segs = collect_segments(gt[img], gt[img], tax.void_id);
    const SegmentMapByClass pred_segs = collect_segments(pred[img], gt[img], tax.void_id);

    std::map<SegmentKey, char> gt_matched, pred_matched;
    for (const auto& [gk, gpix] : gt_segs) {
      out.per_class[gk.class_id];  // mark present
      for (const auto& [pk, ppix] : pred_segs) {
        if (pk.class_id != gk.class_id) continue;
        std::size_t inter = 0;
        std::size_t a = 0, b = 0;
        while (a < gpix.size() && b < ppix.size()) {
          if (gpix[a] == ppix[b]) {
            ++inter;
            ++a;
            ++b;
          } else if (gpix[a] < ppix[b]) {
            ++a;
          } else {
            ++b;
          }
        }
        const double uni = static_cast<double>(gpix.size() + ppix.size() - inter);
        const double iou = uni == 0.0 ? 0.0 : static_cast<double>(inter) / uni;
        if (iou > 0.5) {  // uniqueness of the match follows from the threshold
          PqClassStats& s = out.per_class[gk.class_id];
          s.tp++;
          s.iou_sum += iou;
          gt_matched[gk] = 1;
          pred_matched[pk] = 1;
        }
      }
    }
    for (const auto& [gk, gpix] : gt_segs) {
      if (!gt_matched.count(gk)) out.per_class[gk.class_id].fn++;
    }
    for (const auto& [pk, ppix] : pred_segs) {
      out.per_class[pk.class_id];
      if (!pred_matched.count(pk)) out.per_class[pk.class_id].fp++;
    }
  }

  std::vector<std::uint16_t> all_ids, thing_ids, stuff_ids;
  for (const auto& [id, stats] : out.per_class) {
    all_ids.push_back(id);
    if (tax.is_thing(id)) thing_ids.push_back(id);
    if (tax.is_stuff(id)) stuff_ids.push_back(id);
  }
  out.overall = reduce_classes(out.per_class, all_ids);
  out.things = reduce_classes(out.per_class, thing_ids);
  out.stuff = reduce_classes(out.per_class, stuff_ids);
  out.unknown = reduce_classes(out.per_class, {tax.unknown_id});
  return out;
}

}  // namespace maskscope
