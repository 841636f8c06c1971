#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "maskscope/scoring.h"
#include "maskscope/taxonomy.h"
#include "maskscope/tensor.h"
#include "maskscope/types.h"

namespace maskscope {

// Queries whose top known-class posterior clears a confidence floor, with the
// no-object column dropped from their class logits.
struct KnownSubset {
  Tensor class_logits;  // N_k x Z
  Tensor mask_logits;   // N_k x H x W
  std::vector<std::size_t> query_indices;
  double confidence_floor = 0.5;
};

KnownSubset build_known_subset(const Prediction& p, const Taxonomy& tax,
                               double confidence_floor = 0.5);

// Largest threshold such that the fraction of anomaly scores >= threshold is
// at least tpr; swept over the sorted unique score values.
double threshold_at_tpr(const std::vector<double>& scores,
                        const std::vector<std::uint8_t>& is_anomaly, double tpr = 0.95);

// Pixels whose anomaly score reaches tau get the anomaly label Z; everything
// else keeps the closed-set argmax label.
LabelMap oss_inference(const Prediction& p, double tau);

// B = 1 - max over known queries of (top class posterior * mask probability).
ScoreMap background_region(const KnownSubset& k);

struct ComponentSet {
  std::size_t h = 0, w = 0;
  std::vector<int> labels;  // 0 = none; component ids 1..count in raster discovery order
  int count = 0;
  std::vector<std::vector<std::size_t>> pixels;  // pixels[id-1]
};

inline constexpr std::size_t kUnlimitedUnionOps = std::numeric_limits<std::size_t>::max();

// Two-pass union-find labeling. max_union_ops caps how many label merges are
// applied; once exhausted the remaining equivalences stay split (a
// configurable safety knob, unlimited by default).
ComponentSet connected_components(const Tensor& binary, int connectivity = 8,
                                  std::size_t max_union_ops = kUnlimitedUnionOps);

struct MiningConfig {
  double iou_min = 0.5;
  std::size_t min_area = 16;
  int connectivity = 8;
  std::size_t top_k = 3;           // keep only the k largest components
  std::size_t max_union_ops = 500;
  double mask_bin_threshold = 0.5;
};

struct MiningDecision {
  int component_id = 0;
  std::size_t query_index = 0;  // best-overlap query among those consulted
  double stuff_entropy = 0.0;
  double things_entropy = 0.0;
  bool is_unknown = false;
};

struct MiningResult {
  ComponentSet components;
  std::vector<int> kept_component_ids;
  std::vector<MiningDecision> decisions;
  std::vector<int> unknown_component_ids;
  std::vector<Tensor> unknown_masks;  // H x W binary, one per unknown instance
};

// For each surviving background component, averages the stuff/things subset
// entropies of every query mask overlapping it by at least iou_min; the
// component is an unknown instance when the stuff entropy is strictly larger.
MiningResult mine_unknown_instances(const Tensor& background_binary, const Prediction& p,
                                    const Taxonomy& tax, const MiningConfig& cfg = {});

// Confidence-weighted painting of the known queries (stuff merges per class,
// things get fresh instance ids) followed by the unknown instances in order,
// each clipped to still-unclaimed pixels.
PanopticMap assemble_panoptic(const Prediction& p, const KnownSubset& known,
                              const std::vector<Tensor>& unknown_masks, const Taxonomy& tax);

}  // namespace maskscope
