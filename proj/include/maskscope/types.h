#pragma once

#include <cstdint>
#include <vector>

#include "maskscope/tensor.h"

namespace maskscope {

inline constexpr std::uint16_t kVoidLabel = 65535;

// Raw transformer outputs for one image: per-query class logits (with a
// trailing no-object column) and per-query mask logit planes.
struct Prediction {
  Tensor class_logits;  // N x (Z+1)
  Tensor mask_logits;   // N x H x W

  std::size_t num_queries() const { return class_logits.dim(0); }
  std::size_t num_classes() const { return class_logits.dim(1) - 1; }
  std::size_t height() const { return mask_logits.dim(1); }
  std::size_t width() const { return mask_logits.dim(2); }
  std::size_t num_pixels() const { return height() * width(); }

  void validate() const;
};

enum class ScoreKind {
  AnomalyScore,        // f: 1 - max marginal class score, range [1-N, 1]
  RefinedScore,        // f after refinement masking
  MarginalConfidence,  // g: max marginal class score, range [0, N]
  NegativeLikelihood,  // l: -max marginal class score, range [-N, 0]
  Background,          // B: 1 - strongest known-query evidence, range [0, 1]
};

struct ScoreMap {
  Tensor values;  // H x W
  ScoreKind kind = ScoreKind::AnomalyScore;
};

struct LabelMap {
  std::size_t h = 0, w = 0;
  std::vector<std::uint16_t> labels;

  LabelMap() = default;
  LabelMap(std::size_t h_in, std::size_t w_in, std::uint16_t fill = 0)
      : h(h_in), w(w_in), labels(h_in * w_in, fill) {}

  std::uint16_t& at(std::size_t r, std::size_t c) { return labels[r * w + c]; }
  std::uint16_t at(std::size_t r, std::size_t c) const { return labels[r * w + c]; }
  std::size_t size() const { return labels.size(); }

  bool operator==(const LabelMap&) const = default;
};

struct RefinementMask {
  Tensor values;  // H x W of exactly {0, 1}
};

// Per-pixel (class id, instance id). Stuff pixels carry instance id 0; void
// pixels carry class kVoidLabel and instance 0.
struct PanopticMap {
  std::size_t h = 0, w = 0;
  std::vector<std::uint16_t> class_ids;
  std::vector<std::uint16_t> instance_ids;

  PanopticMap() = default;
  PanopticMap(std::size_t h_in, std::size_t w_in)
      : h(h_in), w(w_in), class_ids(h_in * w_in, kVoidLabel), instance_ids(h_in * w_in, 0) {}

  std::size_t size() const { return class_ids.size(); }

  bool operator==(const PanopticMap&) const = default;
};

}  // namespace maskscope
