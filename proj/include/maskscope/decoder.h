#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "maskscope/attention.h"
#include "maskscope/losses.h"
#include "maskscope/types.h"

namespace maskscope {

struct ToyDecoderConfig {
  std::size_t layers = 2;
  std::size_t num_queries = 4;
  std::size_t feature_dim = 8;
  std::size_t num_classes = 2;  // Z; the class head adds a no-object column
};

// Desk-scale mask-transformer decoder: L global-masked-attention layers over
// a fixed pixel-feature grid, a dot-product mask head and a linear class
// head. Each layer derives its attention masks by thresholding the sigmoid of
// the previous layer's mask logits.
struct ToyDecoder {
  ToyDecoderConfig cfg;
  std::vector<AttentionWeights> layers;
  Tensor class_head;  // feature_dim x (Z+1)
  Tensor query_init;  // num_queries x feature_dim, learnable

  static ToyDecoder seeded(const ToyDecoderConfig& cfg, std::uint64_t seed);
};

struct DecoderCache {
  bool valid = false;
  Tensor features;  // P x C
  std::size_t h = 0, w = 0;
  std::vector<AttentionCache> layer_caches;
  Tensor x_final;
};

Prediction decoder_forward(const ToyDecoder& d, const Tensor& pixel_features, std::size_t h,
                           std::size_t w, DecoderCache* cache = nullptr);

struct DecoderGrads {
  Tensor d_query_init;
  std::vector<AttentionWeights> layers;  // gradient slots mirroring the weights
  Tensor d_class_head;
};

DecoderGrads decoder_backward(const ToyDecoder& d, const DecoderCache& cache,
                              const Tensor& d_class_logits, const Tensor& d_mask_logits);

// One training example. When outlier_mask is set the step optimizes the
// outlier objective (contrastive + closed set), otherwise the closed-set
// matching loss alone.
struct TrainingSample {
  Tensor pixel_features;  // P x C
  std::size_t h = 0, w = 0;
  std::vector<GtInstance> instances;
  std::optional<Tensor> outlier_mask;
  double margin = 0.75;
  ContrastiveMode contrastive_mode = ContrastiveMode::Literal;
};

// Plain fixed-step gradient descent over all samples per step (fixed order).
// Returns the loss observed at the start of each step. lr may be zero (the
// trace is then constant); negative lr throws.
std::vector<double> train_toy(ToyDecoder& d, const std::vector<TrainingSample>& samples,
                              std::size_t steps, double lr);

double sample_loss(const ToyDecoder& d, const TrainingSample& sample,
                   DecoderGrads* grads = nullptr);

// Built-in synthetic task: a rectangular class-0 blob on a class-1 carpet,
// pixel features drawn around per-class signature vectors, plus a variant
// with a disjoint pasted outlier square whose labels are void.
struct BlobTask {
  TrainingSample closed_set;
  TrainingSample with_outlier;
  Tensor outlier_region;  // H x W binary, identical to with_outlier.outlier_mask
};

BlobTask make_blob_task(std::uint64_t seed);

}  // namespace maskscope
