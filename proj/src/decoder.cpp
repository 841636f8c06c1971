#include "maskscope/decoder.h"

#include <cmath>

#include "maskscope/rng.h"

namespace maskscope {

ToyDecoder ToyDecoder::seeded(const ToyDecoderConfig& cfg, std::uint64_t seed) {
  if (cfg.layers < 1 || cfg.num_queries < 1 || cfg.feature_dim < 1 || cfg.num_classes < 1) {
    throw ValidationError("toy decoder: all config dimensions must be >= 1");
  }
  Rng rng(seed);
  auto randn = [&rng](std::vector<std::size_t> shape, double scale) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = scale * rng.normal();
    return t;
  };
  const double w_scale = 1.0 / std::sqrt(static_cast<double>(cfg.feature_dim));
  ToyDecoder d;
  d.cfg = cfg;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    d.layers.push_back({randn({cfg.feature_dim, cfg.feature_dim}, w_scale),
                        randn({cfg.feature_dim, cfg.feature_dim}, w_scale),
                        randn({cfg.feature_dim, cfg.feature_dim}, w_scale)});
  }
  d.class_head = randn({cfg.feature_dim, cfg.num_classes + 1}, w_scale);
  d.query_init = randn({cfg.num_queries, cfg.feature_dim}, 0.02);
  return d;
}

Prediction decoder_forward(const ToyDecoder& d, const Tensor& pixel_features, std::size_t h,
                           std::size_t w, DecoderCache* cache) {
  if (pixel_features.rank() != 2 || pixel_features.cols() != d.cfg.feature_dim) {
    throw ShapeError("decoder_forward: pixel features must be P x " +
                     std::to_string(d.cfg.feature_dim) + ", got " +
                     shape_str(pixel_features.shape));
  }
  if (pixel_features.rows() != h * w) {
    throw ShapeError("decoder_forward: " + std::to_string(pixel_features.rows()) +
                     " pixel rows do not cover " + std::to_string(h) + "x" + std::to_string(w));
  }

  if (cache) {
    cache->valid = true;
    cache->features = pixel_features;
    cache->h = h;
    cache->w = w;
    cache->layer_caches.assign(d.layers.size(), {});
  }

  const Tensor features_t = transpose(pixel_features);
  Tensor x = d.query_init;
  for (std::size_t l = 0; l < d.layers.size(); ++l) {
    // The previous mask is a thresholding of the current queries against the
    // pixel grid; gradient does not flow through this step function.
    const Tensor mask_probs = sigmoid_map(matmul(x, features_t));
    const AttentionMaskPair masks = build_attention_masks(mask_probs);
    x = attention_forward(d.layers[l], x, pixel_features, &masks,
                          AttentionMode::GlobalMaskedAttention,
                          cache ? &cache->layer_caches[l] : nullptr);
  }

  Prediction out;
  out.class_logits = matmul(x, d.class_head);
  out.mask_logits = matmul(x, features_t).reshaped({d.cfg.num_queries, h, w});
  if (cache) cache->x_final = std::move(x);
  return out;
}

DecoderGrads decoder_backward(const ToyDecoder& d, const DecoderCache& cache,
                              const Tensor& d_class_logits, const Tensor& d_mask_logits) {
  if (!cache.valid) throw ValidationError("decoder_backward: forward cache missing");
  const std::size_t n = d.cfg.num_queries;
  const std::size_t px = cache.h * cache.w;

  DecoderGrads g;
  g.d_class_head = matmul(transpose(cache.x_final), d_class_logits);
  Tensor dx = matmul(d_class_logits, transpose(d.class_head));
  axpy(1.0, matmul(d_mask_logits.reshaped({n, px}), cache.features), dx);

  g.layers.resize(d.layers.size());
  for (std::size_t l = d.layers.size(); l-- > 0;) {
    const AttentionGrads ag = attention_backward(cache.layer_caches[l], dx);
    g.layers[l] = {ag.dw_q, ag.dw_k, ag.dw_v};
    dx = ag.dx_in;
  }
  g.d_query_init = std::move(dx);
  return g;
}

double sample_loss(const ToyDecoder& d, const TrainingSample& sample, DecoderGrads* grads) {
  DecoderCache cache;
  const Prediction pred =
      decoder_forward(d, sample.pixel_features, sample.h, sample.w, grads ? &cache : nullptr);
  LossGrads lg;
  double loss = 0.0;
  if (sample.outlier_mask.has_value()) {
    loss = ood_total_loss(pred, sample.instances, *sample.outlier_mask, sample.margin,
                          sample.contrastive_mode, {}, grads ? &lg : nullptr)
               .total;
  } else {
    loss = training_loss(pred, sample.instances, {}, grads ? &lg : nullptr).total;
  }
  if (grads) *grads = decoder_backward(d, cache, lg.d_class_logits, lg.d_mask_logits);
  return loss;
}

namespace {

void accumulate(DecoderGrads& into, const DecoderGrads& from) {
  axpy(1.0, from.d_query_init, into.d_query_init);
  axpy(1.0, from.d_class_head, into.d_class_head);
  for (std::size_t l = 0; l < into.layers.size(); ++l) {
    axpy(1.0, from.layers[l].w_q, into.layers[l].w_q);
    axpy(1.0, from.layers[l].w_k, into.layers[l].w_k);
    axpy(1.0, from.layers[l].w_v, into.layers[l].w_v);
  }
}

DecoderGrads zero_grads(const ToyDecoder& d) {
  DecoderGrads g;
  g.d_query_init = Tensor(d.query_init.shape);
  g.d_class_head = Tensor(d.class_head.shape);
  for (const AttentionWeights& w : d.layers) {
    g.layers.push_back({Tensor(w.w_q.shape), Tensor(w.w_k.shape), Tensor(w.w_v.shape)});
  }
  return g;
}

}  // namespace

std::vector<double> train_toy(ToyDecoder& d, const std::vector<TrainingSample>& samples,
                              std::size_t steps, double lr) {
  if (lr < 0.0) throw ValidationError("train_toy: learning rate must be non-negative");
  std::vector<double> trace;
  trace.reserve(steps);
  for (std::size_t step = 0; step < steps; ++step) {
    DecoderGrads total = zero_grads(d);
    double loss = 0.0;
    for (const TrainingSample& sample : samples) {
      DecoderGrads g;
      loss += sample_loss(d, sample, &g);
      accumulate(total, g);
    }
    trace.push_back(loss);
    axpy(-lr, total.d_query_init, d.query_init);
    axpy(-lr, total.d_class_head, d.class_head);
    for (std::size_t l = 0; l < d.layers.size(); ++l) {
      axpy(-lr, total.layers[l].w_q, d.layers[l].w_q);
      axpy(-lr, total.layers[l].w_k, d.layers[l].w_k);
      axpy(-lr, total.layers[l].w_v, d.layers[l].w_v);
    }
  }
  return trace;
}

BlobTask make_blob_task(std::uint64_t seed) {
  constexpr std::size_t kSide = 16, kDim = 8;
  Rng rng(seed);
  auto signature = [&rng] {
    std::vector<double> s(kDim);
    for (double& v : s) v = rng.normal();
    return s;
  };
  const std::vector<double> sig_blob = signature();
  const std::vector<double> sig_carpet = signature();
  const std::vector<double> sig_outlier = signature();

  auto in_blob = [](std::size_t r, std::size_t c) { return r >= 4 && r < 12 && c >= 4 && c < 12; };
  auto in_outlier = [](std::size_t r, std::size_t c) { return r < 4 && c >= 12; };

  BlobTask task;
  Tensor clean_features({kSide * kSide, kDim});
  Tensor mixed_features({kSide * kSide, kDim});
  Tensor blob_mask({kSide, kSide});
  Tensor carpet_mask({kSide, kSide});
  Tensor carpet_mask_voided({kSide, kSide});
  task.outlier_region = Tensor({kSide, kSide});

  for (std::size_t r = 0; r < kSide; ++r) {
    for (std::size_t c = 0; c < kSide; ++c) {
      const std::size_t p = r * kSide + c;
      const bool blob = in_blob(r, c);
      const bool outlier = in_outlier(r, c);
      blob_mask.data[p] = blob ? 1.0 : 0.0;
      carpet_mask.data[p] = blob ? 0.0 : 1.0;
      carpet_mask_voided.data[p] = (blob || outlier) ? 0.0 : 1.0;
      task.outlier_region.data[p] = outlier ? 1.0 : 0.0;
      const std::vector<double>& base = blob ? sig_blob : sig_carpet;
      const std::vector<double>& mixed_base = outlier ? sig_outlier : base;
      for (std::size_t k = 0; k < kDim; ++k) {
        const double noise = 0.15 * rng.normal();
        clean_features(p, k) = base[k] + noise;
        mixed_features(p, k) = mixed_base[k] + noise;
      }
    }
  }

  task.closed_set.pixel_features = std::move(clean_features);
  task.closed_set.h = kSide;
  task.closed_set.w = kSide;
  task.closed_set.instances = {{blob_mask, 0}, {carpet_mask, 1}};

  task.with_outlier.pixel_features = std::move(mixed_features);
  task.with_outlier.h = kSide;
  task.with_outlier.w = kSide;
  // Labels under the pasted region are void: the carpet mask simply excludes
  // those pixels and only the contrastive term sees them.
  task.with_outlier.instances = {{blob_mask, 0}, {carpet_mask_voided, 1}};
  task.with_outlier.outlier_mask = task.outlier_region;
  return task;
}

}  // namespace maskscope
