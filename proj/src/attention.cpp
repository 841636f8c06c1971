#include "maskscope/attention.h"

#include <cmath>

#include "maskscope/rng.h"

namespace maskscope {

void AttentionMaskPair::validate() const {
  if (foreground.shape != background.shape || foreground.rank() != 2) {
    throw ShapeError("attention masks: foreground " + shape_str(foreground.shape) +
                     " and background " + shape_str(background.shape) +
                     " must be equal rank-2 shapes");
  }
  for (std::size_t i = 0; i < foreground.numel(); ++i) {
    const double f = foreground.data[i], b = background.data[i];
    const bool ok = (f == 0.0 && b == kNegInf) || (f == kNegInf && b == 0.0);
    if (!ok) throw ValidationError("attention masks: entries must be complementary {0, -inf}");
  }
}

AttentionMaskPair build_attention_masks(const Tensor& mask_probs, double threshold) {
  if (mask_probs.rank() != 2) {
    throw ShapeError("build_attention_masks: expected rank-2 probabilities, got " +
                     shape_str(mask_probs.shape));
  }
  AttentionMaskPair out;
  out.foreground = Tensor(mask_probs.shape);
  out.background = Tensor(mask_probs.shape);
  for (std::size_t i = 0; i < mask_probs.numel(); ++i) {
    const bool fg = mask_probs.data[i] >= threshold;
    out.foreground.data[i] = fg ? 0.0 : kNegInf;
    out.background.data[i] = fg ? kNegInf : 0.0;
  }
  return out;
}

namespace {

Tensor add_mask(const Tensor& logits, const Tensor& mask) {
  if (logits.shape != mask.shape) {
    throw ShapeError("attention: mask shape " + shape_str(mask.shape) +
                     " does not match logits " + shape_str(logits.shape));
  }
  Tensor out = logits;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    // 0 + finite stays finite; -inf suppresses the position outright.
    out.data[i] = (mask.data[i] == kNegInf) ? kNegInf : out.data[i] + mask.data[i];
  }
  return out;
}

// dZ from dS for a row-wise softmax S: dz_j = s_j (ds_j - sum_k ds_k s_k).
Tensor softmax_rows_backward(const Tensor& soft, const Tensor& dsoft) {
  Tensor dz(soft.shape);
  const std::size_t r = soft.rows(), c = soft.cols();
  for (std::size_t i = 0; i < r; ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < c; ++j) dot += dsoft(i, j) * soft(i, j);
    for (std::size_t j = 0; j < c; ++j) dz(i, j) = soft(i, j) * (dsoft(i, j) - dot);
  }
  return dz;
}

}  // namespace

Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& x_in,
                      const AttentionMaskPair* masks, AttentionMode mode, double logit_scale) {
  Tensor logits = matmul(q, transpose(k));
  if (logit_scale != 1.0) {
    for (double& x : logits.data) x *= logit_scale;
  }
  const bool needs_masks = mode != AttentionMode::CrossAttention;
  if (needs_masks && masks == nullptr) {
    throw ValidationError("attention: masked modes require an attention mask pair");
  }
  Tensor out;
  if (mode == AttentionMode::CrossAttention) {
    out = matmul(softmax_rows(logits), v);
  } else if (mode == AttentionMode::MaskedAttention) {
    out = matmul(softmax_rows(add_mask(logits, masks->foreground)), v);
  } else {
    out = matmul(softmax_rows(add_mask(logits, masks->foreground)), v);
    axpy(1.0, matmul(softmax_rows(add_mask(logits, masks->background)), v), out);
  }
  axpy(1.0, x_in, out);
  return out;
}

Tensor attention_forward(const AttentionWeights& w, const Tensor& x_in,
                         const Tensor& pixel_features, const AttentionMaskPair* masks,
                         AttentionMode mode, AttentionCache* cache, bool scale_logits) {
  if (x_in.rank() != 2 || pixel_features.rank() != 2) {
    throw ShapeError("attention_forward: x_in and pixel_features must be rank-2");
  }
  const std::size_t width = x_in.cols();
  if (pixel_features.cols() != width) {
    throw ShapeError("attention_forward: feature width mismatch, queries " +
                     shape_str(x_in.shape) + " vs pixels " + shape_str(pixel_features.shape));
  }
  for (const Tensor* m : {&w.w_q, &w.w_k, &w.w_v}) {
    if (m->rank() != 2 || m->rows() != width || m->cols() != width) {
      throw ShapeError("attention_forward: projections must be " + std::to_string(width) + "x" +
                       std::to_string(width));
    }
  }

  const double scale = scale_logits ? 1.0 / std::sqrt(static_cast<double>(width)) : 1.0;
  Tensor q = matmul(x_in, w.w_q);
  Tensor k = matmul(pixel_features, w.w_k);
  Tensor v = matmul(pixel_features, w.w_v);

  Tensor logits = matmul(q, transpose(k));
  for (double& x : logits.data) x *= scale;

  const bool needs_masks = mode != AttentionMode::CrossAttention;
  if (needs_masks) {
    if (masks == nullptr) {
      throw ValidationError("attention_forward: masked modes require an attention mask pair");
    }
    if (masks->foreground.shape != logits.shape) {
      throw ShapeError("attention_forward: mask shape " + shape_str(masks->foreground.shape) +
                       " does not match logits " + shape_str(logits.shape));
    }
  }

  Tensor soft_fg, soft_bg;
  if (mode == AttentionMode::CrossAttention) {
    soft_fg = softmax_rows(logits);
  } else {
    soft_fg = softmax_rows(add_mask(logits, masks->foreground));
    if (mode == AttentionMode::GlobalMaskedAttention) {
      soft_bg = softmax_rows(add_mask(logits, masks->background));
    }
  }

  Tensor out = matmul(soft_fg, v);
  if (mode == AttentionMode::GlobalMaskedAttention) axpy(1.0, matmul(soft_bg, v), out);
  axpy(1.0, x_in, out);

  if (cache) {
    cache->valid = true;
    cache->mode = mode;
    cache->logit_scale = scale;
    cache->x_in = x_in;
    cache->features = pixel_features;
    cache->weights = w;
    cache->masks = needs_masks ? *masks : AttentionMaskPair{};
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->soft_fg = std::move(soft_fg);
    cache->soft_bg = std::move(soft_bg);
  }
  return out;
}

AttentionGrads attention_backward(const AttentionCache& cache, const Tensor& upstream) {
  if (!cache.valid) throw ValidationError("attention_backward: forward cache missing");
  if (upstream.shape != cache.x_in.shape) {
    throw ShapeError("attention_backward: upstream shape " + shape_str(upstream.shape) +
                     " does not match output " + shape_str(cache.x_in.shape));
  }

  const bool gma = cache.mode == AttentionMode::GlobalMaskedAttention;
  const Tensor dsoft = matmul(upstream, transpose(cache.v));  // shared by fg and bg terms

  Tensor dv = matmul(transpose(cache.soft_fg), upstream);
  Tensor dlogits = softmax_rows_backward(cache.soft_fg, dsoft);
  if (gma) {
    axpy(1.0, matmul(transpose(cache.soft_bg), upstream), dv);
    axpy(1.0, softmax_rows_backward(cache.soft_bg, dsoft), dlogits);
  }
  if (cache.logit_scale != 1.0) {
    for (double& x : dlogits.data) x *= cache.logit_scale;
  }

  const Tensor dq = matmul(dlogits, cache.k);
  const Tensor dk = matmul(transpose(dlogits), cache.q);

  AttentionGrads g;
  g.dw_q = matmul(transpose(cache.x_in), dq);
  g.dw_k = matmul(transpose(cache.features), dk);
  g.dw_v = matmul(transpose(cache.features), dv);
  g.dx_in = upstream;  // residual path
  axpy(1.0, matmul(dq, transpose(cache.weights.w_q)), g.dx_in);
  g.dfeatures = matmul(dk, transpose(cache.weights.w_k));
  axpy(1.0, matmul(dv, transpose(cache.weights.w_v)), g.dfeatures);
  return g;
}

double relative_error(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

GradReport grad_check(std::uint64_t seed, double epsilon) {
  if (epsilon < 1e-7 || epsilon > 1e-3) {
    throw ValidationError("grad_check: epsilon must lie in [1e-7, 1e-3]");
  }
  constexpr std::size_t n = 3, p = 4, c = 2;
  Rng rng(seed);
  auto randn = [&rng](std::vector<std::size_t> shape, double scale) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = scale * rng.normal();
    return t;
  };

  AttentionWeights w{randn({c, c}, 0.7), randn({c, c}, 0.7), randn({c, c}, 0.7)};
  Tensor x_in = randn({n, c}, 1.0);
  Tensor features = randn({p, c}, 1.0);
  Tensor mask_probs({n, p});
  for (double& v : mask_probs.data) v = rng.uniform();
  const AttentionMaskPair masks = build_attention_masks(mask_probs);
  const Tensor upstream = randn({n, c}, 1.0);

  AttentionCache cache;
  attention_forward(w, x_in, features, &masks, AttentionMode::GlobalMaskedAttention, &cache);
  const AttentionGrads analytic = attention_backward(cache, upstream);

  auto loss_with = [&](const AttentionWeights& wx, const Tensor& xin, const Tensor& feats) {
    const Tensor out =
        attention_forward(wx, xin, feats, &masks, AttentionMode::GlobalMaskedAttention);
    double l = 0.0;
    for (std::size_t i = 0; i < out.numel(); ++i) l += out.data[i] * upstream.data[i];
    return l;
  };

  GradReport report;
  report.epsilon = epsilon;
  auto check_param = [&](const std::string& name, const Tensor& analytic_grad,
                         Tensor& param_slot) {
    double worst = 0.0;
    for (std::size_t i = 0; i < param_slot.numel(); ++i) {
      const double saved = param_slot.data[i];
      param_slot.data[i] = saved + epsilon;
      const double hi = loss_with(w, x_in, features);
      param_slot.data[i] = saved - epsilon;
      const double lo = loss_with(w, x_in, features);
      param_slot.data[i] = saved;
      const double numeric = (hi - lo) / (2.0 * epsilon);
      worst = std::max(worst, relative_error(analytic_grad.data[i], numeric));
    }
    report.per_param.emplace_back(name, worst);
    report.max_rel_error = std::max(report.max_rel_error, worst);
  };

  check_param("w_q", analytic.dw_q, w.w_q);
  check_param("w_k", analytic.dw_k, w.w_k);
  check_param("w_v", analytic.dw_v, w.w_v);
  check_param("x_in", analytic.dx_in, x_in);
  check_param("pixel_features", analytic.dfeatures, features);
  return report;
}

}  // namespace maskscope
