#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "maskscope/tensor.h"

namespace maskscope {

enum class AttentionMode {
  CrossAttention,         // plain softmax(QK^T)V + X_in
  MaskedAttention,        // foreground-masked logits only
  GlobalMaskedAttention,  // foreground term + complementary background term
};

// Complementary {0, kNegInf} logit masks: at each (query, pixel) exactly one
// of foreground/background is 0.
struct AttentionMaskPair {
  Tensor foreground;  // N x P
  Tensor background;  // N x P

  void validate() const;
};

// mask_probs holds per-pixel foreground probabilities; entries >= threshold
// open the foreground mask, everything else opens the background mask.
AttentionMaskPair build_attention_masks(const Tensor& mask_probs, double threshold = 0.5);

// Learnable square projections over the shared feature width.
struct AttentionWeights {
  Tensor w_q, w_k, w_v;  // C x C
};

struct AttentionCache {
  bool valid = false;
  AttentionMode mode = AttentionMode::GlobalMaskedAttention;
  double logit_scale = 1.0;
  Tensor x_in, features;       // N x C, P x C
  AttentionWeights weights;
  AttentionMaskPair masks;     // empty tensors in CrossAttention mode
  Tensor q, k, v;              // N x C, P x C, P x C
  Tensor soft_fg, soft_bg;     // N x P row softmaxes (soft_bg empty unless GMA)
};

struct AttentionGrads {
  Tensor dw_q, dw_k, dw_v;
  Tensor dx_in;
  Tensor dfeatures;
};

// Attention on already-projected operands; masks may be null for
// CrossAttention. Used by attention_forward and directly testable against
// hand-worked instances.
Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& x_in,
                      const AttentionMaskPair* masks, AttentionMode mode,
                      double logit_scale = 1.0);

// Full layer: Q = X_in W_q, K = F W_k, V = F W_v, then attention_core plus
// the residual X_in. scale_logits multiplies QK^T by 1/sqrt(C) (off by
// default; the masked-attention formulation carries no scale factor).
Tensor attention_forward(const AttentionWeights& w, const Tensor& x_in,
                         const Tensor& pixel_features, const AttentionMaskPair* masks,
                         AttentionMode mode, AttentionCache* cache = nullptr,
                         bool scale_logits = false);

// Analytic gradients of <upstream, output> w.r.t. every input of the layer.
// Mask construction is a step function and contributes no gradient; fully
// masked positions therefore receive exactly zero.
AttentionGrads attention_backward(const AttentionCache& cache, const Tensor& upstream);

struct GradReport {
  std::vector<std::pair<std::string, double>> per_param;  // name -> max rel. error
  double epsilon = 0.0;
  double max_rel_error = 0.0;
};

// Compares attention_backward against central finite differences on a seeded
// random instance (3 queries, 4 pixels, width 2, GMA). epsilon must lie in
// [1e-7, 1e-3].
GradReport grad_check(std::uint64_t seed, double epsilon);

double relative_error(double a, double b);

}  // namespace maskscope
