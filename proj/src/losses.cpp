#include "maskscope/losses.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace maskscope {

namespace {

constexpr double kDiceEps = 1e-8;
constexpr double kBceClamp = 1e-7;

void require_binary(const Tensor& t, const char* what) {
  for (double v : t.data) {
    if (v != 0.0 && v != 1.0) {
      throw ValidationError(std::string(what) + ": entries must be exactly 0 or 1");
    }
  }
}

double ce_row(const Tensor& logits, std::size_t row, std::size_t target) {
  const std::size_t c = logits.cols();
  double m = kNegInf;
  for (std::size_t j = 0; j < c; ++j) m = std::max(m, logits(row, j));
  double s = 0.0;
  for (std::size_t j = 0; j < c; ++j) s += std::exp(logits(row, j) - m);
  return std::log(s) + m - logits(row, target);
}

void ce_row_grad(const Tensor& logits, std::size_t row, std::size_t target, double weight,
                 Tensor& dlogits) {
  const std::size_t c = logits.cols();
  double m = kNegInf;
  for (std::size_t j = 0; j < c; ++j) m = std::max(m, logits(row, j));
  double s = 0.0;
  for (std::size_t j = 0; j < c; ++j) s += std::exp(logits(row, j) - m);
  for (std::size_t j = 0; j < c; ++j) {
    const double soft = std::exp(logits(row, j) - m) / s;
    dlogits(row, j) += weight * (soft - (j == target ? 1.0 : 0.0));
  }
}

// Minimum assignment cost of a square matrix (Jonker-Volgenant style).
double square_min_cost(const std::vector<std::vector<double>>& a) {
  const int n = static_cast<int>(a.size());
  if (n == 0) return 0.0;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  double total = 0.0;
  for (int j = 1; j <= n; ++j) {
    if (p[j]) total += a[p[j] - 1][j - 1];
  }
  return total;
}

// Cheapest way to cover every ground truth in `gts` using predictions with
// index >= first_pred; infeasible subproblems cost +inf.
double tail_min_cost(const Tensor& cost, std::size_t first_pred,
                     const std::vector<std::size_t>& gts) {
  const std::size_t preds = cost.rows() - first_pred;
  if (preds < gts.size()) return std::numeric_limits<double>::infinity();
  if (gts.empty()) return 0.0;
  // Pad with zero-cost dummy columns so unmatched predictions are free.
  std::vector<std::vector<double>> a(preds, std::vector<double>(preds, 0.0));
  for (std::size_t i = 0; i < preds; ++i) {
    for (std::size_t j = 0; j < gts.size(); ++j) a[i][j] = cost(first_pred + i, gts[j]);
  }
  return square_min_cost(a);
}

}  // namespace

MaskLossTerms bce_dice_mask_loss(const Tensor& pred_logits, const Tensor& gt_mask,
                                 const LossWeights& w) {
  if (pred_logits.shape != gt_mask.shape) {
    throw ShapeError("bce_dice_mask_loss: prediction " + shape_str(pred_logits.shape) +
                     " vs ground truth " + shape_str(gt_mask.shape));
  }
  require_binary(gt_mask, "bce_dice_mask_loss ground truth");
  const std::size_t n = pred_logits.numel();
  if (n == 0) throw ShapeError("bce_dice_mask_loss: empty mask");

  double bce = 0.0, inter = 0.0, sum_p = 0.0, sum_g = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = pred_logits.data[i];
    const double g = gt_mask.data[i];
    bce += std::max(x, 0.0) - x * g + std::log1p(std::exp(-std::abs(x)));
    const double prob = sigmoid(x);
    inter += prob * g;
    sum_p += prob;
    sum_g += g;
  }
  MaskLossTerms out;
  out.bce = bce / static_cast<double>(n);
  out.dice = 1.0 - 2.0 * inter / (sum_p + sum_g + kDiceEps);
  out.masks = w.bce * out.bce + w.dice * out.dice;
  return out;
}

MatchResult hungarian_assign(const Tensor& cost) {
  if (cost.rank() != 2) {
    throw ShapeError("hungarian_assign: expected rank-2 cost, got " + shape_str(cost.shape));
  }
  const std::size_t n_pred = cost.rows(), n_gt = cost.cols();
  if (n_pred < n_gt) {
    throw ValidationError("hungarian_assign: " + std::to_string(n_gt) +
                          " ground truths exceed " + std::to_string(n_pred) + " predictions");
  }
  for (double v : cost.data) {
    if (!std::isfinite(v)) throw ValidationError("hungarian_assign: costs must be finite");
  }

  std::vector<std::size_t> remaining(n_gt);
  for (std::size_t j = 0; j < n_gt; ++j) remaining[j] = j;
  const double optimum = tail_min_cost(cost, 0, remaining);
  const double tol = 1e-9 * std::max(1.0, std::abs(optimum));

  MatchResult out;
  double fixed = 0.0;
  std::vector<char> matched_pred(n_pred, 0);
  // Fix predictions in ascending order, each to its smallest feasible ground
  // truth, so ties resolve to the lexicographically smallest pair list.
  for (std::size_t i = 0; i < n_pred && !remaining.empty(); ++i) {
    for (std::size_t slot = 0; slot < remaining.size(); ++slot) {
      const std::size_t j = remaining[slot];
      std::vector<std::size_t> rest = remaining;
      rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(slot));
      const double tail = tail_min_cost(cost, i + 1, rest);
      if (fixed + cost(i, j) + tail <= optimum + tol) {
        out.pairs.emplace_back(i, j);
        matched_pred[i] = 1;
        fixed += cost(i, j);
        remaining = std::move(rest);
        break;
      }
    }
  }
  for (std::size_t i = 0; i < n_pred; ++i) {
    if (!matched_pred[i]) out.unmatched_predictions.push_back(i);
  }
  out.total_cost = fixed;
  return out;
}

namespace {

void mask_loss_grad(const Tensor& pred_logits, const Tensor& gt_mask, const LossWeights& w,
                    double* dplane) {
  const std::size_t n = pred_logits.numel();
  double inter = 0.0, sum_p = 0.0, sum_g = 0.0;
  std::vector<double> prob(n);
  for (std::size_t i = 0; i < n; ++i) {
    prob[i] = sigmoid(pred_logits.data[i]);
    inter += prob[i] * gt_mask.data[i];
    sum_p += prob[i];
    sum_g += gt_mask.data[i];
  }
  const double denom = sum_p + sum_g + kDiceEps;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = gt_mask.data[i];
    const double dbce = (prob[i] - g) / static_cast<double>(n);
    const double ddice_dp = (-2.0 * g * denom + 2.0 * inter) / (denom * denom);
    const double ddice = ddice_dp * prob[i] * (1.0 - prob[i]);
    dplane[i] += w.bce * dbce + w.dice * ddice;
  }
}

}  // namespace

TrainingLossBreakdown training_loss(const Prediction& p, const std::vector<GtInstance>& gt,
                                    const LossWeights& w, LossGrads* grads) {
  p.validate();
  const std::size_t n = p.num_queries(), z = p.num_classes();
  const std::size_t px = p.num_pixels();
  if (gt.size() > n) {
    throw ValidationError("training_loss: more ground-truth instances than predictions");
  }
  for (const GtInstance& inst : gt) {
    if (inst.mask.shape != std::vector<std::size_t>{p.height(), p.width()}) {
      throw ShapeError("training_loss: ground-truth mask shape " + shape_str(inst.mask.shape) +
                       " does not match prediction");
    }
    require_binary(inst.mask, "training_loss ground truth");
    if (inst.class_id >= z) {
      throw ValidationError("training_loss: class id " + std::to_string(inst.class_id) +
                            " out of range for " + std::to_string(z) + " classes");
    }
  }

  std::vector<std::vector<MaskLossTerms>> terms(n, std::vector<MaskLossTerms>(gt.size()));
  std::vector<std::vector<double>> ce(n, std::vector<double>(gt.size()));
  Tensor cost({n, gt.size()});
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor plane = Tensor({p.height(), p.width()},
                                std::vector<double>(p.mask_logits.data.begin() + i * px,
                                                    p.mask_logits.data.begin() + (i + 1) * px));
    for (std::size_t j = 0; j < gt.size(); ++j) {
      terms[i][j] = bce_dice_mask_loss(plane, gt[j].mask, w);
      ce[i][j] = ce_row(p.class_logits, i, gt[j].class_id);
      cost(i, j) = terms[i][j].masks + w.ce_matched * ce[i][j];
    }
  }

  TrainingLossBreakdown out;
  out.match = hungarian_assign(cost);

  if (grads) {
    grads->d_class_logits = Tensor(p.class_logits.shape);
    grads->d_mask_logits = Tensor(p.mask_logits.shape);
  }
  for (const auto& [i, j] : out.match.pairs) {
    out.mask_bce += terms[i][j].bce;
    out.mask_dice += terms[i][j].dice;
    out.ce += w.ce_matched * ce[i][j];
    if (grads) {
      ce_row_grad(p.class_logits, i, gt[j].class_id, w.ce_matched, grads->d_class_logits);
      const Tensor plane = Tensor({p.height(), p.width()},
                                  std::vector<double>(p.mask_logits.data.begin() + i * px,
                                                      p.mask_logits.data.begin() + (i + 1) * px));
      mask_loss_grad(plane, gt[j].mask, w, grads->d_mask_logits.data.data() + i * px);
    }
  }
  for (std::size_t i : out.match.unmatched_predictions) {
    out.ce += w.ce_no_object * ce_row(p.class_logits, i, z);
    if (grads) ce_row_grad(p.class_logits, i, z, w.ce_no_object, grads->d_class_logits);
  }
  out.total = w.bce * out.mask_bce + w.dice * out.mask_dice + out.ce;
  return out;
}

namespace {

// Per-pixel maximum marginal class score plus the argmax class, shared by the
// likelihood value and its backward pass.
struct MarginalMax {
  Tensor posts;                     // N x Z
  Tensor probs;                     // N x P
  std::vector<double> max_score;    // per pixel
  std::vector<std::size_t> argmax;  // per pixel
};

MarginalMax marginal_max(const Prediction& p) {
  MarginalMax mm;
  mm.posts = class_posteriors(p);
  mm.probs = mask_probabilities(p);
  const Tensor scores = matmul(transpose(mm.posts), mm.probs);
  const std::size_t z = scores.rows(), px = scores.cols();
  mm.max_score.resize(px);
  mm.argmax.resize(px);
  for (std::size_t i = 0; i < px; ++i) {
    std::size_t best = 0;
    double best_v = scores(0, i);
    for (std::size_t c = 1; c < z; ++c) {
      if (scores(c, i) > best_v) {
        best_v = scores(c, i);
        best = c;
      }
    }
    mm.max_score[i] = best_v;
    mm.argmax[i] = best;
  }
  return mm;
}

// Scatter per-pixel gradients of the max marginal score into the class and
// mask logits (the argmax branch carries the whole gradient).
void marginal_max_backward(const Prediction& p, const MarginalMax& mm,
                           const std::vector<double>& dmax, LossGrads* grads) {
  const std::size_t n = p.num_queries(), z = p.num_classes(), px = p.num_pixels();
  Tensor dposts({n, z});
  Tensor dprobs({n, px});
  for (std::size_t i = 0; i < px; ++i) {
    if (dmax[i] == 0.0) continue;
    const std::size_t zi = mm.argmax[i];
    for (std::size_t q = 0; q < n; ++q) {
      dposts(q, zi) += dmax[i] * mm.probs(q, i);
      dprobs(q, i) += dmax[i] * mm.posts(q, zi);
    }
  }
  grads->d_class_logits = Tensor(p.class_logits.shape);
  grads->d_mask_logits = Tensor(p.mask_logits.shape);
  for (std::size_t q = 0; q < n; ++q) {
    double dot = 0.0;
    for (std::size_t c = 0; c < z; ++c) dot += dposts(q, c) * mm.posts(q, c);
    for (std::size_t c = 0; c < z; ++c) {
      grads->d_class_logits(q, c) = mm.posts(q, c) * (dposts(q, c) - dot);
    }
    for (std::size_t i = 0; i < px; ++i) {
      const double s = mm.probs(q, i);
      grads->d_mask_logits.data[q * px + i] = dprobs(q, i) * s * (1.0 - s);
    }
  }
}

double contrastive_branch(double l, double outlier, double margin, ContrastiveMode mode,
                          double* dbranch_dl) {
  if (outlier != 0.0) {
    const double b = std::max(0.0, margin - l);
    if (dbranch_dl) *dbranch_dl = (margin - l > 0.0) ? -1.0 : 0.0;
    return b;
  }
  if (mode == ContrastiveMode::SymmetricInlier) {
    if (dbranch_dl) *dbranch_dl = 1.0;
    return l + 1.0;
  }
  if (dbranch_dl) *dbranch_dl = 1.0;
  return l;
}

void check_outlier_inputs(const Tensor& values, const Tensor& outlier_mask, double margin) {
  if (values.shape != outlier_mask.shape) {
    throw ShapeError("outlier loss: score shape " + shape_str(values.shape) +
                     " does not match mask " + shape_str(outlier_mask.shape));
  }
  require_binary(outlier_mask, "outlier mask");
  if (margin <= 0.0) throw ValidationError("contrastive_loss: margin must be positive");
}

}  // namespace

ScoreMap negative_likelihood(const Prediction& p) {
  p.validate();
  const MarginalMax mm = marginal_max(p);
  ScoreMap out{Tensor({p.height(), p.width()}), ScoreKind::NegativeLikelihood};
  for (std::size_t i = 0; i < mm.max_score.size(); ++i) out.values.data[i] = -mm.max_score[i];
  return out;
}

double contrastive_loss(const ScoreMap& neg_likelihood, const Tensor& outlier_mask, double margin,
                        ContrastiveMode mode) {
  check_outlier_inputs(neg_likelihood.values, outlier_mask, margin);
  const std::size_t n = neg_likelihood.values.numel();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double b =
        contrastive_branch(neg_likelihood.values.data[i], outlier_mask.data[i], margin, mode,
                           nullptr);
    total += 0.5 * b * b;
  }
  return total / static_cast<double>(n);
}

double contrastive_loss_grads(const Prediction& p, const Tensor& outlier_mask, double margin,
                              ContrastiveMode mode, LossGrads* grads) {
  p.validate();
  const MarginalMax mm = marginal_max(p);
  const std::size_t px = p.num_pixels();
  if (outlier_mask.shape != std::vector<std::size_t>{p.height(), p.width()}) {
    throw ShapeError("contrastive_loss_grads: outlier mask shape mismatch");
  }
  require_binary(outlier_mask, "outlier mask");
  if (margin <= 0.0) throw ValidationError("contrastive_loss: margin must be positive");

  double total = 0.0;
  std::vector<double> dmax(px, 0.0);
  for (std::size_t i = 0; i < px; ++i) {
    const double l = -mm.max_score[i];
    double db = 0.0;
    const double b = contrastive_branch(l, outlier_mask.data[i], margin, mode, &db);
    total += 0.5 * b * b;
    // dL/dmax = (b * db/dl) * dl/dmax / px with dl/dmax = -1.
    dmax[i] = -(b * db) / static_cast<double>(px);
  }
  if (grads) marginal_max_backward(p, mm, dmax, grads);
  return total / static_cast<double>(px);
}

double outlier_bce_loss(const ScoreMap& neg_likelihood, const Tensor& outlier_mask) {
  if (neg_likelihood.values.shape != outlier_mask.shape) {
    throw ShapeError("outlier_bce_loss: shape mismatch");
  }
  require_binary(outlier_mask, "outlier mask");
  const std::size_t n = neg_likelihood.values.numel();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double prob =
        std::clamp(-neg_likelihood.values.data[i], kBceClamp, 1.0 - kBceClamp);
    total -= (outlier_mask.data[i] == 0.0) ? std::log(prob) : std::log(1.0 - prob);
  }
  return total / static_cast<double>(n);
}

double outlier_bce_loss_grads(const Prediction& p, const Tensor& outlier_mask, LossGrads* grads) {
  p.validate();
  const MarginalMax mm = marginal_max(p);
  const std::size_t px = p.num_pixels();
  if (outlier_mask.shape != std::vector<std::size_t>{p.height(), p.width()}) {
    throw ShapeError("outlier_bce_loss_grads: outlier mask shape mismatch");
  }
  require_binary(outlier_mask, "outlier mask");

  double total = 0.0;
  std::vector<double> dmax(px, 0.0);
  for (std::size_t i = 0; i < px; ++i) {
    const double raw = mm.max_score[i];  // -l
    const bool clamped = raw <= kBceClamp || raw >= 1.0 - kBceClamp;
    const double prob = std::clamp(raw, kBceClamp, 1.0 - kBceClamp);
    double dprob = 0.0;
    if (outlier_mask.data[i] == 0.0) {
      total -= std::log(prob);
      dprob = -1.0 / prob;
    } else {
      total -= std::log(1.0 - prob);
      dprob = 1.0 / (1.0 - prob);
    }
    dmax[i] = clamped ? 0.0 : dprob / static_cast<double>(px);
  }
  if (grads) marginal_max_backward(p, mm, dmax, grads);
  return total / static_cast<double>(px);
}

OodLossBreakdown ood_total_loss(const Prediction& p, const std::vector<GtInstance>& gt,
                                const Tensor& outlier_mask, double margin, ContrastiveMode mode,
                                const LossWeights& w, LossGrads* grads) {
  OodLossBreakdown out;
  LossGrads closed_grads, cl_grads;
  out.closed_set = training_loss(p, gt, w, grads ? &closed_grads : nullptr);
  out.contrastive =
      contrastive_loss_grads(p, outlier_mask, margin, mode, grads ? &cl_grads : nullptr);
  out.total = out.closed_set.total + out.contrastive;
  if (grads) {
    grads->d_class_logits = closed_grads.d_class_logits;
    grads->d_mask_logits = closed_grads.d_mask_logits;
    axpy(1.0, cl_grads.d_class_logits, grads->d_class_logits);
    axpy(1.0, cl_grads.d_mask_logits, grads->d_mask_logits);
  }
  return out;
}

}  // namespace maskscope
