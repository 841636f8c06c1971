#include "maskscope/selfcheck.h"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "json.hpp"
#include "maskscope/attention.h"
#include "maskscope/commands.h"
#include "maskscope/decoder.h"
#include "maskscope/io.h"
#include "maskscope/metrics.h"
#include "maskscope/rng.h"

namespace maskscope {

namespace fs = std::filesystem;
using nlohmann::json;

Tensor reference_marginal_scores(const Prediction& p) {
  const std::size_t n = p.num_queries(), z = p.num_classes(), px = p.num_pixels();
  Tensor out({z, px});
  for (std::size_t q = 0; q < n; ++q) {
    double denom = 0.0;
    for (std::size_t c = 0; c < z; ++c) denom += std::exp(p.class_logits(q, c));
    for (std::size_t c = 0; c < z; ++c) {
      const double post = std::exp(p.class_logits(q, c)) / denom;
      for (std::size_t i = 0; i < px; ++i) {
        out(c, i) += post * (1.0 / (1.0 + std::exp(-p.mask_logits.data[q * px + i])));
      }
    }
  }
  return out;
}

Tensor reference_anomaly_map(const Prediction& p) {
  const Tensor scores = reference_marginal_scores(p);
  Tensor out({p.height(), p.width()});
  for (std::size_t i = 0; i < out.numel(); ++i) {
    double best = scores(0, i);
    for (std::size_t c = 1; c < scores.rows(); ++c) best = std::max(best, scores(c, i));
    out.data[i] = 1.0 - best;
  }
  return out;
}

Tensor reference_negative_likelihood(const Prediction& p) {
  const Tensor scores = reference_marginal_scores(p);
  Tensor out({p.height(), p.width()});
  for (std::size_t i = 0; i < out.numel(); ++i) {
    double best = scores(0, i);
    for (std::size_t c = 1; c < scores.rows(); ++c) best = std::max(best, scores(c, i));
    out.data[i] = -best;
  }
  return out;
}

Tensor reference_background(const Tensor& class_logits, const Tensor& mask_logits) {
  const std::size_t nk = mask_logits.dim(0);
  const std::size_t h = mask_logits.dim(1), w = mask_logits.dim(2), px = h * w;
  Tensor out = Tensor::full({h, w}, 1.0);
  for (std::size_t i = 0; i < px; ++i) {
    double strongest = 0.0;
    for (std::size_t q = 0; q < nk; ++q) {
      double denom = 0.0, best = 0.0;
      for (std::size_t c = 0; c < class_logits.cols(); ++c) {
        denom += std::exp(class_logits(q, c));
      }
      for (std::size_t c = 0; c < class_logits.cols(); ++c) {
        best = std::max(best, std::exp(class_logits(q, c)) / denom);
      }
      const double prob = 1.0 / (1.0 + std::exp(-mask_logits.data[q * px + i]));
      strongest = std::max(strongest, best * prob);
    }
    out.data[i] = 1.0 - strongest;
  }
  return out;
}

double reference_min_assignment_cost(const Tensor& cost) {
  const std::size_t n_pred = cost.rows(), n_gt = cost.cols();
  std::vector<char> used(n_pred, 0);
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, double)> recurse = [&](std::size_t j, double acc) {
    if (acc >= best) return;
    if (j == n_gt) {
      best = acc;
      return;
    }
    for (std::size_t i = 0; i < n_pred; ++i) {
      if (used[i]) continue;
      used[i] = 1;
      recurse(j + 1, acc + cost(i, j));
      used[i] = 0;
    }
  };
  recurse(0, 0.0);
  return best;
}

int reference_flood_fill_count(const Tensor& binary, int connectivity) {
  const std::size_t h = binary.rows(), w = binary.cols();
  std::vector<char> seen(h * w, 0);
  int count = 0;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < h * w; ++start) {
    if (binary.data[start] == 0.0 || seen[start]) continue;
    ++count;
    stack.assign(1, start);
    seen[start] = 1;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      const long r = static_cast<long>(i / w), c = static_cast<long>(i % w);
      for (long dr = -1; dr <= 1; ++dr) {
        for (long dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          if (connectivity == 4 && dr != 0 && dc != 0) continue;
          const long nr = r + dr, nc = c + dc;
          if (nr < 0 || nc < 0 || nr >= static_cast<long>(h) || nc >= static_cast<long>(w)) {
            continue;
          }
          const std::size_t j = static_cast<std::size_t>(nr) * w + static_cast<std::size_t>(nc);
          if (binary.data[j] == 1.0 && !seen[j]) {
            seen[j] = 1;
            stack.push_back(j);
          }
        }
      }
    }
  }
  return count;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

Prediction random_prediction(Rng& rng, std::size_t n, std::size_t z, std::size_t h,
                             std::size_t w) {
  Prediction p;
  p.class_logits = Tensor({n, z + 1});
  for (double& v : p.class_logits.data) v = 2.0 * rng.normal();
  p.mask_logits = Tensor({n, h, w});
  for (double& v : p.mask_logits.data) v = 3.0 * rng.normal();
  return p;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
  }
  return worst;
}

CriterionResult make_criterion(int id, std::string name) {
  CriterionResult r;
  r.id = id;
  r.name = std::move(name);
  return r;
}

CriterionResult finish(CriterionResult r, bool pass, std::string detail,
                       Clock::time_point start) {
  r.pass = pass;
  r.detail = std::move(detail);
  r.seconds = seconds_since(start);
  return r;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

CriterionResult check_equation_oracles() {
  CriterionResult r = make_criterion(1, "equation oracles vs brute force");
  const auto start = Clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(1000 + seed);
    const std::size_t n = 1 + rng.index(8), z = 2 + rng.index(5);
    const std::size_t h = 1 + rng.index(16), w = 1 + rng.index(16);
    const Prediction p = random_prediction(rng, n, z, h, w);

    worst = std::max(worst, max_abs_diff(marginal_class_scores(p), reference_marginal_scores(p)));
    worst = std::max(worst, max_abs_diff(mask_anomaly_score(p).values, reference_anomaly_map(p)));
    worst = std::max(worst, max_abs_diff(negative_likelihood(p).values,
                                         reference_negative_likelihood(p)));

    KnownSubset k;
    k.class_logits = Tensor({n, z});
    for (double& v : k.class_logits.data) v = 2.0 * rng.normal();
    k.mask_logits = Tensor({n, h, w});
    for (double& v : k.mask_logits.data) v = 3.0 * rng.normal();
    for (std::size_t q = 0; q < n; ++q) k.query_indices.push_back(q);
    worst = std::max(worst, max_abs_diff(background_region(k).values,
                                         reference_background(k.class_logits, k.mask_logits)));
  }
  const double elapsed = seconds_since(start);
  return finish(std::move(r), worst < 1e-9 && elapsed < 10.0,
                "max |diff| = " + fmt(worst) + ", " + fmt(elapsed) + " s", start);
}

CriterionResult check_attention_equivalences() {
  CriterionResult r = make_criterion(2, "attention mode equivalences");
  const auto start = Clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(2000 + seed);
    const std::size_t n = 1 + rng.index(4), p = 1 + rng.index(6), c = 1 + rng.index(4);
    auto randn = [&rng](std::vector<std::size_t> shape) {
      Tensor t(std::move(shape));
      for (double& v : t.data) v = rng.normal();
      return t;
    };
    const AttentionWeights w{randn({c, c}), randn({c, c}), randn({c, c})};
    const Tensor x_in = randn({n, c});
    const Tensor features = randn({p, c});

    Tensor probs({n, p});
    for (double& v : probs.data) v = rng.uniform();
    const AttentionMaskPair masks = build_attention_masks(probs);

    // Disabling the background term must reduce GMA to MA.
    AttentionMaskPair fg_only = masks;
    fg_only.background = Tensor::full({n, p}, kNegInf);
    const Tensor gma = attention_forward(w, x_in, features, &fg_only,
                                         AttentionMode::GlobalMaskedAttention);
    const Tensor ma = attention_forward(w, x_in, features, &masks,
                                        AttentionMode::MaskedAttention);
    worst = std::max(worst, max_abs_diff(gma, ma));

    // An all-foreground mask adds zeros, so MA must equal CA.
    const AttentionMaskPair all_fg = build_attention_masks(Tensor::full({n, p}, 1.0));
    const Tensor ma_open =
        attention_forward(w, x_in, features, &all_fg, AttentionMode::MaskedAttention);
    const Tensor ca =
        attention_forward(w, x_in, features, nullptr, AttentionMode::CrossAttention);
    worst = std::max(worst, max_abs_diff(ma_open, ca));
  }
  return finish(std::move(r), worst <= 1e-12, "max |diff| = " + fmt(worst), start);
}

namespace {

// Tiny decoder instance for finite differences. Query init is drawn at unit
// scale so the layer-one mask logits stay clear of the 0.5 threshold under
// the +-epsilon probes.
struct TinyDecoderInstance {
  ToyDecoder decoder;
  TrainingSample sample;
};

TinyDecoderInstance make_tiny_instance(std::uint64_t seed) {
  Rng rng(seed);
  auto randn = [&rng](std::vector<std::size_t> shape, double scale) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = scale * rng.normal();
    return t;
  };
  const ToyDecoderConfig cfg{1, 2, 3, 2};
  TinyDecoderInstance out;
  out.decoder.cfg = cfg;
  out.decoder.layers.push_back(
      {randn({3, 3}, 0.6), randn({3, 3}, 0.6), randn({3, 3}, 0.6)});
  out.decoder.class_head = randn({3, 3}, 0.6);
  out.decoder.query_init = randn({2, 3}, 1.0);

  out.sample.pixel_features = randn({16, 3}, 1.0);
  out.sample.h = 4;
  out.sample.w = 4;
  Tensor mask0({4, 4}), mask1({4, 4});
  for (std::size_t i = 0; i < 16; ++i) {
    const bool a = rng.uniform() < 0.5;
    mask0.data[i] = a ? 1.0 : 0.0;
    mask1.data[i] = a ? 0.0 : 1.0;
  }
  out.sample.instances = {{mask0, 0}, {mask1, 1}};
  return out;
}

double decoder_fd_worst_error(std::uint64_t seed, double epsilon) {
  TinyDecoderInstance inst = make_tiny_instance(seed);
  DecoderGrads grads;
  sample_loss(inst.decoder, inst.sample, &grads);

  double worst = 0.0;
  auto probe = [&](Tensor& param, const Tensor& analytic) {
    for (std::size_t i = 0; i < param.numel(); ++i) {
      const double saved = param.data[i];
      param.data[i] = saved + epsilon;
      const double hi = sample_loss(inst.decoder, inst.sample);
      param.data[i] = saved - epsilon;
      const double lo = sample_loss(inst.decoder, inst.sample);
      param.data[i] = saved;
      const double numeric = (hi - lo) / (2.0 * epsilon);
      worst = std::max(worst, relative_error(analytic.data[i], numeric));
    }
  };
  probe(inst.decoder.query_init, grads.d_query_init);
  probe(inst.decoder.class_head, grads.d_class_head);
  for (std::size_t l = 0; l < inst.decoder.layers.size(); ++l) {
    probe(inst.decoder.layers[l].w_q, grads.layers[l].w_q);
    probe(inst.decoder.layers[l].w_k, grads.layers[l].w_k);
    probe(inst.decoder.layers[l].w_v, grads.layers[l].w_v);
  }
  return worst;
}

}  // namespace

CriterionResult check_gradients() {
  CriterionResult r = make_criterion(3, "finite-difference gradient checks");
  const auto start = Clock::now();
  double worst_attention = 0.0, worst_decoder = 0.0;
  for (std::uint64_t seed = 1; seed <= 32; ++seed) {
    worst_attention = std::max(worst_attention, grad_check(seed, 1e-5).max_rel_error);
    worst_decoder = std::max(worst_decoder, decoder_fd_worst_error(3000 + seed, 1e-5));
  }
  const double elapsed = seconds_since(start);
  const bool pass = worst_attention < 1e-5 && worst_decoder < 1e-5 && elapsed < 30.0;
  return finish(std::move(r), pass,
                "attention max rel = " + fmt(worst_attention) + ", decoder max rel = " +
                    fmt(worst_decoder) + ", " + fmt(elapsed) + " s",
                start);
}

CriterionResult check_hungarian_optimality() {
  CriterionResult r = make_criterion(4, "assignment optimality vs exhaustive enumeration");
  const auto start = Clock::now();
  double worst = 0.0;
  for (std::uint64_t trial = 0; trial < 1000; ++trial) {
    Rng rng(4000 + trial);
    const std::size_t n_pred = 1 + rng.index(6);
    const std::size_t n_gt = 1 + rng.index(n_pred);
    Tensor cost({n_pred, n_gt});
    for (double& v : cost.data) v = rng.uniform(0.0, 10.0);
    const MatchResult match = hungarian_assign(cost);
    if (match.pairs.size() != n_gt) {
      return finish(std::move(r), false, "incomplete assignment", start);
    }
    worst = std::max(worst,
                     std::abs(match.total_cost - reference_min_assignment_cost(cost)));
  }
  return finish(std::move(r), worst < 1e-9, "max |cost diff| = " + fmt(worst), start);
}

namespace {

bool close(double a, double b, double tol = 1e-12) { return std::abs(a - b) <= tol; }

void write_scores_gt(const fs::path& dir, const std::string& stem,
                     const std::vector<double>& scores, const std::vector<std::uint8_t>& gt) {
  fs::create_directories(dir / "scores");
  fs::create_directories(dir / "gt");
  save_tensor((dir / "scores" / (stem + ".mt")).string(),
              Tensor({1, scores.size()}, std::vector<double>(scores)));
  save_u8((dir / "gt" / (stem + ".mt")).string(), gt, {1, gt.size()});
}

}  // namespace

CriterionResult check_metric_hand_oracles(const std::string& work_dir) {
  CriterionResult r = make_criterion(5, "metric hand oracles through the eval pipeline");
  const auto start = Clock::now();
  const fs::path root = fs::path(work_dir) / "metric_oracles";
  fs::create_directories(root);
  std::string failure;

  {  // average precision on a 4-pixel ranking
    const fs::path dir = root / "auprc";
    write_scores_gt(dir, "case", {0.9, 0.8, 0.7, 0.1}, {1, 0, 1, 0});
    const json rep = run_eval_pixel({(dir / "scores").string(), (dir / "gt").string(), 1});
    if (!close(rep.at("auprc").get<double>(), 0.5 + 0.5 * (2.0 / 3.0))) {
      failure = "auprc = " + rep.at("auprc").dump();
    }
  }
  {  // false-positive rate at the 95% recall threshold
    const fs::path dir = root / "fpr";
    write_scores_gt(dir, "case", {0.9, 0.8, 0.7, 0.6, 0.65, 0.5, 0.4}, {1, 1, 1, 1, 0, 0, 0});
    const json rep = run_eval_pixel({(dir / "scores").string(), (dir / "gt").string(), 1});
    if (failure.empty() && !close(rep.at("fpr95").get<double>(), 1.0 / 3.0)) {
      failure = "fpr95 = " + rep.at("fpr95").dump();
    }
  }
  {  // component-level sIoU / PPV / F1*
    const fs::path dir = root / "component";
    fs::create_directories(dir / "pred");
    fs::create_directories(dir / "gt");
    save_u8((dir / "pred" / "case.mt").string(), {0, 1, 1, 0}, {1, 4});
    save_u8((dir / "gt" / "case.mt").string(), {1, 1, 0, 0}, {1, 4});
    const json rep =
        run_eval_component({(dir / "pred").string(), (dir / "gt").string(), 0.25, 8, 1});
    if (failure.empty() &&
        (!close(rep.at("siou_mean").get<double>(), 1.0 / 3.0) ||
         !close(rep.at("ppv_mean").get<double>(), 0.5) ||
         !close(rep.at("f1_star").get<double>(), 1.0))) {
      failure = "component metrics " + rep.dump();
    }
  }
  const std::string tax_path = (root / "tax.json").string();
  {
    std::ofstream tax(tax_path);
    tax << R"({"things":[0],"stuff":[1],"road":1,"void":65535,"unknown_id":2})";
  }
  {  // open-IoU confusion example
    const fs::path dir = root / "openiou";
    fs::create_directories(dir / "pred");
    fs::create_directories(dir / "gt");
    LabelMap pred(1, 4), gt(1, 4);
    pred.labels = {0, 1, 1, 1};
    gt.labels = {0, 0, 1, 2};
    save_labelmap((dir / "pred" / "case.png").string(), pred);
    save_labelmap((dir / "gt" / "case.png").string(), gt);
    const json rep =
        run_eval_open_iou({(dir / "pred").string(), (dir / "gt").string(), tax_path, 1});
    const auto per_class = rep.at("open_iou_per_class");
    if (failure.empty() &&
        (!close(per_class.at(0).get<double>(), 0.5) ||
         !close(per_class.at(1).get<double>(), 1.0 / 3.0) ||
         !close(rep.at("open_iou_mean").get<double>(), (0.5 + 1.0 / 3.0) / 2.0))) {
      failure = "open-iou " + rep.dump();
    }
  }
  {  // panoptic quality on a single 0.6-IoU match
    const fs::path dir = root / "pq";
    fs::create_directories(dir / "pred");
    fs::create_directories(dir / "gt");
    PanopticMap pred(1, 8), gt(1, 8);
    for (std::size_t i = 0; i < 5; ++i) {
      gt.class_ids[i] = 0;
      gt.instance_ids[i] = 1;
    }
    for (std::size_t i = 0; i < 3; ++i) {
      pred.class_ids[i] = 0;
      pred.instance_ids[i] = 1;
    }
    save_panoptic((dir / "pred" / "case.mt").string(), pred);
    save_panoptic((dir / "gt" / "case.mt").string(), gt);
    const json rep = run_eval_pq({(dir / "pred").string(), (dir / "gt").string(), tax_path, 1});
    if (failure.empty() &&
        (!close(rep.at("pq").get<double>(), 0.6) || !close(rep.at("sq").get<double>(), 0.6) ||
         !close(rep.at("rq").get<double>(), 1.0))) {
      failure = "pq " + rep.dump();
    }
  }
  return finish(std::move(r), failure.empty(), failure.empty() ? "all hand values exact" : failure,
                start);
}

CriterionResult check_toy_training() {
  CriterionResult r = make_criterion(6, "toy training convergence and outlier margin");
  const auto start = Clock::now();
  const json rep = run_demo_decoder({});
  const double ratio = rep.at("loss_ratio").get<double>();
  const double gap = rep.at("anomaly_gap").get<double>();
  const double elapsed = seconds_since(start);
  const bool pass = ratio < 0.25 && gap >= 0.2 && elapsed < 120.0;
  return finish(std::move(r), pass,
                "loss ratio = " + fmt(ratio) + ", anomaly gap = " + fmt(gap) + ", " +
                    fmt(elapsed) + " s",
                start);
}

RefinementScene make_refinement_scene() {
  constexpr std::size_t kSide = 16;
  RefinementScene scene;
  scene.taxonomy.things = {0, 1};
  scene.taxonomy.stuff = {2, 3};
  scene.taxonomy.road = 2;
  scene.taxonomy.unknown_id = 4;

  // Two confident queries: query 0 claims the sky (stuff, suppressed), query
  // 1 claims the road (stuff, exempt). A 4x4 blob of anomalous pixels sits on
  // the road, two of them under a weak road covering.
  scene.prediction.class_logits = Tensor({2, 5});
  scene.prediction.class_logits(0, 3) = 5.7;  // sky
  scene.prediction.class_logits(1, 2) = 5.7;  // road

  const double weak_sky = std::log(0.51 / 0.49);
  const double weak_road = std::log(0.53 / 0.47);
  scene.prediction.mask_logits = Tensor::full({2, kSide, kSide}, -8.0);
  scene.anomaly_gt = Tensor({kSide, kSide});
  auto in_blob = [](std::size_t r, std::size_t c) { return r >= 10 && r < 14 && c >= 2 && c < 6; };
  for (std::size_t row = 0; row < kSide; ++row) {
    for (std::size_t col = 0; col < kSide; ++col) {
      if (row < 6) {
        scene.prediction.mask_logits(0, row, col) = 8.0;
      } else if (row < 8) {
        scene.prediction.mask_logits(0, row, col) = weak_sky;
      }
      if (row >= 8 && !in_blob(row, col)) {
        scene.prediction.mask_logits(1, row, col) = 8.0;
      }
      if (in_blob(row, col)) {
        scene.anomaly_gt(row, col) = 1.0;
        if (row == 10 && (col == 2 || col == 3)) {
          scene.prediction.mask_logits(1, row, col) = weak_road;
        }
      }
      if (sigmoid(scene.prediction.mask_logits(0, row, col)) > 0.5) {
        scene.stuff_covered.push_back(row * kSide + col);
      }
    }
  }
  return scene;
}

CriterionResult check_refinement_behavior() {
  CriterionResult r = make_criterion(7, "refinement zeros confident stuff and lowers FPR95");
  const auto start = Clock::now();
  const RefinementScene scene = make_refinement_scene();
  const ScoreMap raw = mask_anomaly_score(scene.prediction);
  const RefinementMask mask = refinement_mask(scene.prediction, scene.taxonomy);
  const ScoreMap refined = refine_scores(raw, mask);

  std::vector<char> covered(raw.values.numel(), 0);
  for (std::size_t i : scene.stuff_covered) covered[i] = 1;
  for (std::size_t i = 0; i < raw.values.numel(); ++i) {
    if (covered[i]) {
      if (refined.values.data[i] != 0.0) {
        return finish(std::move(r), false, "covered pixel not exactly zero", start);
      }
    } else if (refined.values.data[i] != raw.values.data[i]) {
      return finish(std::move(r), false, "uncovered pixel changed", start);
    }
  }

  const double fpr_raw = fpr_at_95tpr({raw}, {scene.anomaly_gt});
  const double fpr_refined = fpr_at_95tpr({refined}, {scene.anomaly_gt});
  const bool pass = fpr_refined < fpr_raw;
  return finish(std::move(r), pass,
                "FPR95 " + fmt(fpr_raw) + " -> " + fmt(fpr_refined), start);
}

CriterionResult check_mining_correctness(const std::string& work_dir) {
  CriterionResult r = make_criterion(8, "unknown mining entropies and component labeling");
  const auto start = Clock::now();
  const fs::path root = fs::path(work_dir) / "mining";
  fs::create_directories(root);
  const std::string tax_path = (root / "tax.json").string();
  {
    std::ofstream tax(tax_path);
    tax << R"({"things":[0,1],"stuff":[2,3],"road":2,"void":65535,"unknown_id":4})";
  }

  const double e_90_10 = -(0.9 * std::log(0.9) + 0.1 * std::log(0.1));
  const double e_75_25 = -(0.75 * std::log(0.75) + 0.25 * std::log(0.25));
  const double ln2 = std::log(2.0);

  struct Case {
    std::vector<double> probs;
    double e_stuff, e_things;
    bool unknown;
  };
  const std::vector<Case> cases = {
      {{0.45, 0.05, 0.25, 0.25}, ln2, e_90_10, true},
      {{0.4, 0.4, 0.15, 0.05}, e_75_25, ln2, false},
  };

  for (std::size_t idx = 0; idx < cases.size(); ++idx) {
    const Case& cs = cases[idx];
    Tensor class_logits({1, 5});
    for (std::size_t c = 0; c < 4; ++c) class_logits(0, c) = std::log(cs.probs[c]);
    Tensor mask_logits({1, 8, 8});
    for (std::size_t row = 0; row < 8; ++row) {
      for (std::size_t col = 0; col < 8; ++col) {
        mask_logits(0, row, col) = col < 4 ? 10.0 : -10.0;
      }
    }
    const std::string c_path = (root / ("c" + std::to_string(idx) + ".mt")).string();
    const std::string m_path = (root / ("m" + std::to_string(idx) + ".mt")).string();
    save_tensor(c_path, class_logits);
    save_tensor(m_path, mask_logits);

    OpsOptions opt;
    opt.class_scores_path = c_path;
    opt.mask_logits_path = m_path;
    opt.taxonomy_path = tax_path;
    opt.out_path = (root / ("pan" + std::to_string(idx) + ".mt")).string();
    const json rep = run_ops(opt);
    const json& components = rep.at("components");
    if (components.size() != 1 || !components.at(0).contains("decision")) {
      return finish(std::move(r), false, "expected one decided component, got " + rep.dump(),
                    start);
    }
    const json& d = components.at(0).at("decision");
    if (std::abs(d.at("e_stuff").get<double>() - cs.e_stuff) > 1e-9 ||
        std::abs(d.at("e_things").get<double>() - cs.e_things) > 1e-9 ||
        d.at("is_unknown").get<bool>() != cs.unknown) {
      return finish(std::move(r), false, "mining decision mismatch: " + d.dump(), start);
    }
  }

  // Component labeling against the flood-fill reference.
  for (std::uint64_t trial = 0; trial < 500; ++trial) {
    Rng rng(8000 + trial);
    const int connectivity = trial % 2 == 0 ? 8 : 4;
    const double fill = rng.uniform(0.2, 0.7);
    Tensor map({16, 16});
    for (double& v : map.data) v = rng.uniform() < fill ? 1.0 : 0.0;
    const ComponentSet cc = connected_components(map, connectivity);
    if (cc.count != reference_flood_fill_count(map, connectivity)) {
      return finish(std::move(r), false,
                    "component count mismatch at trial " + std::to_string(trial), start);
    }
  }
  return finish(std::move(r), true, "entropy cases exact, 500 labelings match flood fill", start);
}

std::vector<CriterionResult> run_selfcheck(const std::string& work_dir) {
  fs::create_directories(work_dir);
  std::vector<CriterionResult> results;
  results.push_back(check_equation_oracles());
  results.push_back(check_attention_equivalences());
  results.push_back(check_gradients());
  results.push_back(check_hungarian_optimality());
  results.push_back(check_metric_hand_oracles(work_dir));
  results.push_back(check_toy_training());
  results.push_back(check_refinement_behavior());
  results.push_back(check_mining_correctness(work_dir));
  return results;
}

}  // namespace maskscope
