#include "maskscope/commands.h"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <thread>

#include "maskscope/decoder.h"
#include "maskscope/io.h"
#include "maskscope/metrics.h"

namespace maskscope {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(threads), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex error_mutex;
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += workers) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

Prediction load_prediction(const std::string& class_path, const std::string& mask_path) {
  Prediction p;
  p.class_logits = load_tensor(class_path);
  p.mask_logits = load_tensor(mask_path);
  p.validate();
  return p;
}

// Binary H x W maps arrive either as MT01 (u8 or real 0/1) or as 16-bit
// grayscale PNG with values {0, 1}.
Tensor load_binary_map(const std::string& path) {
  Tensor out;
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".png") {
    const LabelMap m = load_labelmap(path);
    out = Tensor({m.h, m.w});
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m.labels[i] > 1) {
        throw ValidationError("binary map: " + path + " holds values other than {0, 1}");
      }
      out.data[i] = m.labels[i];
    }
    return out;
  }
  const Mt01 c = load_mt01(path);
  if (c.dims.size() != 2) throw FormatError("binary map: " + path + " must be rank-2");
  if (c.dtype == Mt01Dtype::U8) {
    std::vector<std::size_t> dims;
    const auto v = load_u8(path, &dims);
    out = Tensor({dims[0], dims[1]});
    for (std::size_t i = 0; i < v.size(); ++i) out.data[i] = v[i];
  } else {
    out = load_tensor(path);
  }
  for (double v : out.data) {
    if (v != 0.0 && v != 1.0) {
      throw ValidationError("binary map: " + path + " holds values other than {0, 1}");
    }
  }
  return out;
}

LabelMap load_labels_any(const std::string& path) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".png") return load_labelmap(path);
  std::vector<std::size_t> dims;
  const auto v = load_u16(path, &dims);
  if (dims.size() != 2) throw FormatError("labels: " + path + " must be rank-2");
  LabelMap out(dims[0], dims[1]);
  out.labels = v;
  return out;
}

std::vector<std::pair<std::string, std::string>> pair_by_stem(const std::string& dir_a,
                                                              const std::string& dir_b) {
  auto collect = [](const std::string& dir) {
    if (!fs::is_directory(dir)) throw ValidationError("eval: " + dir + " is not a directory");
    std::map<std::string, std::string> by_stem;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      const std::string ext = entry.path().extension().string();
      if (ext != ".mt" && ext != ".png") continue;
      const std::string stem = entry.path().stem().string();
      if (!by_stem.emplace(stem, entry.path().string()).second) {
        throw ValidationError("eval: duplicate stem '" + stem + "' in " + dir);
      }
    }
    return by_stem;
  };
  const auto a = collect(dir_a);
  const auto b = collect(dir_b);
  if (a.empty()) throw ValidationError("eval: no inputs in " + dir_a);
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [stem, path] : a) {
    const auto it = b.find(stem);
    if (it == b.end()) {
      throw ValidationError("eval: no counterpart for stem '" + stem + "' in " + dir_b);
    }
    out.emplace_back(path, it->second);
  }
  if (a.size() != b.size()) {
    throw ValidationError("eval: directories hold different stems");
  }
  return out;
}

}  // namespace

json run_score(const ScoreOptions& opt) {
  const Prediction p = load_prediction(opt.class_scores_path, opt.mask_logits_path);
  ScoreMap f = mask_anomaly_score(p);
  json report{{"height", p.height()}, {"width", p.width()}, {"queries", p.num_queries()},
              {"classes", p.num_classes()}, {"refined", opt.refine}};
  if (opt.refine) {
    if (opt.taxonomy_path.empty()) {
      throw ValidationError("score: --refine requires --taxonomy");
    }
    const Taxonomy tax = load_taxonomy(opt.taxonomy_path);
    RefinementConfig cfg;
    cfg.confidence = opt.confidence;
    cfg.mask_threshold = opt.mask_threshold;
    cfg.formula_literal = opt.formula_literal;
    const RefinementMask mask = refinement_mask(p, tax, cfg);
    f = refine_scores(f, mask);
    report["suppressed_pixels"] =
        static_cast<std::size_t>(mask.values.numel() - tensor_sum(mask.values));
  }
  save_tensor(opt.out_path, f.values);
  report["out"] = opt.out_path;
  report["score_min"] = *std::min_element(f.values.data.begin(), f.values.data.end());
  report["score_max"] = tensor_max(f.values);
  return report;
}

json run_oss(const OssOptions& opt) {
  const Prediction p = load_prediction(opt.class_scores_path, opt.mask_logits_path);
  double tau = 0.0;
  if (opt.threshold.has_value()) {
    tau = *opt.threshold;
  } else {
    if (opt.calib_scores_path.empty() || opt.calib_labels_path.empty()) {
      throw ValidationError("oss: provide --threshold or both calibration files");
    }
    const Tensor scores = load_tensor(opt.calib_scores_path);
    const Tensor labels = load_binary_map(opt.calib_labels_path);
    if (scores.shape != labels.shape) {
      throw ShapeError("oss: calibration score and label shapes differ");
    }
    std::vector<std::uint8_t> y(labels.numel());
    for (std::size_t i = 0; i < labels.numel(); ++i) y[i] = labels.data[i] == 1.0;
    tau = threshold_at_tpr(scores.data, y, opt.tpr);
  }
  const LabelMap labels = oss_inference(p, tau);
  save_labelmap(opt.out_path, labels);
  std::size_t anomalous = 0;
  for (std::uint16_t v : labels.labels) anomalous += v == p.num_classes();
  return json{{"out", opt.out_path},
              {"threshold", tau},
              {"anomaly_label", p.num_classes()},
              {"anomaly_pixels", anomalous}};
}

json run_ops(const OpsOptions& opt) {
  if (opt.taxonomy_path.empty()) throw ValidationError("ops: --taxonomy is required");
  const Prediction p = load_prediction(opt.class_scores_path, opt.mask_logits_path);
  const Taxonomy tax = load_taxonomy(opt.taxonomy_path);

  const KnownSubset known = build_known_subset(p, tax, opt.confidence_floor);
  const ScoreMap background = background_region(known);
  Tensor background_binary(background.values.shape);
  for (std::size_t i = 0; i < background.values.numel(); ++i) {
    background_binary.data[i] = background.values.data[i] >= opt.background_threshold ? 1.0 : 0.0;
  }
  const MiningResult mining = mine_unknown_instances(background_binary, p, tax, opt.mining);
  const PanopticMap panoptic = assemble_panoptic(p, known, mining.unknown_masks, tax);
  if (!opt.out_path.empty()) save_panoptic(opt.out_path, panoptic);

  json components = json::array();
  for (int id : mining.kept_component_ids) {
    json c{{"id", id}, {"area", mining.components.pixels[id - 1].size()}};
    for (const MiningDecision& d : mining.decisions) {
      if (d.component_id != id) continue;
      c["decision"] = json{{"query", d.query_index},
                           {"e_stuff", d.stuff_entropy},
                           {"e_things", d.things_entropy},
                           {"is_unknown", d.is_unknown}};
    }
    components.push_back(c);
  }
  return json{{"out", opt.out_path},
              {"known_queries", known.query_indices.size()},
              {"num_components", mining.components.count},
              {"kept_components", mining.kept_component_ids.size()},
              {"unknown_instances", mining.unknown_masks.size()},
              {"components", components}};
}

json run_eval_pixel(const EvalPixelOptions& opt) {
  const auto pairs = pair_by_stem(opt.scores_dir, opt.gt_dir);
  std::vector<std::vector<double>> scores(pairs.size());
  std::vector<std::vector<std::uint8_t>> labels(pairs.size());
  parallel_for(pairs.size(), opt.threads, [&](std::size_t i) {
    const Tensor s = load_tensor(pairs[i].first);
    const Tensor g = load_binary_map(pairs[i].second);
    if (s.shape != g.shape) {
      throw ShapeError("eval pixel: shape mismatch for " + pairs[i].first);
    }
    scores[i] = s.data;
    labels[i].resize(g.numel());
    for (std::size_t j = 0; j < g.numel(); ++j) labels[i][j] = g.data[j] == 1.0;
  });
  // Pool in fixed image order so the sweep is deterministic.
  std::vector<double> pooled_scores;
  std::vector<std::uint8_t> pooled_labels;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    pooled_scores.insert(pooled_scores.end(), scores[i].begin(), scores[i].end());
    pooled_labels.insert(pooled_labels.end(), labels[i].begin(), labels[i].end());
  }
  const PixelEvalResult r = evaluate_pixel_scores(pooled_scores, pooled_labels);
  return json{{"auprc", r.auprc},
              {"fpr95", r.fpr95},
              {"threshold_95tpr", r.threshold},
              {"counts",
               {{"positives", r.num_positives},
                {"negatives", r.num_negatives},
                {"images", pairs.size()}}}};
}

json run_eval_component(const EvalComponentOptions& opt) {
  const auto pairs = pair_by_stem(opt.pred_dir, opt.gt_dir);
  std::vector<Tensor> pred(pairs.size()), gt(pairs.size());
  parallel_for(pairs.size(), opt.threads, [&](std::size_t i) {
    pred[i] = load_binary_map(pairs[i].first);
    gt[i] = load_binary_map(pairs[i].second);
  });
  ComponentEvalConfig cfg;
  cfg.tau = opt.tau;
  cfg.connectivity = opt.connectivity;
  const ComponentMetricsResult r = component_metrics(pred, gt, cfg);
  json report{{"defined", r.defined}, {"images", pairs.size()}};
  if (!r.defined) return report;
  report["siou_mean"] = r.siou_mean;
  report["ppv_mean"] = r.ppv_mean;
  report["f1_star"] = r.f1_star;
  report["f1_star_sweep_mean"] = r.f1_star_sweep_mean;
  json sweep = json::array();
  for (const auto& [tau, c] : r.sweep) {
    sweep.push_back({{"tau", tau},
                     {"tp", c.tp},
                     {"fn", c.fn},
                     {"fp", c.fp},
                     {"f1_star", c.f1_star}});
  }
  report["f1_star_sweep"] = sweep;
  report["counts"] = {{"tp", r.at_tau.tp},
                      {"fn", r.at_tau.fn},
                      {"fp", r.at_tau.fp},
                      {"gt_components", r.num_gt_components},
                      {"pred_components", r.num_pred_components}};
  return report;
}

json run_eval_open_iou(const EvalOpenIouOptions& opt) {
  if (opt.taxonomy_path.empty()) throw ValidationError("eval open-iou: --taxonomy is required");
  const Taxonomy tax = load_taxonomy(opt.taxonomy_path);
  const auto pairs = pair_by_stem(opt.pred_dir, opt.gt_dir);
  std::vector<LabelMap> pred(pairs.size()), gt(pairs.size());
  parallel_for(pairs.size(), opt.threads, [&](std::size_t i) {
    pred[i] = load_labels_any(pairs[i].first);
    gt[i] = load_labels_any(pairs[i].second);
  });
  const OpenIouResult r = open_iou(pred, gt, tax.num_known(), tax.unknown_id, tax.void_id);
  json per_class = json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    per_class.push_back(r.present[c] ? json(r.per_class[c]) : json(nullptr));
  }
  return json{{"open_iou_per_class", per_class},
              {"open_iou_mean", r.mean},
              {"confusion", r.confusion},
              {"images", pairs.size()}};
}

json run_eval_pq(const EvalPqOptions& opt) {
  if (opt.taxonomy_path.empty()) throw ValidationError("eval pq: --taxonomy is required");
  const Taxonomy tax = load_taxonomy(opt.taxonomy_path);
  const auto pairs = pair_by_stem(opt.pred_dir, opt.gt_dir);
  std::vector<PanopticMap> pred(pairs.size()), gt(pairs.size());
  parallel_for(pairs.size(), opt.threads, [&](std::size_t i) {
    pred[i] = load_panoptic(pairs[i].first);
    gt[i] = load_panoptic(pairs[i].second);
  });
  const PqResult r = panoptic_quality(pred, gt, tax);
  json report{{"images", pairs.size()}};
  if (r.overall.defined) {
    report["pq"] = r.overall.pq;
    report["sq"] = r.overall.sq;
    report["rq"] = r.overall.rq;
  }
  if (r.things.defined) report["pq_things"] = r.things.pq;
  if (r.stuff.defined) report["pq_stuff"] = r.stuff.pq;
  if (r.unknown.defined) report["pq_unknown"] = r.unknown.pq;
  json per_class = json::object();
  for (const auto& [id, s] : r.per_class) {
    per_class[std::to_string(id)] = {{"tp", s.tp}, {"fp", s.fp}, {"fn", s.fn},
                                     {"iou_sum", s.iou_sum}};
  }
  report["per_class"] = per_class;
  return report;
}

json run_mix(const MixOptions& opt) {
  const ImageRgb8 inlier = load_image(opt.inlier_path);
  const LabelMap labels = load_labelmap(opt.labels_path);
  const ImageRgb8 ood = load_image(opt.ood_path);
  const Tensor mask = load_binary_map(opt.ood_mask_path);
  const CompositeSample sample =
      anomaly_mix(inlier, labels, ood, mask, opt.offset_row, opt.offset_col, opt.seed,
                  opt.inlier_path, opt.ood_path);
  const std::string image_path = opt.out_prefix + "_image.png";
  const std::string labels_path = opt.out_prefix + "_labels.png";
  const std::string mood_path = opt.out_prefix + "_mood.mt";
  save_image(image_path, sample.image);
  save_labelmap(labels_path, sample.labels);
  std::vector<std::uint8_t> mood(sample.outlier_mask.numel());
  for (std::size_t i = 0; i < mood.size(); ++i) mood[i] = sample.outlier_mask.data[i] == 1.0;
  save_u8(mood_path, mood, sample.outlier_mask.shape);
  const std::size_t pasted =
      static_cast<std::size_t>(tensor_sum(sample.outlier_mask));
  return json{{"image", image_path},
              {"labels", labels_path},
              {"outlier_mask", mood_path},
              {"pasted_pixels", pasted},
              {"provenance",
               {{"inlier", sample.provenance.inlier_id},
                {"ood", sample.provenance.ood_id},
                {"offset", {sample.provenance.offset_row, sample.provenance.offset_col}},
                {"seed", sample.provenance.seed}}}};
}

json run_gradcheck(const GradcheckOptions& opt) {
  const GradReport r = grad_check(opt.seed, opt.epsilon);
  json per_param = json::object();
  for (const auto& [name, err] : r.per_param) per_param[name] = err;
  return json{{"seed", opt.seed},
              {"epsilon", r.epsilon},
              {"max_rel_error", r.max_rel_error},
              {"per_param", per_param}};
}

json run_demo_decoder(const DemoDecoderOptions& opt) {
  const ContrastiveMode mode = opt.contrastive_mode == "symmetric-inlier"
                                   ? ContrastiveMode::SymmetricInlier
                                   : ContrastiveMode::Literal;
  if (opt.contrastive_mode != "literal" && opt.contrastive_mode != "symmetric-inlier") {
    throw ValidationError("demo-decoder: contrastive mode must be literal or symmetric-inlier");
  }
  BlobTask task = make_blob_task(opt.seed);
  task.with_outlier.margin = opt.margin;
  task.with_outlier.contrastive_mode = mode;

  ToyDecoder decoder = ToyDecoder::seeded({}, opt.seed);
  const std::vector<double> phase1 =
      train_toy(decoder, {task.closed_set}, opt.steps, opt.lr);
  const double final_loss = sample_loss(decoder, task.closed_set);

  const std::vector<double> phase2 =
      train_toy(decoder, {task.with_outlier}, opt.outlier_steps, opt.outlier_lr);

  const Prediction pred = decoder_forward(decoder, task.with_outlier.pixel_features,
                                          task.with_outlier.h, task.with_outlier.w);
  const ScoreMap anomaly = mask_anomaly_score(pred);
  double outlier_sum = 0.0, inlier_sum = 0.0;
  std::size_t outlier_n = 0, inlier_n = 0;
  for (std::size_t i = 0; i < anomaly.values.numel(); ++i) {
    if (task.outlier_region.data[i] == 1.0) {
      outlier_sum += anomaly.values.data[i];
      ++outlier_n;
    } else {
      inlier_sum += anomaly.values.data[i];
      ++inlier_n;
    }
  }
  const double mean_outlier = outlier_sum / static_cast<double>(outlier_n);
  const double mean_inlier = inlier_sum / static_cast<double>(inlier_n);

  json report{{"seed", opt.seed},
              {"steps", opt.steps},
              {"lr", opt.lr},
              {"outlier_steps", opt.outlier_steps},
              {"outlier_lr", opt.outlier_lr},
              {"margin", opt.margin},
              {"contrastive_mode", opt.contrastive_mode},
              {"phase1", phase1},
              {"phase2", phase2},
              {"final_loss", final_loss},
              {"mean_anomaly_outlier", mean_outlier},
              {"mean_anomaly_inlier", mean_inlier},
              {"anomaly_gap", mean_outlier - mean_inlier}};
  if (!phase1.empty()) {
    report["initial_loss"] = phase1.front();
    report["loss_ratio"] = final_loss / phase1.front();
  }
  return report;
}

}  // namespace maskscope
