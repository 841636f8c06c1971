#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "maskscope/commands.h"
#include "maskscope/selfcheck.h"

namespace {

using maskscope::ValidationError;
using nlohmann::json;

void emit(const json& report, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << report.dump(2) << "\n";
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw ValidationError("cannot write report to " + out_path);
  out << report.dump(2) << "\n";
}

std::pair<long, long> parse_offset(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) {
    throw ValidationError("offset must be 'row,col', got '" + text + "'");
  }
  try {
    return {std::stol(text.substr(0, comma)), std::stol(text.substr(comma + 1))};
  } catch (const std::exception&) {
    throw ValidationError("offset must be 'row,col', got '" + text + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"maskscope: mask-classification anomaly scoring, open-set inference and "
               "segmentation metrics on explicit tensor files"};
  app.require_subcommand(1);

  std::string taxonomy_path;
  int threads = 1;
  std::uint64_t seed = 0;
  app.add_option("--taxonomy", taxonomy_path, "taxonomy JSON (things/stuff/road/void/unknown_id)");
  app.add_option("--threads", threads, "worker threads for dataset evaluation")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "seed for randomized subcommands");

  // score
  maskscope::ScoreOptions score;
  CLI::App* score_cmd = app.add_subcommand("score", "anomaly score map from (C, M) tensors");
  score_cmd->fallthrough();
  score_cmd->add_option("--class-scores", score.class_scores_path, "N x (Z+1) class logits (.mt)")
      ->required();
  score_cmd->add_option("--mask-logits", score.mask_logits_path, "N x H x W mask logits (.mt)")
      ->required();
  score_cmd->add_option("--out", score.out_path, "output score tensor (.mt)")->required();
  score_cmd->add_flag("--refine", score.refine, "apply the refinement mask");
  score_cmd->add_flag("--formula-literal", score.formula_literal,
                      "use the printed product form of the refinement mask");
  score_cmd->add_option("--conf", score.confidence, "refinement confidence gate");
  score_cmd->add_option("--mask-thr", score.mask_threshold, "refinement mask coverage threshold");

  // oss
  maskscope::OssOptions oss;
  std::vector<std::string> calib;
  CLI::App* oss_cmd = app.add_subcommand("oss", "open-set semantic labeling");
  oss_cmd->fallthrough();
  oss_cmd->add_option("--class-scores", oss.class_scores_path)->required();
  oss_cmd->add_option("--mask-logits", oss.mask_logits_path)->required();
  oss_cmd->add_option("--out", oss.out_path, "output label map (.png)")->required();
  double oss_threshold = 0.0;
  CLI::Option* thr_opt = oss_cmd->add_option("--threshold", oss_threshold, "anomaly threshold");
  oss_cmd->add_option("--calib", calib, "score tensor and binary label map for calibration")
      ->expected(2);
  oss_cmd->add_option("--tpr", oss.tpr, "target true-positive rate for calibration");

  // ops
  maskscope::OpsOptions ops;
  CLI::App* ops_cmd = app.add_subcommand("ops", "open-set panoptic segmentation");
  ops_cmd->fallthrough();
  ops_cmd->add_option("--class-scores", ops.class_scores_path)->required();
  ops_cmd->add_option("--mask-logits", ops.mask_logits_path)->required();
  ops_cmd->add_option("--out", ops.out_path, "output panoptic tensor (.mt)");
  ops_cmd->add_option("--conf-floor", ops.confidence_floor, "known-query confidence floor");
  ops_cmd->add_option("--bg-thr", ops.background_threshold, "background binarization threshold");
  ops_cmd->add_option("--iou-min", ops.mining.iou_min, "overlap needed to consult a mask");
  ops_cmd->add_option("--min-area", ops.mining.min_area, "smallest component kept");
  ops_cmd->add_option("--cc-top-k", ops.mining.top_k, "keep the k largest components");
  ops_cmd->add_option("--cc-max-iters", ops.mining.max_union_ops,
                      "cap on union-find merge operations");
  ops_cmd->add_option("--connectivity", ops.mining.connectivity, "4 or 8");

  // eval
  CLI::App* eval_cmd = app.add_subcommand("eval", "metric suites over paired directories");
  eval_cmd->require_subcommand(1);
  eval_cmd->fallthrough();

  maskscope::EvalPixelOptions eval_pixel;
  CLI::App* pixel_cmd = eval_cmd->add_subcommand("pixel", "pooled AuPRC and FPR95");
  pixel_cmd->fallthrough();
  pixel_cmd->add_option("--scores", eval_pixel.scores_dir, "directory of score tensors")
      ->required();
  pixel_cmd->add_option("--gt", eval_pixel.gt_dir, "directory of binary anomaly maps")
      ->required();

  maskscope::EvalComponentOptions eval_component;
  CLI::App* component_cmd = eval_cmd->add_subcommand("component", "sIoU / PPV / F1*");
  component_cmd->fallthrough();
  component_cmd->add_option("--pred", eval_component.pred_dir)->required();
  component_cmd->add_option("--gt", eval_component.gt_dir)->required();
  component_cmd->add_option("--tau", eval_component.tau, "component match threshold");
  component_cmd->add_option("--connectivity", eval_component.connectivity, "4 or 8");

  maskscope::EvalOpenIouOptions eval_openiou;
  CLI::App* openiou_cmd = eval_cmd->add_subcommand("open-iou", "open-set IoU per class");
  openiou_cmd->fallthrough();
  openiou_cmd->add_option("--pred", eval_openiou.pred_dir)->required();
  openiou_cmd->add_option("--gt", eval_openiou.gt_dir)->required();

  maskscope::EvalPqOptions eval_pq;
  CLI::App* pq_cmd = eval_cmd->add_subcommand("pq", "panoptic quality");
  pq_cmd->fallthrough();
  pq_cmd->add_option("--pred", eval_pq.pred_dir)->required();
  pq_cmd->add_option("--gt", eval_pq.gt_dir)->required();

  // mix
  maskscope::MixOptions mix;
  std::string mix_offset = "0,0";
  CLI::App* mix_cmd = app.add_subcommand("mix", "cut-paste an outlier object onto an image");
  mix_cmd->fallthrough();
  mix_cmd->add_option("--inlier", mix.inlier_path, "inlier image (.png, 8-bit RGB)")->required();
  mix_cmd->add_option("--labels", mix.labels_path, "inlier labels (.png, 16-bit gray)")
      ->required();
  mix_cmd->add_option("--ood", mix.ood_path, "outlier source image (.png)")->required();
  mix_cmd->add_option("--ood-mask", mix.ood_mask_path, "binary object mask (.mt or .png)")
      ->required();
  mix_cmd->add_option("--offset", mix_offset, "paste offset as row,col");
  mix_cmd->add_option("--out-prefix", mix.out_prefix, "output path prefix")->required();

  // gradcheck
  maskscope::GradcheckOptions gradcheck;
  CLI::App* gradcheck_cmd =
      app.add_subcommand("gradcheck", "attention backward vs central differences");
  gradcheck_cmd->fallthrough();
  gradcheck_cmd->add_option("--epsilon", gradcheck.epsilon, "finite-difference step");

  // demo-decoder
  maskscope::DemoDecoderOptions demo;
  CLI::App* demo_cmd =
      app.add_subcommand("demo-decoder", "train the toy decoder on the synthetic blob task");
  demo_cmd->fallthrough();
  demo_cmd->add_option("--steps", demo.steps, "closed-set training steps");
  demo_cmd->add_option("--lr", demo.lr, "closed-set learning rate");
  demo_cmd->add_option("--outlier-steps", demo.outlier_steps, "outlier-phase steps");
  demo_cmd->add_option("--outlier-lr", demo.outlier_lr, "outlier-phase learning rate");
  demo_cmd->add_option("--margin", demo.margin, "contrastive margin");
  demo_cmd->add_option("--contrastive-mode", demo.contrastive_mode,
                       "literal or symmetric-inlier");

  // selfcheck
  CLI::App* selfcheck_cmd =
      app.add_subcommand("selfcheck", "run the built-in verification suite");
  selfcheck_cmd->fallthrough();
  std::string selfcheck_dir;
  selfcheck_cmd->add_option("--work-dir", selfcheck_dir, "scratch directory");

  std::string out_path;
  app.add_option("--out", out_path, "write the JSON report here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    json report;
    if (*score_cmd) {
      if (score.taxonomy_path.empty()) score.taxonomy_path = taxonomy_path;
      report = run_score(score);
    } else if (*oss_cmd) {
      if (*thr_opt) oss.threshold = oss_threshold;
      if (!calib.empty()) {
        oss.calib_scores_path = calib[0];
        oss.calib_labels_path = calib[1];
      }
      report = run_oss(oss);
    } else if (*ops_cmd) {
      ops.taxonomy_path = taxonomy_path;
      report = run_ops(ops);
    } else if (*pixel_cmd) {
      eval_pixel.threads = threads;
      report = run_eval_pixel(eval_pixel);
    } else if (*component_cmd) {
      eval_component.threads = threads;
      report = run_eval_component(eval_component);
    } else if (*openiou_cmd) {
      eval_openiou.taxonomy_path = taxonomy_path;
      eval_openiou.threads = threads;
      report = run_eval_open_iou(eval_openiou);
    } else if (*pq_cmd) {
      eval_pq.taxonomy_path = taxonomy_path;
      eval_pq.threads = threads;
      report = run_eval_pq(eval_pq);
    } else if (*mix_cmd) {
      const auto [row, col] = parse_offset(mix_offset);
      mix.offset_row = row;
      mix.offset_col = col;
      mix.seed = seed;
      report = run_mix(mix);
    } else if (*gradcheck_cmd) {
      gradcheck.seed = seed;
      report = run_gradcheck(gradcheck);
    } else if (*demo_cmd) {
      demo.seed = seed;
      report = run_demo_decoder(demo);
    } else if (*selfcheck_cmd) {
      if (selfcheck_dir.empty()) {
        selfcheck_dir = (std::filesystem::temp_directory_path() /
                         ("maskscope-selfcheck-" + std::to_string(::getpid())))
                            .string();
      }
      const auto results = maskscope::run_selfcheck(selfcheck_dir);
      bool all_pass = true;
      json items = json::array();
      for (const auto& r : results) {
        std::printf("criterion %d [%s]: %s (%s)\n", r.id, r.pass ? "PASS" : "FAIL",
                    r.name.c_str(), r.detail.c_str());
        items.push_back({{"id", r.id},
                         {"name", r.name},
                         {"pass", r.pass},
                         {"detail", r.detail},
                         {"seconds", r.seconds}});
        all_pass = all_pass && r.pass;
      }
      report = json{{"pass", all_pass}, {"criteria", items}};
      if (!out_path.empty()) emit(report, out_path);
      return all_pass ? 0 : 1;
    }
    emit(report, out_path);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
