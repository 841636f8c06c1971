#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "json.hpp"
#include "maskscope/openset.h"

namespace maskscope {

// Subcommand cores. Each loads its inputs, runs the pipeline, writes any
// artifact files, and returns the JSON report the CLI prints.

struct ScoreOptions {
  std::string class_scores_path;
  std::string mask_logits_path;
  std::string out_path;
  bool refine = false;
  std::string taxonomy_path;
  bool formula_literal = false;
  double confidence = 0.95;
  double mask_threshold = 0.5;
};
nlohmann::json run_score(const ScoreOptions& opt);

struct OssOptions {
  std::string class_scores_path;
  std::string mask_logits_path;
  std::string out_path;
  std::optional<double> threshold;  // otherwise calibrated from the pair below
  std::string calib_scores_path;
  std::string calib_labels_path;
  double tpr = 0.95;
};
nlohmann::json run_oss(const OssOptions& opt);

struct OpsOptions {
  std::string class_scores_path;
  std::string mask_logits_path;
  std::string taxonomy_path;
  std::string out_path;
  double confidence_floor = 0.5;
  double background_threshold = 0.5;
  MiningConfig mining;
};
nlohmann::json run_ops(const OpsOptions& opt);

struct EvalPixelOptions {
  std::string scores_dir;
  std::string gt_dir;
  int threads = 1;
};
nlohmann::json run_eval_pixel(const EvalPixelOptions& opt);

struct EvalComponentOptions {
  std::string pred_dir;
  std::string gt_dir;
  double tau = 0.25;
  int connectivity = 8;
  int threads = 1;
};
nlohmann::json run_eval_component(const EvalComponentOptions& opt);

struct EvalOpenIouOptions {
  std::string pred_dir;
  std::string gt_dir;
  std::string taxonomy_path;
  int threads = 1;
};
nlohmann::json run_eval_open_iou(const EvalOpenIouOptions& opt);

struct EvalPqOptions {
  std::string pred_dir;
  std::string gt_dir;
  std::string taxonomy_path;
  int threads = 1;
};
nlohmann::json run_eval_pq(const EvalPqOptions& opt);

struct MixOptions {
  std::string inlier_path;
  std::string labels_path;
  std::string ood_path;
  std::string ood_mask_path;
  std::string out_prefix;
  long offset_row = 0;
  long offset_col = 0;
  std::uint64_t seed = 0;
};
nlohmann::json run_mix(const MixOptions& opt);

struct GradcheckOptions {
  std::uint64_t seed = 0;
  double epsilon = 1e-5;
};
nlohmann::json run_gradcheck(const GradcheckOptions& opt);

struct DemoDecoderOptions {
  std::uint64_t seed = 0;
  std::size_t steps = 300;
  double lr = 0.02;
  std::size_t outlier_steps = 200;
  double outlier_lr = 0.01;
  double margin = 0.75;
  std::string contrastive_mode = "literal";  // or "symmetric-inlier"
};
nlohmann::json run_demo_decoder(const DemoDecoderOptions& opt);

}  // namespace maskscope
