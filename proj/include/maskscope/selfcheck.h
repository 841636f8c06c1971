#pragma once

#include <string>
#include <vector>

#include "maskscope/losses.h"
#include "maskscope/openset.h"
#include "maskscope/types.h"

namespace maskscope {

// Straightforward reference implementations, written as plain loops with no
// shared code paths, for verifying the optimized pipeline against.

Tensor reference_marginal_scores(const Prediction& p);                   // Z x (H*W)
Tensor reference_anomaly_map(const Prediction& p);                       // H x W
Tensor reference_negative_likelihood(const Prediction& p);               // H x W
Tensor reference_background(const Tensor& class_logits, const Tensor& mask_logits);
double reference_min_assignment_cost(const Tensor& cost);                // exhaustive
int reference_flood_fill_count(const Tensor& binary, int connectivity);

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

CriterionResult check_equation_oracles();                                // 1
CriterionResult check_attention_equivalences();                          // 2
CriterionResult check_gradients();                                       // 3
CriterionResult check_hungarian_optimality();                            // 4
CriterionResult check_metric_hand_oracles(const std::string& work_dir);  // 5
CriterionResult check_toy_training();                                    // 6
CriterionResult check_refinement_behavior();                             // 7
CriterionResult check_mining_correctness(const std::string& work_dir);   // 8

// Criteria 1-8 end to end, writing temporary files under work_dir.
std::vector<CriterionResult> run_selfcheck(const std::string& work_dir);

// Inputs for the constructed refinement scene shared by the selfcheck and
// the test suites.
struct RefinementScene {
  Prediction prediction;
  Taxonomy taxonomy;
  Tensor anomaly_gt;  // H x W binary
  std::vector<std::size_t> stuff_covered;  // pixels the confident stuff mask covers
};
RefinementScene make_refinement_scene();

}  // namespace maskscope
