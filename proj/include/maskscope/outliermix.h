#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maskscope/tensor.h"
#include "maskscope/types.h"

namespace maskscope {

struct ImageRgb8 {
  std::size_t h = 0, w = 0;
  std::vector<std::uint8_t> data;  // h * w * 3, row-major RGB

  ImageRgb8() = default;
  ImageRgb8(std::size_t h_in, std::size_t w_in) : h(h_in), w(w_in), data(h_in * w_in * 3, 0) {}

  std::uint8_t* pixel(std::size_t r, std::size_t c) { return data.data() + (r * w + c) * 3; }
  const std::uint8_t* pixel(std::size_t r, std::size_t c) const {
    return data.data() + (r * w + c) * 3;
  }

  bool operator==(const ImageRgb8&) const = default;
};

struct CompositeProvenance {
  std::string inlier_id;
  std::string ood_id;
  long offset_row = 0;
  long offset_col = 0;
  std::uint64_t seed = 0;
};

struct CompositeSample {
  ImageRgb8 image;
  LabelMap labels;        // inlier labels with pasted pixels set to void
  Tensor outlier_mask;    // H x W, 1 exactly on pasted pixels
  CompositeProvenance provenance;
};

// Hard cut-paste of the masked object pixels onto the inlier frame at the
// given offset; parts falling outside the frame are clipped. The object mask
// must select at least one pixel.
CompositeSample anomaly_mix(const ImageRgb8& inlier, const LabelMap& labels,
                            const ImageRgb8& ood, const Tensor& ood_object_mask, long offset_row,
                            long offset_col, std::uint64_t seed,
                            const std::string& inlier_id = "", const std::string& ood_id = "");

struct OutlierDraw {
  bool use_outlier = false;
  std::uint64_t sample_seed = 0;
};

// Seeded Bernoulli(outlier_prob) plan for a batch, with a derived per-sample
// seed for downstream compositing choices.
std::vector<OutlierDraw> sample_batch(std::size_t batch_size, double outlier_prob,
                                      std::uint64_t seed);

}  // namespace maskscope
