#include "maskscope/outliermix.h"

#include "maskscope/rng.h"

namespace maskscope {

CompositeSample anomaly_mix(const ImageRgb8& inlier, const LabelMap& labels,
                            const ImageRgb8& ood, const Tensor& ood_object_mask, long offset_row,
                            long offset_col, std::uint64_t seed, const std::string& inlier_id,
                            const std::string& ood_id) {
  if (labels.h != inlier.h || labels.w != inlier.w) {
    throw ShapeError("anomaly_mix: label map does not match the inlier image");
  }
  if (ood_object_mask.shape != std::vector<std::size_t>{ood.h, ood.w}) {
    throw ShapeError("anomaly_mix: object mask " + shape_str(ood_object_mask.shape) +
                     " does not match the source image");
  }
  bool any = false;
  for (double v : ood_object_mask.data) {
    if (v != 0.0 && v != 1.0) throw ValidationError("anomaly_mix: object mask must be binary");
    any = any || v == 1.0;
  }
  if (!any) throw ValidationError("anomaly_mix: object mask selects no pixels");

  CompositeSample out;
  out.image = inlier;
  out.labels = labels;
  out.outlier_mask = Tensor({inlier.h, inlier.w});
  out.provenance = {inlier_id, ood_id, offset_row, offset_col, seed};

  for (std::size_t r = 0; r < ood.h; ++r) {
    for (std::size_t c = 0; c < ood.w; ++c) {
      if (ood_object_mask(r, c) != 1.0) continue;
      const long tr = static_cast<long>(r) + offset_row;
      const long tc = static_cast<long>(c) + offset_col;
      if (tr < 0 || tc < 0 || tr >= static_cast<long>(inlier.h) ||
          tc >= static_cast<long>(inlier.w)) {
        continue;  // clipped
      }
      const std::size_t ur = static_cast<std::size_t>(tr), uc = static_cast<std::size_t>(tc);
      const std::uint8_t* src = ood.pixel(r, c);
      std::uint8_t* dst = out.image.pixel(ur, uc);
      dst[0] = src[0];
      dst[1] = src[1];
      dst[2] = src[2];
      out.outlier_mask(ur, uc) = 1.0;
      out.labels.at(ur, uc) = kVoidLabel;  // pasted pixels disappear from the closed-set labels
    }
  }
  return out;
}

std::vector<OutlierDraw> sample_batch(std::size_t batch_size, double outlier_prob,
                                      std::uint64_t seed) {
  if (outlier_prob < 0.0 || outlier_prob > 1.0) {
    throw ValidationError("sample_batch: outlier probability must lie in [0, 1]");
  }
  Rng rng(seed);
  std::vector<OutlierDraw> out(batch_size);
  for (OutlierDraw& d : out) {
    d.use_outlier = rng.bernoulli(outlier_prob);
    d.sample_seed = rng.next_u64();
  }
  return out;
}

}  // namespace maskscope
