#include "maskscope/openset.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace maskscope {

KnownSubset build_known_subset(const Prediction& p, const Taxonomy& tax,
                               double confidence_floor) {
  p.validate();
  const std::size_t z = p.num_classes();
  if (tax.num_known() != z) {
    throw ValidationError("build_known_subset: taxonomy covers " +
                          std::to_string(tax.num_known()) + " classes but prediction has " +
                          std::to_string(z));
  }
  const Tensor posts = class_posteriors(p);
  KnownSubset out;
  out.confidence_floor = confidence_floor;
  for (std::size_t i = 0; i < p.num_queries(); ++i) {
    double best = 0.0;
    for (std::size_t c = 0; c < z; ++c) best = std::max(best, posts(i, c));
    if (best > confidence_floor) out.query_indices.push_back(i);
  }
  const std::size_t nk = out.query_indices.size();
  const std::size_t px = p.num_pixels();
  out.class_logits = Tensor({nk, z});
  out.mask_logits = Tensor({nk, p.height(), p.width()});
  for (std::size_t r = 0; r < nk; ++r) {
    const std::size_t q = out.query_indices[r];
    for (std::size_t c = 0; c < z; ++c) out.class_logits(r, c) = p.class_logits(q, c);
    for (std::size_t i = 0; i < px; ++i) {
      out.mask_logits.data[r * px + i] = p.mask_logits.data[q * px + i];
    }
  }
  return out;
}

double threshold_at_tpr(const std::vector<double>& scores,
                        const std::vector<std::uint8_t>& is_anomaly, double tpr) {
  if (scores.size() != is_anomaly.size()) {
    throw ShapeError("threshold_at_tpr: scores and labels differ in length");
  }
  if (tpr <= 0.0 || tpr > 1.0) throw ValidationError("threshold_at_tpr: tpr must be in (0, 1]");
  std::vector<double> positives;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (is_anomaly[i]) positives.push_back(scores[i]);
  }
  if (positives.empty()) throw ValidationError("threshold_at_tpr: no positive samples");
  std::sort(positives.begin(), positives.end(), std::greater<>());
  const double total = static_cast<double>(positives.size());
  // Descending sweep: the first unique value whose recall reaches tpr is the
  // largest admissible threshold.
  std::size_t covered = 0;
  for (std::size_t i = 0; i < positives.size(); ++i) {
    ++covered;
    if (i + 1 < positives.size() && positives[i + 1] == positives[i]) continue;
    if (static_cast<double>(covered) / total >= tpr) return positives[i];
  }
  return positives.back();
}

LabelMap oss_inference(const Prediction& p, double tau) {
  const Segmentation seg = segment_map(p);
  const ScoreMap f = mask_anomaly_score(p);
  const std::uint16_t anomaly_label = static_cast<std::uint16_t>(p.num_classes());
  LabelMap out = seg.labels;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (f.values.data[i] >= tau) out.labels[i] = anomaly_label;
  }
  return out;
}

ScoreMap background_region(const KnownSubset& k) {
  if (k.mask_logits.rank() != 3) {
    throw ShapeError("background_region: mask logits must be rank-3");
  }
  const std::size_t nk = k.mask_logits.dim(0);
  const std::size_t h = k.mask_logits.dim(1), w = k.mask_logits.dim(2);
  ScoreMap out{Tensor::full({h, w}, 1.0), ScoreKind::Background};
  if (nk == 0) return out;
  const Tensor posts = softmax_rows(k.class_logits);
  const std::size_t px = h * w;
  for (std::size_t q = 0; q < nk; ++q) {
    double conf = 0.0;
    for (std::size_t c = 0; c < posts.cols(); ++c) conf = std::max(conf, posts(q, c));
    for (std::size_t i = 0; i < px; ++i) {
      const double evidence = conf * sigmoid(k.mask_logits.data[q * px + i]);
      out.values.data[i] = std::min(out.values.data[i], 1.0 - evidence);
    }
  }
  return out;
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  std::size_t merges_left;

  explicit UnionFind(std::size_t budget) : merges_left(budget) {}

  int make() {
    parent.push_back(static_cast<int>(parent.size()));
    return parent.back();
  }
  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b || merges_left == 0) return;
    --merges_left;
    parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

ComponentSet connected_components(const Tensor& binary, int connectivity,
                                  std::size_t max_union_ops) {
  if (binary.rank() != 2) {
    throw ShapeError("connected_components: expected H x W input, got " +
                     shape_str(binary.shape));
  }
  if (connectivity != 4 && connectivity != 8) {
    throw ValidationError("connected_components: connectivity must be 4 or 8");
  }
  for (double v : binary.data) {
    if (v != 0.0 && v != 1.0) {
      throw ValidationError("connected_components: input must be binary");
    }
  }
  const std::size_t h = binary.rows(), w = binary.cols();
  ComponentSet out;
  out.h = h;
  out.w = w;
  out.labels.assign(h * w, 0);

  UnionFind uf(max_union_ops);
  std::vector<int> provisional(h * w, -1);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t i = r * w + c;
      if (binary.data[i] == 0.0) continue;
      // Earlier neighbours in raster order.
      int neighbours[4];
      int nn = 0;
      if (c > 0 && binary.data[i - 1] == 1.0) neighbours[nn++] = provisional[i - 1];
      if (r > 0) {
        const std::size_t up = i - w;
        if (binary.data[up] == 1.0) neighbours[nn++] = provisional[up];
        if (connectivity == 8) {
          if (c > 0 && binary.data[up - 1] == 1.0) neighbours[nn++] = provisional[up - 1];
          if (c + 1 < w && binary.data[up + 1] == 1.0) neighbours[nn++] = provisional[up + 1];
        }
      }
      if (nn == 0) {
        provisional[i] = uf.make();
      } else {
        int best = neighbours[0];
        for (int k = 1; k < nn; ++k) best = std::min(best, neighbours[k]);
        provisional[i] = best;
        for (int k = 0; k < nn; ++k) uf.unite(best, neighbours[k]);
      }
    }
  }

  // Second pass: resolve roots and hand out ids in raster discovery order.
  std::vector<int> id_of_root(uf.parent.size(), 0);
  for (std::size_t i = 0; i < h * w; ++i) {
    if (provisional[i] < 0) continue;
    const int root = uf.find(provisional[i]);
    if (id_of_root[root] == 0) {
      id_of_root[root] = ++out.count;
      out.pixels.emplace_back();
    }
    const int id = id_of_root[root];
    out.labels[i] = id;
    out.pixels[static_cast<std::size_t>(id - 1)].push_back(i);
  }
  return out;
}

MiningResult mine_unknown_instances(const Tensor& background_binary, const Prediction& p,
                                    const Taxonomy& tax, const MiningConfig& cfg) {
  p.validate();
  if (tax.things.empty() || tax.stuff.empty()) {
    throw ValidationError("mine_unknown_instances: taxonomy needs both things and stuff classes");
  }
  if (tax.num_known() != p.num_classes()) {
    throw ValidationError("mine_unknown_instances: taxonomy does not cover the class count");
  }
  if (background_binary.shape != std::vector<std::size_t>{p.height(), p.width()}) {
    throw ShapeError("mine_unknown_instances: background shape mismatch");
  }

  MiningResult out;
  out.components =
      connected_components(background_binary, cfg.connectivity, cfg.max_union_ops);

  // Keep the top-k largest components (ties to the lower id), then drop
  // speckle below min_area.
  std::vector<int> order(static_cast<std::size_t>(out.components.count));
  std::iota(order.begin(), order.end(), 1);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const std::size_t sa = out.components.pixels[a - 1].size();
    const std::size_t sb = out.components.pixels[b - 1].size();
    return sa != sb ? sa > sb : a < b;
  });
  if (order.size() > cfg.top_k) order.resize(cfg.top_k);
  for (int id : order) {
    if (out.components.pixels[id - 1].size() >= cfg.min_area) {
      out.kept_component_ids.push_back(id);
    }
  }
  std::sort(out.kept_component_ids.begin(), out.kept_component_ids.end());

  const Tensor posts = class_posteriors(p);
  const Tensor probs = mask_probabilities(p);
  const std::size_t n = p.num_queries(), px = p.num_pixels();

  std::vector<std::vector<std::size_t>> query_pixels(n);
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t i = 0; i < px; ++i) {
      if (probs(q, i) > cfg.mask_bin_threshold) query_pixels[q].push_back(i);
    }
  }

  auto subset_entropy = [&](std::size_t q, const std::set<std::uint16_t>& ids) {
    std::vector<double> sub;
    sub.reserve(ids.size());
    for (std::uint16_t c : ids) sub.push_back(posts(q, c));
    return shannon_entropy(sub);  // renormalizes over the subset
  };

  for (int id : out.kept_component_ids) {
    const std::vector<std::size_t>& comp = out.components.pixels[id - 1];
    std::vector<char> in_comp(px, 0);
    for (std::size_t i : comp) in_comp[i] = 1;

    double best_iou = -1.0;
    std::size_t best_query = 0;
    double stuff_sum = 0.0, things_sum = 0.0;
    std::size_t overlapping = 0;
    for (std::size_t q = 0; q < n; ++q) {
      std::size_t inter = 0;
      for (std::size_t i : query_pixels[q]) inter += in_comp[i];
      const std::size_t uni = comp.size() + query_pixels[q].size() - inter;
      const double iou = uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
      if (iou < cfg.iou_min) continue;
      ++overlapping;
      stuff_sum += subset_entropy(q, tax.stuff);
      things_sum += subset_entropy(q, tax.things);
      if (iou > best_iou) {
        best_iou = iou;
        best_query = q;
      }
    }
    if (overlapping == 0) continue;  // no significant overlap, no decision

    MiningDecision decision;
    decision.component_id = id;
    decision.query_index = best_query;
    decision.stuff_entropy = stuff_sum / static_cast<double>(overlapping);
    decision.things_entropy = things_sum / static_cast<double>(overlapping);
    decision.is_unknown = decision.stuff_entropy > decision.things_entropy;
    out.decisions.push_back(decision);
    if (decision.is_unknown) {
      out.unknown_component_ids.push_back(id);
      Tensor mask({p.height(), p.width()});
      for (std::size_t i : comp) mask.data[i] = 1.0;
      out.unknown_masks.push_back(std::move(mask));
    }
  }
  return out;
}

PanopticMap assemble_panoptic(const Prediction& p, const KnownSubset& known,
                              const std::vector<Tensor>& unknown_masks, const Taxonomy& tax) {
  p.validate();
  const std::size_t h = p.height(), w = p.width(), px = h * w;
  PanopticMap out(h, w);
  for (auto& c : out.class_ids) c = tax.void_id;

  const std::size_t nk = known.query_indices.size();
  std::vector<std::uint16_t> top_class(nk);
  std::vector<double> conf(nk);
  Tensor posts = nk > 0 ? softmax_rows(known.class_logits) : Tensor();
  for (std::size_t q = 0; q < nk; ++q) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < posts.cols(); ++c) {
      if (posts(q, c) > posts(q, best)) best = c;
    }
    top_class[q] = static_cast<std::uint16_t>(best);
    conf[q] = posts(q, best);
  }

  // Per-pixel owner among covering known queries: highest confidence times
  // mask probability, ties to the lower query index.
  std::vector<int> owner(px, -1);
  for (std::size_t i = 0; i < px; ++i) {
    double best_score = 0.0;
    for (std::size_t q = 0; q < nk; ++q) {
      const double mp = sigmoid(known.mask_logits.data[q * px + i]);
      if (mp <= 0.5) continue;
      const double score = conf[q] * mp;
      if (score > best_score) {
        best_score = score;
        owner[i] = static_cast<int>(q);
      }
    }
  }

  std::uint16_t next_instance = 1;
  std::vector<std::uint16_t> instance_of_query(nk, 0);
  for (std::size_t q = 0; q < nk; ++q) {
    bool owns = false;
    for (std::size_t i = 0; i < px; ++i) {
      if (owner[i] == static_cast<int>(q)) {
        owns = true;
        break;
      }
    }
    if (!owns) continue;
    if (tax.is_thing(top_class[q])) instance_of_query[q] = next_instance++;
  }
  for (std::size_t i = 0; i < px; ++i) {
    if (owner[i] < 0) continue;
    const std::size_t q = static_cast<std::size_t>(owner[i]);
    out.class_ids[i] = top_class[q];
    out.instance_ids[i] = instance_of_query[q];  // stuff stays at 0, merged per class
  }

  for (const Tensor& mask : unknown_masks) {
    if (mask.shape != std::vector<std::size_t>{h, w}) {
      throw ShapeError("assemble_panoptic: unknown mask shape mismatch");
    }
    bool painted = false;
    std::uint16_t inst = next_instance;
    for (std::size_t i = 0; i < px; ++i) {
      if (mask.data[i] != 1.0 || out.class_ids[i] != tax.void_id) continue;
      out.class_ids[i] = tax.unknown_id;
      out.instance_ids[i] = inst;
      painted = true;
    }
    if (painted) ++next_instance;
  }
  return out;
}

}  // namespace maskscope
