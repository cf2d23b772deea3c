#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "astod/error.hpp"
#include "astod/geometry.hpp"
#include "astod/nms.hpp"

namespace astod {

struct MatchCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;

  MatchCounts& operator+=(const MatchCounts& o) noexcept {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }

  friend bool operator==(const MatchCounts&, const MatchCounts&) = default;
};

struct MatchResult {
  std::vector<bool> detection_tp;  // indexed like the input detections
  std::vector<int> matched_gt;     // per detection, -1 when unmatched
  std::vector<bool> gt_matched;    // indexed like the input ground truth
  MatchCounts counts;
};

inline void validate_match_iou(double t) {
  if (!(t > 0.0 && t < 1.0)) {
    throw ConfigError("matching IoU threshold must lie in (0, 1), got " + std::to_string(t));
  }
}

/// Greedy matching of one image. Detections are visited by descending score;
/// each takes the unmatched same-class ground truth with the highest IoU,
/// provided that IoU reaches `iou_threshold`. IoU ties go to the lower
/// ground-truth index. Ground-truth scores are ignored.
inline MatchResult match(std::span<const Detection> dets, std::span<const Detection> gts,
                         double iou_threshold) {
  validate_match_iou(iou_threshold);
  MatchResult r;
  r.detection_tp.assign(dets.size(), false);
  r.matched_gt.assign(dets.size(), -1);
  r.gt_matched.assign(gts.size(), false);

  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const Detection& da = dets[a];
    const Detection& db = dets[b];
    if (da.score != db.score) return da.score > db.score;
    if (da.box != db.box) return detail::box_key(da.box) < detail::box_key(db.box);
    return da.class_id < db.class_id;
  });

  for (std::size_t di : order) {
    const Detection& d = dets[di];
    int best = -1;
    double best_iou = iou_threshold;
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
      if (r.gt_matched[gi] || gts[gi].class_id != d.class_id) continue;
      const double v = iou(d.box, gts[gi].box);
      if (v >= best_iou && (best < 0 || v > best_iou)) {
        best = static_cast<int>(gi);
        best_iou = v;
      }
    }
    if (best >= 0) {
      r.gt_matched[static_cast<std::size_t>(best)] = true;
      r.detection_tp[di] = true;
      r.matched_gt[di] = best;
      ++r.counts.tp;
    } else {
      ++r.counts.fp;
    }
  }
  r.counts.fn = static_cast<std::int64_t>(gts.size()) - r.counts.tp;
  return r;
}

struct PrF1 {
  double precision = 1.0;
  double recall = 1.0;
  double f1 = 1.0;
};

inline PrF1 pr_f1(const MatchCounts& c) noexcept {
  PrF1 m;
  m.precision = (c.tp + c.fp) == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  m.recall = (c.tp + c.fn) == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  const double denom = m.precision + m.recall;
  m.f1 = denom == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / denom;
  return m;
}

inline PrF1 pr_f1(const MatchResult& r) noexcept { return pr_f1(r.counts); }

using DetectionsByImage = std::map<ImageId, std::vector<Detection>>;

/// Sums per-image match counts over every image present in either map.
inline MatchCounts match_dataset(const DetectionsByImage& dets, const DetectionsByImage& gts,
                                 double iou_threshold) {
  validate_match_iou(iou_threshold);
  MatchCounts total;
  const std::vector<Detection> none;
  std::set<ImageId> images;
  for (const auto& [id, _] : dets) images.insert(id);
  for (const auto& [id, _] : gts) images.insert(id);
  for (ImageId id : images) {
    auto d = dets.find(id);
    auto g = gts.find(id);
    total += match(d == dets.end() ? none : d->second, g == gts.end() ? none : g->second,
                   iou_threshold)
                 .counts;
  }
  return total;
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
inline std::vector<double> coco_iou_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

struct ApResult {
  std::map<CategoryId, double> per_class;                // averaged over IoUs
  std::map<CategoryId, std::vector<double>> per_class_iou;  // one entry per IoU
  std::vector<CategoryId> classes_without_gt;             // excluded from the mean
  double mean_ap = 0.0;
};

/// 101-point interpolated area under a precision/recall curve given the
/// TP flags of detections sorted by descending score.
inline double interpolated_ap(const std::vector<bool>& tp_sorted, std::int64_t n_gt) {
  if (n_gt <= 0) return 0.0;
  const std::size_t n = tp_sorted.size();
  std::vector<double> recall(n);
  std::vector<double> precision(n);
  std::int64_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (tp_sorted[i]) ++tp;
    recall[i] = static_cast<double>(tp) / static_cast<double>(n_gt);
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double sum = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / 101.0;
}

/// COCO-style average precision per class and IoU threshold, averaged over
/// thresholds and then over the classes that have ground truth.
inline ApResult average_precision(const DetectionsByImage& dets, const DetectionsByImage& gts,
                                  std::span<const double> iou_set) {
  std::set<CategoryId> gt_classes;
  std::set<CategoryId> det_classes;
  for (const auto& [_, v] : gts) for (const Detection& g : v) gt_classes.insert(g.class_id);
  for (const auto& [_, v] : dets) for (const Detection& d : v) det_classes.insert(d.class_id);

  ApResult out;
  for (CategoryId c : det_classes) {
    if (!gt_classes.contains(c)) out.classes_without_gt.push_back(c);
  }

  struct Scored {
    double score;
    ImageId image;
    std::size_t rank;  // position within the image's score order
    bool tp;
  };

  std::set<ImageId> images;
  for (const auto& [id, _] : dets) images.insert(id);
  for (const auto& [id, _] : gts) images.insert(id);

  for (CategoryId c : gt_classes) {
    // Per image: this class's detections in score order, and its ground truth.
    std::vector<std::pair<ImageId, std::pair<std::vector<Detection>, std::vector<Detection>>>> per_image;
    std::int64_t n_gt = 0;
    for (ImageId id : images) {
      std::vector<Detection> cd;
      std::vector<Detection> cg;
      if (auto it = dets.find(id); it != dets.end()) {
        for (const Detection& d : it->second) if (d.class_id == c) cd.push_back(d);
      }
      if (auto it = gts.find(id); it != gts.end()) {
        for (const Detection& g : it->second) if (g.class_id == c) cg.push_back(g);
      }
      n_gt += static_cast<std::int64_t>(cg.size());
      if (cd.empty()) continue;
      std::stable_sort(cd.begin(), cd.end(), detail::score_order);
      per_image.emplace_back(id, std::make_pair(std::move(cd), std::move(cg)));
    }

    std::vector<double> aps;
    for (double t : iou_set) {
      std::vector<Scored> all;
      for (const auto& [id, dg] : per_image) {
        const MatchResult m = match(dg.first, dg.second, t);
        for (std::size_t i = 0; i < dg.first.size(); ++i) {
          all.push_back(Scored{dg.first[i].score, id, i, m.detection_tp[i]});
        }
      }
      std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.image != b.image) return a.image < b.image;
        return a.rank < b.rank;
      });
      std::vector<bool> flags;
      flags.reserve(all.size());
      for (const Scored& s : all) flags.push_back(s.tp);
      aps.push_back(interpolated_ap(flags, n_gt));
    }
    const double mean =
        aps.empty() ? 0.0 : std::accumulate(aps.begin(), aps.end(), 0.0) / static_cast<double>(aps.size());
    out.per_class_iou.emplace(c, std::move(aps));
    out.per_class.emplace(c, mean);
  }
  if (!out.per_class.empty()) {
    double s = 0.0;
    for (const auto& [_, ap] : out.per_class) s += ap;
    out.mean_ap = s / static_cast<double>(out.per_class.size());
  }
  return out;
}

}  // namespace astod
