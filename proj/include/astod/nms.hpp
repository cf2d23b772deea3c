#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <tuple>
#include <vector>

#include "astod/geometry.hpp"

namespace astod {

using CategoryId = std::int64_t;
using ImageId = std::int64_t;

/// A scored, classified box. `box` is in whatever frame the owning container
/// states (view frame inside ViewPredictions, original frame elsewhere).
struct Detection {
  CategoryId class_id = 0;
  Box box;
  double score = 0.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct ViewPredictions {
  ViewSpec view;
  std::vector<Detection> detections;  // in the view frame
};

inline constexpr double kDefaultNmsIou = 0.5;

struct NmsOptions {
  double iou_threshold = kDefaultNmsIou;
  // Suppress across categories instead of within each category.
  bool class_agnostic = false;
};

namespace detail {

inline auto box_key(const Box& b) { return std::tie(b.x1, b.y1, b.x2, b.y2); }

// Score descending, then box lexicographic.
inline bool score_order(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  return box_key(a.box) < box_key(b.box);
}

}  // namespace detail

/// Canonical detection order: class ascending, score descending, then box.
inline bool canonical_less(const Detection& a, const Detection& b) {
  if (a.class_id != b.class_id) return a.class_id < b.class_id;
  return detail::score_order(a, b);
}

inline void validate_nms_threshold(double t) {
  if (!(t > 0.0 && t < 1.0)) {
    throw ConfigError("NMS IoU threshold must lie in (0, 1), got " + std::to_string(t));
  }
}

/// Greedy non-maximum suppression. A detection survives iff its IoU with
/// every previously kept detection (of the same class unless class-agnostic)
/// is below the threshold. Output is in canonical order.
inline std::vector<Detection> nms(std::span<const Detection> dets, const NmsOptions& opts = {}) {
  validate_nms_threshold(opts.iou_threshold);
  std::vector<Detection> order(dets.begin(), dets.end());
  if (opts.class_agnostic) {
    std::sort(order.begin(), order.end(), [](const Detection& a, const Detection& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.box != b.box) return detail::box_key(a.box) < detail::box_key(b.box);
      return a.class_id < b.class_id;
    });
  } else {
    std::sort(order.begin(), order.end(), canonical_less);
  }

  std::vector<Detection> kept;
  kept.reserve(order.size());
  // Sorted by class, so same-class survivors form a contiguous suffix.
  std::size_t group_begin = 0;
  for (const Detection& d : order) {
    if (!opts.class_agnostic && group_begin < kept.size() &&
        kept[group_begin].class_id != d.class_id) {
      group_begin = kept.size();
    }
    bool keep = true;
    for (std::size_t i = opts.class_agnostic ? 0 : group_begin; i < kept.size(); ++i) {
      if (iou(kept[i].box, d.box) >= opts.iou_threshold) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(d);
  }
  if (opts.class_agnostic) std::sort(kept.begin(), kept.end(), canonical_less);
  return kept;
}

inline std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold) {
  return nms(dets, NmsOptions{iou_threshold, false});
}

/// Merges the predictions of several views of one image: each view is mapped
/// back to the original frame and suppressed on its own, then the union of
/// survivors is suppressed once more.
inline std::vector<Detection> aggregate_views(std::span<const ViewPredictions> per_view,
                                              const ImageDims& dims,
                                              const NmsOptions& opts = {}) {
  std::vector<Detection> merged;
  std::vector<Detection> mapped;
  for (const ViewPredictions& vp : per_view) {
    mapped.clear();
    mapped.reserve(vp.detections.size());
    for (const Detection& d : vp.detections) {
      mapped.push_back(Detection{d.class_id, invert_view(d.box, vp.view, dims), d.score});
    }
    std::vector<Detection> survivors = nms(mapped, opts);
    merged.insert(merged.end(), survivors.begin(), survivors.end());
  }
  return nms(merged, opts);
}

}  // namespace astod
