#pragma once

// Reference implementations used only by tests. Each one computes its answer
// by a different route than the library code it checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "astod/eval.hpp"
#include "astod/geometry.hpp"
#include "astod/nms.hpp"

namespace astod::oracle {

/// IoU by counting grid cells whose centers fall inside both boxes. Exact for
/// boxes whose coordinates are multiples of 1/resolution.
inline double raster_iou(const Box& a, const Box& b, int resolution = 10) {
  const double lo_x = std::min(a.x1, b.x1), hi_x = std::max(a.x2, b.x2);
  const double lo_y = std::min(a.y1, b.y1), hi_y = std::max(a.y2, b.y2);
  const double step = 1.0 / resolution;
  std::int64_t inter = 0, uni = 0;
  for (double x = lo_x + step / 2; x < hi_x; x += step) {
    for (double y = lo_y + step / 2; y < hi_y; y += step) {
      const bool in_a = x > a.x1 && x < a.x2 && y > a.y1 && y < a.y2;
      const bool in_b = x > b.x1 && x < b.x2 && y > b.y1 && y < b.y2;
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// Priority used by greedy suppression: higher score first, then box corners.
inline bool outranks(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.box.x1 != b.box.x1) return a.box.x1 < b.box.x1;
  if (a.box.y1 != b.box.y1) return a.box.y1 < b.box.y1;
  if (a.box.x2 != b.box.x2) return a.box.x2 < b.box.x2;
  return a.box.y2 < b.box.y2;
}

/// Exhaustive greedy-NMS oracle: enumerates every subset of `dets` and returns
/// the one satisfying the greedy definition (a detection is kept iff no kept
/// detection of the same class that outranks it overlaps it at >= threshold).
/// Returns nullopt if zero or several subsets qualify. Limited to 16 inputs.
inline std::optional<std::vector<Detection>> brute_force_nms(const std::vector<Detection>& dets, double threshold) {
  const std::size_t n = dets.size();
  std::optional<std::vector<Detection>> found;
  int solutions = 0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      bool blocked = false;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i || !(mask >> j & 1u)) continue;
        if (dets[j].class_id == dets[i].class_id && outranks(dets[j], dets[i]) &&
            iou(dets[j].box, dets[i].box) >= threshold) {
          blocked = true;
          break;
        }
      }
      const bool kept = mask >> i & 1u;
      ok = kept != blocked;
    }
    if (ok) {
      ++solutions;
      std::vector<Detection> kept;
      for (std::size_t i = 0; i < n; ++i) {
        if (mask >> i & 1u) kept.push_back(dets[i]);
      }
      found = kept;
    }
  }
  if (solutions != 1) return std::nullopt;
  return found;
}

/// Leftmost argmin by linear scan.
inline int argmin_leftmost(const std::vector<std::int64_t>& counts) {
  int best = 0;
  for (int k = 0; k < static_cast<int>(counts.size()); ++k) {
    if (counts[static_cast<std::size_t>(k)] < counts[static_cast<std::size_t>(best)]) best = k;
  }
  return best;
}

/// Exhaustive matcher: enumerates every partial injective assignment of
/// detections to same-class ground truth and keeps those consistent with
/// greedy-by-score semantics (each detection, in score order, takes the
/// highest-IoU remaining ground truth, lowest index on ties, if it reaches the
/// threshold). Returns per-detection matched ground-truth index or -1, or an
/// empty vector when the consistent assignment is not unique.
inline std::vector<int> brute_force_match(const std::vector<Detection>& dets, const std::vector<Detection>& gts,
                                          double threshold) {
  const std::size_t n = dets.size();
  std::vector<int> assign(n, -1);
  std::vector<std::vector<int>> consistent;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return outranks(dets[a], dets[b]); });

  auto check = [&]() {
    std::vector<bool> taken(gts.size(), false);
    for (std::size_t di : order) {
      int want = -1;
      double best = -1.0;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (taken[g] || gts[g].class_id != dets[di].class_id) continue;
        const double v = iou(dets[di].box, gts[g].box);
        if (v >= threshold && v > best) {
          best = v;
          want = static_cast<int>(g);
        }
      }
      if (assign[di] != want) return false;
      if (want >= 0) taken[static_cast<std::size_t>(want)] = true;
    }
    return true;
  };

  // Odometer over assignments in {-1, 0, ..., |gts|-1}^n, injective only.
  std::vector<int> digits(n, -1);
  while (true) {
    std::vector<bool> used(gts.size(), false);
    bool injective = true;
    for (int d : digits) {
      if (d >= 0) {
        if (used[static_cast<std::size_t>(d)]) injective = false;
        used[static_cast<std::size_t>(d)] = true;
      }
    }
    if (injective) {
      assign = digits;
      if (check()) consistent.push_back(assign);
    }
    std::size_t pos = 0;
    while (pos < n && ++digits[pos] == static_cast<int>(gts.size())) digits[pos++] = -1;
    if (pos == n) break;
  }
  if (consistent.size() != 1) return {};
  return consistent.front();
}

/// Random box with corners on a 0.5-pixel grid inside [0, extent].
inline Box random_box(std::mt19937_64& g, double extent = 100.0) {
  std::uniform_int_distribution<int> coord(0, static_cast<int>(extent * 2) - 2);
  std::uniform_int_distribution<int> len(1, static_cast<int>(extent));
  const double x = coord(g) / 2.0;
  const double y = coord(g) / 2.0;
  return Box{x, y, x + len(g) / 2.0, y + len(g) / 2.0};
}

}  // namespace astod::oracle
