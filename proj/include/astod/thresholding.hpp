#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "astod/error.hpp"
#include "astod/nms.hpp"

namespace astod {

/// Score range and bin count of the ground-threshold histogram.
struct HistogramConfig {
  double lo = 0.5;
  double hi = 1.0;
  int n_bins = 21;

  void validate() const {
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
      throw ConfigError("histogram range requires lo < hi");
    }
    if (n_bins < 2) throw ConfigError("histogram needs at least 2 bins");
  }

  double bin_width() const noexcept { return (hi - lo) / n_bins; }

  /// Lower edge of bin k. Every threshold reported by the toolkit is one of
  /// these values, so filtering with `score >= edge(k)` keeps exactly the
  /// scores binned at k or above.
  double edge(int k) const noexcept {
    return k == n_bins ? hi : lo + (hi - lo) * k / n_bins;
  }

  friend bool operator==(const HistogramConfig&, const HistogramConfig&) = default;
};

struct ScoreHistogram {
  HistogramConfig config;
  std::vector<std::int64_t> counts;
  std::int64_t n_below = 0;  // scores < lo
  std::int64_t n_above = 0;  // scores > hi, only possible when hi < 1

  std::int64_t total_binned() const noexcept {
    std::int64_t n = 0;
    for (auto c : counts) n += c;
    return n;
  }
};

/// Bin index of `score`, or -1 below the range, or n_bins above it.
/// Bins are half-open [edge(k), edge(k+1)) except the last, which is closed.
inline int bin_index(const HistogramConfig& cfg, double score) noexcept {
  if (score < cfg.lo) return -1;
  if (score > cfg.hi) return cfg.n_bins;
  int k = static_cast<int>(std::floor((score - cfg.lo) / cfg.bin_width()));
  k = std::clamp(k, 0, cfg.n_bins - 1);
  // Snap against the exact edges so bin membership agrees with edge().
  while (k + 1 < cfg.n_bins && score >= cfg.edge(k + 1)) ++k;
  while (k > 0 && score < cfg.edge(k)) --k;
  return k;
}

inline void add_score(ScoreHistogram& h, double score) {
  const int k = bin_index(h.config, score);
  if (k < 0) {
    ++h.n_below;
  } else if (k >= h.config.n_bins) {
    ++h.n_above;
  } else {
    ++h.counts[static_cast<std::size_t>(k)];
  }
}

inline ScoreHistogram empty_histogram(const HistogramConfig& cfg) {
  cfg.validate();
  return ScoreHistogram{cfg, std::vector<std::int64_t>(static_cast<std::size_t>(cfg.n_bins), 0), 0, 0};
}

inline ScoreHistogram build_histogram(std::span<const double> scores, const HistogramConfig& cfg) {
  ScoreHistogram h = empty_histogram(cfg);
  for (double s : scores) add_score(h, s);
  return h;
}

/// Index of the lowest-count bin, leftmost on ties.
inline int ground_bin(const ScoreHistogram& h) {
  if (h.total_binned() == 0) throw AllEmptyHistogram();
  int best = 0;
  for (int k = 1; k < static_cast<int>(h.counts.size()); ++k) {
    if (h.counts[static_cast<std::size_t>(k)] < h.counts[static_cast<std::size_t>(best)]) best = k;
  }
  return best;
}

/// Ground threshold: lower edge of the lowest-density bin.
inline double ground_threshold(const ScoreHistogram& h) { return h.config.edge(ground_bin(h)); }

enum class ThresholdMode { kUniform, kClassWise };

constexpr std::string_view mode_name(ThresholdMode m) noexcept {
  return m == ThresholdMode::kUniform ? "uniform" : "class-wise";
}

inline ThresholdMode parse_mode(std::string_view s) {
  if (s == "uniform") return ThresholdMode::kUniform;
  if (s == "class-wise" || s == "classwise" || s == "class_wise") return ThresholdMode::kClassWise;
  throw ConfigError("unknown threshold mode '" + std::string(s) + "'");
}

struct ClassThreshold {
  int bin = 0;
  double tau = 0.0;
  ScoreHistogram histogram;
};

/// Thresholds derived from a candidate pool. Both the uniform and the
/// per-class values are kept for reporting; `mode` selects which one
/// filtering applies.
struct ThresholdSet {
  ThresholdMode mode = ThresholdMode::kClassWise;
  HistogramConfig config;
  std::map<CategoryId, ClassThreshold> per_class;
  // Classes with candidates but no score inside [lo, hi]. They yield no
  // pseudo-labels in class-wise mode.
  std::map<CategoryId, ScoreHistogram> empty_classes;
  std::optional<ClassThreshold> uniform;

  /// Threshold applied to `class_id`, or nullopt when the class is flagged
  /// empty. Throws MissingClassThreshold for classes never seen.
  std::optional<double> tau_for(CategoryId class_id) const {
    if (mode == ThresholdMode::kUniform) {
      if (!uniform) throw AllEmptyHistogram();
      return uniform->tau;
    }
    if (auto it = per_class.find(class_id); it != per_class.end()) return it->second.tau;
    if (empty_classes.contains(class_id)) return std::nullopt;
    throw MissingClassThreshold(class_id);
  }
};

inline std::optional<ClassThreshold> threshold_from(ScoreHistogram h) {
  if (h.total_binned() == 0) return std::nullopt;
  const int k = ground_bin(h);
  return ClassThreshold{k, h.config.edge(k), std::move(h)};
}

/// Builds the joint and per-class histograms of `candidates` and derives the
/// ground threshold of each. In uniform mode an empty joint histogram is an
/// error; empty per-class histograms are only recorded.
inline ThresholdSet compute_thresholds(std::span<const Detection> candidates,
                                       const HistogramConfig& cfg, ThresholdMode mode) {
  cfg.validate();
  ThresholdSet ts;
  ts.mode = mode;
  ts.config = cfg;

  ScoreHistogram joint = empty_histogram(cfg);
  std::map<CategoryId, ScoreHistogram> by_class;
  for (const Detection& d : candidates) {
    add_score(joint, d.score);
    auto [it, inserted] = by_class.try_emplace(d.class_id);
    if (inserted) it->second = empty_histogram(cfg);
    add_score(it->second, d.score);
  }

  ts.uniform = threshold_from(std::move(joint));
  if (mode == ThresholdMode::kUniform && !ts.uniform) throw AllEmptyHistogram();

  for (auto& [cls, h] : by_class) {
    if (auto t = threshold_from(h)) {
      ts.per_class.emplace(cls, std::move(*t));
    } else {
      ts.empty_classes.emplace(cls, std::move(h));
    }
  }
  return ts;
}

}  // namespace astod
