#pragma once

// Synthetic scenes and a parametric stand-in for a teacher detector. The
// detector model reproduces the qualitative behavior the pipeline relies on
// (U-shaped score histograms, view-dependent misses) with known ground truth.
// The improvement model is a declared modeling assumption about how label
// quality turns into a better student; nothing here learns.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "astod/dataset.hpp"
#include "astod/error.hpp"
#include "astod/eval.hpp"
#include "astod/geometry.hpp"
#include "astod/io.hpp"
#include "astod/nms.hpp"
#include "astod/parallel.hpp"
#include "astod/pseudolabel.hpp"
#include "astod/random.hpp"
#include "astod/stages.hpp"
#include "astod/thresholding.hpp"

namespace astod::sim {

// Stream purposes for rng::derive.
inline constexpr std::uint64_t kSceneStream = 1;
inline constexpr std::uint64_t kDetectorStream = 2;
inline constexpr std::uint64_t kObjectStream = 3;

struct SceneConfig {
  std::int64_t width = 640;
  std::int64_t height = 480;
  int min_objects = 1;
  int max_objects = 8;
  std::vector<double> class_weights = {0.5, 0.3, 0.2};  // category ids 1..n
  // Side lengths are log-uniform in [min_size, max_size]; a `small_fraction`
  // of objects instead use [small_min_size, small_max_size].
  double min_size = 32.0;
  double max_size = 256.0;
  double small_fraction = 0.3;
  double small_min_size = 12.0;
  double small_max_size = 32.0;
  double small_area = 32.0 * 32.0;  // objects below this area count as small
  // Objects are placed so that no two overlap above this IoU.
  double max_overlap_iou = 0.3;
  int placement_attempts = 50;

  void validate() const {
    if (width <= 0 || height <= 0) throw ConfigError("scene dimensions must be positive");
    if (min_objects < 0 || max_objects < min_objects) throw ConfigError("invalid objects-per-image range");
    if (class_weights.empty()) throw ConfigError("scene needs at least one class");
    double sum = 0.0;
    for (double w : class_weights) {
      if (!(w >= 0.0)) throw ConfigError("class weights must be non-negative");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-6) throw ConfigError("class weights must sum to 1");
    if (!(0.0 < min_size && min_size < max_size)) throw ConfigError("invalid object size range");
    if (!(0.0 < small_min_size && small_min_size < small_max_size)) throw ConfigError("invalid small size range");
    if (small_fraction < 0.0 || small_fraction > 1.0) throw ConfigError("small_fraction must lie in [0, 1]");
    if (max_size > static_cast<double>(std::min(width, height))) {
      throw ConfigError("max object size exceeds the image");
    }
    if (!(max_overlap_iou > 0.0 && max_overlap_iou <= 1.0)) throw ConfigError("max_overlap_iou must lie in (0, 1]");
  }

  std::size_t n_classes() const noexcept { return class_weights.size(); }
};

inline std::vector<Category> scene_categories(const SceneConfig& cfg) {
  std::vector<Category> cats;
  for (std::size_t i = 0; i < cfg.n_classes(); ++i) {
    cats.push_back(Category{static_cast<CategoryId>(i + 1), "class_" + std::to_string(i + 1)});
  }
  return cats;
}

/// Draws `n` images with ground-truth boxes. Image ids start at
/// `first_image_id`; every image uses its own stream keyed by (seed, id), so
/// the result does not depend on `workers`.
inline Dataset generate_scenes(const SceneConfig& cfg, std::int64_t n, std::uint64_t seed,
                               ImageId first_image_id = 1, int workers = 1) {
  cfg.validate();
  if (n <= 0) throw ConfigError("scene count must be positive");
  const double W = static_cast<double>(cfg.width);
  const double H = static_cast<double>(cfg.height);

  std::vector<std::vector<Annotation>> per_image(static_cast<std::size_t>(n));
  parallel_for(per_image.size(), workers, [&](std::size_t i) {
    const ImageId id = first_image_id + static_cast<ImageId>(i);
    rng::Stream s(rng::derive(seed, {kSceneStream, static_cast<std::uint64_t>(id)}));
    const int span = cfg.max_objects - cfg.min_objects + 1;
    const int count = cfg.min_objects + std::min(span - 1, static_cast<int>(s.uniform() * span));
    auto& anns = per_image[i];
    for (int o = 0; o < count; ++o) {
      const std::size_t cls = rng::categorical(cfg.class_weights, s.uniform());
      const bool small = s.uniform() < cfg.small_fraction;
      const double lo = small ? cfg.small_min_size : cfg.min_size;
      const double hi = small ? cfg.small_max_size : cfg.max_size;
      const double w = s.log_uniform(lo, hi);
      const double h = s.log_uniform(lo, hi);
      for (int attempt = 0; attempt < cfg.placement_attempts; ++attempt) {
        const double x = s.uniform() * (W - w);
        const double y = s.uniform() * (H - h);
        const Box b{x, y, x + w, y + h};
        const bool clear = std::none_of(anns.begin(), anns.end(), [&](const Annotation& a) {
          return iou(a.box, b) > cfg.max_overlap_iou;
        });
        if (clear) {
          anns.push_back(Annotation{0, id, static_cast<CategoryId>(cls + 1), b, std::nullopt, std::nullopt, std::nullopt});
          break;
        }
      }
    }
  });

  Dataset ds;
  ds.categories = scene_categories(cfg);
  std::int64_t next_id = 1;
  for (std::size_t i = 0; i < per_image.size(); ++i) {
    const ImageId id = first_image_id + static_cast<ImageId>(i);
    ds.images.push_back(ImageInfo{id, cfg.width, cfg.height, "sim_" + std::to_string(id) + ".jpg"});
    for (Annotation& a : per_image[i]) {
      a.id = next_id++;
      ds.annotations.push_back(a);
    }
  }
  return ds;
}

struct BetaParams {
  double a = 1.0;
  double b = 1.0;

  friend bool operator==(const BetaParams&, const BetaParams&) = default;
};

/// Parametric teacher. Detection and score draws of one object are coupled
/// across views through a Gaussian copula.
struct DetectorModel {
  // Per-class recall for category ids 1..n; the last entry covers higher ids.
  std::vector<double> recall = {0.7};
  // Recall multiplier for small objects in views that do not upscale.
  double small_recall_factor = 0.35;
  // Recall multiplier per view, indexed by ViewKind.
  std::array<double, 4> view_recall = {1.0, 1.0, 1.0, 1.0};
  // Correlation across views of an object's detection draw and of its score
  // draw (Gaussian copula); 0 makes views independent, 1 identical.
  double view_correlation = 0.6;
  double score_correlation = 0.3;
  double fp_rate = 5.0;    // false positives per image per view (Poisson mean)
  double loc_sigma = 1.5;  // pixel noise on each box edge
  double fp_min_size = 16.0;
  double fp_max_size = 160.0;
  BetaParams tp_score{8.0, 2.0};
  BetaParams fp_score{2.0, 8.0};
  // Optional hard class whose true positives score low.
  std::optional<CategoryId> hard_class;
  BetaParams hard_tp_score{2.0, 4.0};

  double recall_for(CategoryId c) const noexcept {
    if (recall.empty()) return 0.0;
    const auto i = static_cast<std::size_t>(std::max<CategoryId>(c - 1, 0));
    return recall[std::min(i, recall.size() - 1)];
  }

  void validate() const {
    for (double r : recall) {
      if (r < 0.0 || r > 1.0) throw ConfigError("recall must lie in [0, 1]");
    }
    if (small_recall_factor < 0.0 || small_recall_factor > 1.0) throw ConfigError("small_recall_factor must lie in [0, 1]");
    for (double v : view_recall) {
      if (v < 0.0 || v > 1.0) throw ConfigError("view recall factors must lie in [0, 1]");
    }
    if (view_correlation < 0.0 || view_correlation > 1.0) throw ConfigError("view_correlation must lie in [0, 1]");
    if (score_correlation < 0.0 || score_correlation > 1.0) throw ConfigError("score_correlation must lie in [0, 1]");
    if (fp_rate < 0.0) throw ConfigError("fp_rate must be non-negative");
    if (loc_sigma < 0.0) throw ConfigError("loc_sigma must be non-negative");
    if (!(0.0 < fp_min_size && fp_min_size < fp_max_size)) throw ConfigError("invalid false-positive size range");
    for (const BetaParams& p : {tp_score, fp_score, hard_tp_score}) {
      if (!(p.a > 0.0 && p.b > 0.0)) throw ConfigError("Beta parameters must be positive");
    }
  }

  friend bool operator==(const DetectorModel&, const DetectorModel&) = default;
};

namespace detail {

inline double clamp_score(double s) { return std::clamp(s, 0.0, 1.0); }

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Uniform in (0, 1) from a shared and a view-specific standard normal.
inline double copula_uniform(double shared, double own, double rho) {
  const double u = normal_cdf(std::sqrt(rho) * shared + std::sqrt(1.0 - rho) * own);
  return std::clamp(u, 1e-300, 1.0 - 1e-16);
}

/// Per-object normals shared by all views: (detection, score) pairs.
inline std::vector<std::array<double, 2>> shared_object_draws(std::size_t n, ImageId image, std::uint64_t seed) {
  rng::Stream s(rng::derive(seed, {kObjectStream, static_cast<std::uint64_t>(image)}));
  std::vector<std::array<double, 2>> out(n);
  for (auto& d : out) d = {s.normal(), s.normal()};
  return out;
}

}  // namespace detail

/// Predictions of one image under one view, in that view's frame.
///
/// Draw order is fixed per (seed, image, view): for each ground-truth object a
/// detection normal, a score normal and four jitter normals; then the
/// false-positive count, then six uniforms per false positive. The object's
/// detection and score normals are mixed with draws shared by all views of
/// the image. Two models evaluated with the same seed therefore share their
/// random numbers, and a model with higher recall, fewer false positives,
/// less jitter or a larger TP score shape detects a superset with tighter
/// boxes and higher scores.
inline ViewPredictions simulate_view(std::span<const Annotation> gt, const ImageInfo& image,
                                     std::span<const Category> categories, const DetectorModel& m,
                                     const ViewSpec& view, std::uint64_t seed, double small_area) {
  rng::Stream s(rng::derive(seed, {kDetectorStream, static_cast<std::uint64_t>(image.id),
                                   static_cast<std::uint64_t>(view.kind)}));
  const auto shared = detail::shared_object_draws(gt.size(), image.id, seed);
  const ImageDims dims = image.dims();
  ViewPredictions vp{view, {}};
  const double view_factor = m.view_recall[static_cast<std::size_t>(view.kind)];
  for (std::size_t o = 0; o < gt.size(); ++o) {
    const Annotation& a = gt[o];
    const double u_detect = detail::copula_uniform(shared[o][0], s.normal(), m.view_correlation);
    const double u_score = detail::copula_uniform(shared[o][1], s.normal(), m.score_correlation);
    const double z[4] = {s.normal(), s.normal(), s.normal(), s.normal()};
    const bool small = a.box.area() < small_area;
    double p = m.recall_for(a.category_id) * view_factor;
    if (small && !view.scales()) p *= m.small_recall_factor;
    if (!(u_detect < p)) continue;
    Box b{a.box.x1 + m.loc_sigma * z[0], a.box.y1 + m.loc_sigma * z[1], a.box.x2 + m.loc_sigma * z[2],
          a.box.y2 + m.loc_sigma * z[3]};
    if (b.x2 < b.x1 + 1.0) b.x2 = b.x1 + 1.0;
    if (b.y2 < b.y1 + 1.0) b.y2 = b.y1 + 1.0;
    const BetaParams& sp = (m.hard_class && *m.hard_class == a.category_id) ? m.hard_tp_score : m.tp_score;
    vp.detections.push_back(
        Detection{a.category_id, apply_view(b, view, dims), detail::clamp_score(rng::beta_quantile(sp.a, sp.b, u_score))});
  }
  const int n_fp = categories.empty() ? 0 : rng::poisson_quantile(m.fp_rate, s.uniform());
  for (int i = 0; i < n_fp; ++i) {
    const double u_cls = s.uniform();
    const double w = std::min(s.log_uniform(m.fp_min_size, m.fp_max_size), dims.width);
    const double h = std::min(s.log_uniform(m.fp_min_size, m.fp_max_size), dims.height);
    const double x = s.uniform() * (dims.width - w);
    const double y = s.uniform() * (dims.height - h);
    const double u_score = s.uniform();
    const std::size_t ci = std::min(categories.size() - 1, static_cast<std::size_t>(u_cls * categories.size()));
    vp.detections.push_back(Detection{categories[ci].id, apply_view(Box{x, y, x + w, y + h}, view, dims),
                                      detail::clamp_score(rng::beta_quantile(m.fp_score.a, m.fp_score.b, u_score))});
  }
  return vp;
}

/// Simulated multi-view predictions for every image of `gt`.
inline ViewPool simulate_detector(const Dataset& gt, const DetectorModel& m, std::span<const ViewSpec> views,
                                  std::uint64_t seed, int workers = 1, double small_area = 32.0 * 32.0) {
  m.validate();
  if (views.empty()) throw ConfigError("at least one view is required");
  std::map<ImageId, std::vector<Annotation>> by_image;
  for (const Annotation& a : gt.annotations) by_image[a.image_id].push_back(a);
  const std::vector<Annotation> none;

  std::vector<std::vector<ViewPredictions>> out(gt.images.size());
  parallel_for(gt.images.size(), workers, [&](std::size_t i) {
    const ImageInfo& im = gt.images[i];
    auto it = by_image.find(im.id);
    const std::span<const Annotation> anns = it == by_image.end() ? std::span<const Annotation>(none) : it->second;
    for (const ViewSpec& v : views) out[i].push_back(simulate_view(anns, im, gt.categories, m, v, seed, small_area));
  });
  ViewPool pool;
  for (std::size_t i = 0; i < gt.images.size(); ++i) pool.emplace(gt.images[i].id, std::move(out[i]));
  return pool;
}

/// Flattens a view pool into detector-exchange records (view frame).
inline std::vector<DetectionRecord> to_detection_records(const ViewPool& pool) {
  std::vector<DetectionRecord> recs;
  for (const auto& [image, views] : pool) {
    for (const ViewPredictions& vp : views) {
      for (const Detection& d : vp.detections) {
        recs.push_back(DetectionRecord{image, d.class_id, d.box, d.score, vp.view.kind});
      }
    }
  }
  return recs;
}

/// Maps pseudo-label quality to the next detector. All rates are fractions
/// applied per unit of measured F1, so a better pseudo-labeled set never
/// yields a worse student; the refinement step adds a fixed bonus.
struct ImprovementModel {
  double recall_gain = 0.5;  // share of the gap to recall_ceiling closed
  double recall_ceiling = 0.95;
  double small_gain = 0.5;   // share of the gap of small_recall_factor to 1 closed
  double fp_decay = 0.4;     // fp_rate *= 1 - fp_decay * f1
  double sigma_decay = 0.3;  // loc_sigma *= 1 - sigma_decay * f1
  double score_gain = 2.0;   // tp_score.a += score_gain * f1
  double refine_recall_bonus = 0.02;
  double refine_fp_decay = 0.1;
  double refine_score_bonus = 0.5;

  static ImprovementModel identity() {
    return ImprovementModel{0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  }

  void validate() const {
    auto unit = [](double v, const char* name) {
      if (v < 0.0 || v > 1.0) throw ConfigError(std::string(name) + " must lie in [0, 1]");
    };
    unit(recall_gain, "recall_gain");
    unit(recall_ceiling, "recall_ceiling");
    unit(small_gain, "small_gain");
    unit(fp_decay, "fp_decay");
    unit(sigma_decay, "sigma_decay");
    unit(refine_recall_bonus, "refine_recall_bonus");
    unit(refine_fp_decay, "refine_fp_decay");
    if (score_gain < 0.0 || refine_score_bonus < 0.0) throw ConfigError("score gains must be non-negative");
  }

  /// Student trained on pseudo-labels of measured quality `f1`.
  DetectorModel train(const DetectorModel& teacher, double f1) const {
    const double q = std::clamp(f1, 0.0, 1.0);
    DetectorModel m = teacher;
    for (double& r : m.recall) r = std::max(r, r + recall_gain * q * (recall_ceiling - r));
    m.small_recall_factor += small_gain * q * (1.0 - m.small_recall_factor);
    m.fp_rate *= 1.0 - fp_decay * q;
    m.loc_sigma *= 1.0 - sigma_decay * q;
    m.tp_score.a += score_gain * q;
    return m;
  }

  /// Student after the short labeled-only refinement.
  DetectorModel refine(const DetectorModel& student) const {
    DetectorModel m = student;
    for (double& r : m.recall) r = std::max(r, std::min(recall_ceiling, r + refine_recall_bonus));
    m.fp_rate *= 1.0 - refine_fp_decay;
    m.tp_score.a += refine_score_bonus;
    return m;
  }
};

/// Pipeline settings shared by every labeling pass of the simulator.
struct LoopConfig {
  HistogramConfig histogram;
  ThresholdMode mode = ThresholdMode::kClassWise;
  NmsOptions nms;
  std::vector<ViewSpec> views = {ViewSpec::identity(), ViewSpec::hflip(), ViewSpec::scale(), ViewSpec::hflip_scale()};
  double eval_iou = 0.5;
  bool weighted = true;
  // Replaces the ground threshold with one fixed value for all classes.
  std::optional<double> fixed_tau;
  bool compute_map = true;
  double small_area = 32.0 * 32.0;
  int workers = 1;
};

struct PassMetrics {
  std::size_t n_images = 0;            // unlabeled pool
  std::size_t n_candidate_images = 0;  // images with at least one candidate
  std::size_t n_candidates = 0;
  double candidate_recall = 0.0;
  std::size_t n_pseudo_images = 0;
  std::size_t n_pseudo_labels = 0;
  MatchCounts counts;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double mean_alpha = 0.0;
  double map = 0.0;  // AP50:95 of the candidate set, 0 when not computed
  std::optional<double> uniform_tau;
  std::map<CategoryId, double> class_tau;
  std::vector<CategoryId> empty_classes;
  std::map<CategoryId, std::size_t> pseudo_per_class;
};

/// Scores a pseudo-labeled set against hidden ground truth.
inline void score_pseudo(PassMetrics& pm, const std::vector<PseudoImage>& pseudo, const DetectionsByImage& gt,
                         double eval_iou) {
  DetectionsByImage kept;
  double alpha_sum = 0.0;
  pm.pseudo_per_class.clear();
  for (const PseudoImage& p : pseudo) {
    auto& v = kept[p.image_id];
    for (const PseudoLabel& l : p.labels) {
      v.push_back(l.detection);
      alpha_sum += l.alpha;
      ++pm.pseudo_per_class[l.detection.class_id];
    }
  }
  pm.n_pseudo_images = pseudo.size();
  pm.n_pseudo_labels = count_pseudo_labels(pseudo);
  pm.mean_alpha = pm.n_pseudo_labels ? alpha_sum / static_cast<double>(pm.n_pseudo_labels) : 0.0;
  pm.counts = match_dataset(kept, gt, eval_iou);
  const PrF1 m = pr_f1(pm.counts);
  pm.precision = m.precision;
  pm.recall = m.recall;
  pm.f1 = m.f1;
}

/// Everything one labeling pass produces.
struct LabelingPass {
  CandidateMap candidates;
  ThresholdSet thresholds;
  std::vector<PseudoImage> pseudo;
  PassMetrics metrics;
};

inline ThresholdSet fixed_threshold_set(const HistogramConfig& cfg, double tau) {
  ThresholdSet ts;
  ts.mode = ThresholdMode::kUniform;
  ts.config = cfg;
  ts.uniform = ClassThreshold{-1, tau, empty_histogram(cfg)};
  return ts;
}

/// Teacher inference on the pool, view aggregation, thresholding, filtering
/// and weighting, scored against the hidden ground truth.
inline LabelingPass run_labeling_pass(const Dataset& pool_gt, const DetectorModel& m, const LoopConfig& cfg,
                                      std::uint64_t seed) {
  LabelingPass pass;
  const ViewPool views = simulate_detector(pool_gt, m, cfg.views, seed, cfg.workers, cfg.small_area);
  pass.candidates = aggregate_pool(views, pool_gt, cfg.nms, {}, cfg.workers);
  const DetectionsByImage gt = pool_gt.detections_by_image();
  const std::vector<Detection> flat = flatten(pass.candidates);

  PassMetrics& pm = pass.metrics;
  pm.n_images = pool_gt.images.size();
  pm.n_candidate_images = pass.candidates.size();
  pm.n_candidates = flat.size();
  pm.candidate_recall = pr_f1(match_dataset(pass.candidates, gt, cfg.eval_iou)).recall;

  if (cfg.fixed_tau) {
    pass.thresholds = fixed_threshold_set(cfg.histogram, *cfg.fixed_tau);
  } else {
    try {
      pass.thresholds = compute_thresholds(flat, cfg.histogram, cfg.mode);
    } catch (const AllEmptyHistogram&) {
      // Uniform mode with no score in range: nothing can be pseudo-labeled.
      pass.thresholds = fixed_threshold_set(cfg.histogram, std::nextafter(1.0, 2.0));
    }
  }
  if (pass.thresholds.uniform) pm.uniform_tau = pass.thresholds.uniform->tau;
  for (const auto& [c, t] : pass.thresholds.per_class) pm.class_tau.emplace(c, t.tau);
  for (const auto& [c, _] : pass.thresholds.empty_classes) pm.empty_classes.push_back(c);

  pass.pseudo = emit_pseudo_dataset(filter_candidates(pass.candidates, pass.thresholds), pass.thresholds, cfg.weighted);
  score_pseudo(pm, pass.pseudo, gt, cfg.eval_iou);
  if (cfg.compute_map) {
    const std::vector<double> ious = coco_iou_thresholds();
    pm.map = average_precision(pass.candidates, gt, ious).mean_ap;
  }
  return pass;
}

struct IterationReport {
  int iteration = 0;
  PassMetrics teacher;
  PassMetrics student;
  PassMetrics refined;
  DetectorModel student_model;
  DetectorModel refined_model;
  std::size_t n_labeled = 0;
  std::size_t n_merged_images = 0;  // |D_l| + |D_p| of this iteration
};

struct LoopReport {
  std::vector<IterationReport> iterations;
};

/// Iterative teacher/student loop: label the pool with the teacher, train a
/// student through the improvement model, refine it, and promote the refined
/// student to teacher. Every pass reuses `seed`, so the models are compared on
/// shared random numbers.
inline LoopReport run_iteration_loop(const Dataset& labeled, const Dataset& unlabeled_hidden, const DetectorModel& m0,
                                     const ImprovementModel& imp, int k, const LoopConfig& cfg, std::uint64_t seed) {
  if (k < 1) throw ConfigError("iteration count must be at least 1");
  imp.validate();
  LoopReport report;
  DetectorModel teacher = m0;
  PassMetrics teacher_pass = run_labeling_pass(unlabeled_hidden, teacher, cfg, seed).metrics;
  for (int it = 1; it <= k; ++it) {
    IterationReport r;
    r.iteration = it;
    r.teacher = teacher_pass;
    r.n_labeled = labeled.images.size();
    r.n_merged_images = labeled.images.size() + teacher_pass.n_pseudo_images;
    r.student_model = imp.train(teacher, teacher_pass.f1);
    r.student = run_labeling_pass(unlabeled_hidden, r.student_model, cfg, seed).metrics;
    r.refined_model = imp.refine(r.student_model);
    r.refined = r.refined_model == r.student_model
                    ? r.student
                    : run_labeling_pass(unlabeled_hidden, r.refined_model, cfg, seed).metrics;
    teacher = r.refined_model;
    teacher_pass = r.refined;
    report.iterations.push_back(std::move(r));
  }
  return report;
}

}  // namespace astod::sim
