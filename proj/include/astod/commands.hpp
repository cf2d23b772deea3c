#pragma once

// File-level pipeline stages. Each stage reads its inputs from disk, writes
// canonical documents, and is a pure function of (inputs, config).
//
// Training and refinement of the detector happen outside this toolkit: the
// merged dataset written by `filter` (annotations carry `alpha` and `source`)
// is the input of an external trainer, and the refined model's predictions on
// the unlabeled pool come back as a new detection file for `aggregate`.

#include <filesystem>
#include <string>
#include <vector>

#include "astod/config.hpp"
#include "astod/dataset.hpp"
#include "astod/eval.hpp"
#include "astod/io.hpp"
#include "astod/pseudolabel.hpp"
#include "astod/reports.hpp"
#include "astod/simulator.hpp"
#include "astod/stages.hpp"
#include "astod/thresholding.hpp"

namespace astod {

namespace fs = std::filesystem;

inline void require_path(const fs::path& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string("missing path: ") + what);
}

/// Multi-view aggregation of a detection file into the candidate set.
inline Dataset cmd_aggregate(const fs::path& detections, const fs::path& dataset, const PipelineConfig& cfg,
                             const fs::path& out) {
  require_path(detections, "detections");
  require_path(dataset, "dataset");
  require_path(out, "output");
  const Dataset pool = load_dataset(dataset);
  const ViewPool views = load_detections(detections, pool, cfg.scale_factor);
  const CandidateMap candidates = aggregate_pool(views, pool, cfg.nms, cfg.view_set(), cfg.workers);
  Dataset ds = candidates_to_dataset(candidates, pool);
  save_dataset(ds, out);
  return ds;
}

/// Ground thresholds of a candidate set.
inline ThresholdSet cmd_threshold(const fs::path& candidates, const PipelineConfig& cfg, const fs::path& out) {
  require_path(candidates, "candidates");
  require_path(out, "output");
  const Dataset ds = load_dataset(candidates);
  const std::vector<Detection> all = flatten(candidates_from_dataset(ds));
  ThresholdSet ts = compute_thresholds(all, cfg.histogram, cfg.mode);
  save_json(out, threshold_set_to_json(ts));
  return ts;
}

struct FilterResult {
  Dataset pseudo;
  Dataset merged;
  DatasetCounts counts;
  std::size_t n_pseudo_labels = 0;
};

/// Applies thresholds to the candidates, writes the pseudo-labeled set and
/// its union with the labeled set.
inline FilterResult cmd_filter(const fs::path& candidates, const fs::path& thresholds, const fs::path& labeled,
                               const PipelineConfig& cfg, const fs::path& out_pseudo, const fs::path& out_merged) {
  require_path(candidates, "candidates");
  require_path(thresholds, "thresholds");
  require_path(labeled, "labeled");
  const Dataset cand = load_dataset(candidates);
  const ThresholdSet ts = load_thresholds(thresholds);
  const Dataset lab = load_dataset(labeled);

  const CandidateMap filtered = filter_candidates(candidates_from_dataset(cand), ts);
  const std::vector<PseudoImage> pseudo = emit_pseudo_dataset(filtered, ts, cfg.weighted);
  std::int64_t first_id = 1;
  for (const Annotation& a : lab.annotations) first_id = std::max(first_id, a.id + 1);

  FilterResult r;
  r.pseudo = pseudo_to_dataset(pseudo, cand, first_id);
  r.merged = merge_datasets(lab, r.pseudo);
  r.n_pseudo_labels = count_pseudo_labels(pseudo);
  r.counts.n_labeled = lab.images.size();
  r.counts.n_candidates = cand.images.size();
  r.counts.n_pseudo = pseudo.size();
  if (!out_pseudo.empty()) save_dataset(r.pseudo, out_pseudo);
  if (!out_merged.empty()) save_dataset(r.merged, out_merged);
  return r;
}

/// Recomputes `alpha` for every scored annotation of a dataset using the
/// two-sided weighting with the class threshold as the low end. Annotations
/// without a score are ground truth and get weight 1.
inline Dataset cmd_weights(const fs::path& input, const fs::path& thresholds, const PipelineConfig& cfg,
                           const fs::path& out) {
  require_path(input, "input");
  require_path(thresholds, "thresholds");
  require_path(out, "output");
  Dataset ds = load_dataset(input);
  const ThresholdSet ts = load_thresholds(thresholds);
  for (Annotation& a : ds.annotations) {
    if (!a.score || a.source == Source::kGroundTruth || !cfg.weighted) {
      a.alpha = 1.0;
      continue;
    }
    const std::optional<double> tau = ts.tau_for(a.category_id);
    a.alpha = tau ? alpha_weight_general(*a.score, *tau, cfg.tau_high) : 1.0;
  }
  save_dataset(ds, out);
  return ds;
}

/// Predictions may be a dataset with scored annotations or a detection file;
/// detection-file boxes are mapped back from their view using the ground
/// truth image sizes.
inline DetectionsByImage load_predictions(const fs::path& path, const Dataset& gt, double scale_factor) {
  const json doc = load_json(path);
  if (doc.is_object() && doc.contains("images")) {
    const Dataset ds = dataset_from_json(doc, path.string());
    for (const ImageInfo& im : ds.images) {
      if (!gt.find_image(im.id)) {
        throw IntegrityError(path.string() + ": image id " + std::to_string(im.id) + " not in ground truth");
      }
    }
    return ds.detections_by_image();
  }
  DetectionsByImage out;
  const ViewPool pool = group_detections(detection_records_from_json(doc, path.string()), gt, scale_factor);
  for (const auto& [image, views] : pool) {
    const ImageDims dims = gt.find_image(image)->dims();
    auto& v = out[image];
    for (const ViewPredictions& vp : views) {
      for (const Detection& d : vp.detections) v.push_back(Detection{d.class_id, invert_view(d.box, vp.view, dims), d.score});
    }
  }
  return out;
}

inline json cmd_eval(const fs::path& predictions, const fs::path& ground_truth, const PipelineConfig& cfg,
                     const fs::path& out) {
  require_path(predictions, "predictions");
  require_path(ground_truth, "ground truth");
  const Dataset gt = load_dataset(ground_truth);
  const DetectionsByImage preds = load_predictions(predictions, gt, cfg.scale_factor);
  const DetectionsByImage truth = gt.detections_by_image();
  const std::vector<double> ious = coco_iou_thresholds();
  json report = metrics_to_json(match_dataset(preds, truth, cfg.eval_iou), cfg.eval_iou,
                                average_precision(preds, truth, ious), ious);
  report["n_images"] = gt.images.size();
  if (!out.empty()) save_json(out, report);
  return report;
}

inline constexpr const char* kCandidatesFile = "candidates.json";
inline constexpr const char* kThresholdsFile = "thresholds.json";
inline constexpr const char* kPseudoFile = "pseudo.json";
inline constexpr const char* kMergedFile = "merged.json";
inline constexpr const char* kMetricsFile = "metrics.json";
inline constexpr const char* kSummaryFile = "summary.json";

/// aggregate -> threshold -> filter -> eval (when ground truth is given),
/// writing every artifact plus a summary into the output directory.
inline json cmd_pipeline(const PipelineConfig& cfg) {
  require_path(cfg.paths.output_dir, "output_dir");
  const fs::path dir = cfg.paths.output_dir;
  const Dataset pool = load_dataset(cfg.paths.dataset);

  cmd_aggregate(cfg.paths.detections, cfg.paths.dataset, cfg, dir / kCandidatesFile);
  const ThresholdSet ts = cmd_threshold(dir / kCandidatesFile, cfg, dir / kThresholdsFile);
  const FilterResult fr = cmd_filter(dir / kCandidatesFile, dir / kThresholdsFile, cfg.paths.labeled, cfg,
                                     dir / kPseudoFile, dir / kMergedFile);

  json artifacts = json::array({kCandidatesFile, kThresholdsFile, kPseudoFile, kMergedFile});
  json summary{{"config", config_to_json(cfg)},
               {"counts",
                {{"n_labeled", fr.counts.n_labeled},
                 {"n_unlabeled", pool.images.size()},
                 {"n_candidates", fr.counts.n_candidates},
                 {"n_pseudo", fr.counts.n_pseudo},
                 {"n_pseudo_labels", fr.n_pseudo_labels},
                 {"n_merged_images", fr.merged.images.size()}}},
               {"thresholds", threshold_set_to_json(ts)},
               {"metrics", nullptr}};
  if (!cfg.paths.ground_truth.empty()) {
    summary["metrics"] = cmd_eval(dir / kPseudoFile, cfg.paths.ground_truth, cfg, dir / kMetricsFile);
    artifacts.push_back(kMetricsFile);
  }
  artifacts.push_back(kSummaryFile);
  summary["artifacts"] = std::move(artifacts);
  save_json(dir / kSummaryFile, summary);
  return summary;
}

struct SimulationOutputs {
  json report;
  std::string csv;
};

/// Seeds of the independent parts of a simulation run.
struct SimulationSeeds {
  std::uint64_t scenes;
  std::uint64_t detector;

  explicit SimulationSeeds(std::uint64_t seed)
      : scenes(rng::derive(seed, {101})), detector(rng::derive(seed, {102})) {}
};

inline sim::LoopConfig loop_config(const PipelineConfig& cfg) {
  sim::LoopConfig lc;
  lc.histogram = cfg.histogram;
  lc.mode = cfg.mode;
  lc.nms = cfg.nms;
  lc.views = cfg.view_specs();
  lc.eval_iou = cfg.eval_iou;
  lc.weighted = cfg.weighted;
  lc.small_area = cfg.simulator.scene.small_area;
  lc.workers = cfg.workers;
  return lc;
}

/// Labeled set and hidden-ground-truth unlabeled pool of a simulation.
inline std::pair<Dataset, Dataset> simulation_datasets(const PipelineConfig& cfg) {
  if (!cfg.seed) throw ConfigError("the simulator requires a seed");
  const SimulationSeeds seeds(*cfg.seed);
  const auto& sc = cfg.simulator;
  Dataset labeled = sim::generate_scenes(sc.scene, sc.labeled_images, seeds.scenes, 1, cfg.workers);
  Dataset pool = sim::generate_scenes(sc.scene, sc.unlabeled_images, seeds.scenes, 1 + sc.labeled_images, cfg.workers);
  return {std::move(labeled), std::move(pool)};
}

/// Iterative loop in simulation, with the ground threshold and, when the
/// sweep list is non-empty, with each fixed threshold in its place.
inline SimulationOutputs cmd_simulate(const PipelineConfig& cfg, const fs::path& out_dir) {
  const auto [labeled, pool] = simulation_datasets(cfg);
  const SimulationSeeds seeds(*cfg.seed);
  const auto& sc = cfg.simulator;

  std::vector<LabeledLoop> runs;
  sim::LoopConfig lc = loop_config(cfg);
  runs.push_back({"ground", sim::run_iteration_loop(labeled, pool, sc.detector, sc.improvement, sc.iterations, lc,
                                                     seeds.detector)});
  for (double tau : sc.sweep) {
    lc.fixed_tau = tau;
    runs.push_back({format_fixed(tau), sim::run_iteration_loop(labeled, pool, sc.detector, sc.improvement,
                                                                sc.iterations, lc, seeds.detector)});
  }

  SimulationOutputs out;
  json runs_json = json::array();
  for (const LabeledLoop& r : runs) runs_json.push_back(json{{"threshold", r.label}, {"iterations", loop_to_json(r.report)}});
  out.report = json{{"config", config_to_json(cfg)},
                    {"simulator",
                     {{"labeled_images", sc.labeled_images},
                      {"unlabeled_images", sc.unlabeled_images},
                      {"iterations", sc.iterations},
                      {"sweep", sc.sweep},
                      {"scene", scene_to_json(sc.scene)},
                      {"detector", detector_to_json(sc.detector)},
                      {"improvement", improvement_to_json(sc.improvement)}}},
                    {"runs", std::move(runs_json)}};
  out.csv = loops_to_csv(runs);
  if (!out_dir.empty()) {
    save_json(out_dir / "simulation.json", out.report);
    write_text(out_dir / "simulation.csv", out.csv);
  }
  return out;
}

/// Writes a synthetic corpus that `pipeline` can consume: labeled set,
/// unlabeled pool, its hidden ground truth, the initial teacher's multi-view
/// detection file and a matching configuration.
inline void export_corpus(const PipelineConfig& cfg, const fs::path& dir) {
  const auto [labeled, pool_gt] = simulation_datasets(cfg);
  const SimulationSeeds seeds(*cfg.seed);
  Dataset pool = pool_gt;
  pool.annotations.clear();
  const ViewPool views = sim::simulate_detector(pool_gt, cfg.simulator.detector, cfg.view_specs(), seeds.detector,
                                                cfg.workers, cfg.simulator.scene.small_area);
  save_dataset(labeled, dir / "labeled.json");
  save_dataset(pool, dir / "unlabeled.json");
  save_dataset(pool_gt, dir / "ground_truth.json");
  save_json(dir / "detections.json", detection_records_to_json(sim::to_detection_records(views)));
  json c = config_to_json(cfg);
  c["paths"] = json{{"dataset", "unlabeled.json"},
                    {"detections", "detections.json"},
                    {"labeled", "labeled.json"},
                    {"ground_truth", "ground_truth.json"},
                    {"output_dir", "out"}};
  save_json(dir / "config.json", c);
}

}  // namespace astod
