#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "astod/error.hpp"
#include "astod/geometry.hpp"
#include "astod/json_io.hpp"
#include "astod/nms.hpp"
#include "astod/simulator.hpp"
#include "astod/thresholding.hpp"

namespace astod {

struct PipelinePaths {
  std::filesystem::path dataset;       // unlabeled pool (images; annotations ignored)
  std::filesystem::path detections;    // detector-exchange file
  std::filesystem::path labeled;       // labeled set
  std::filesystem::path ground_truth;  // optional, enables evaluation
  std::filesystem::path output_dir;
};

struct SimulatorConfig {
  sim::SceneConfig scene;
  sim::DetectorModel detector;
  sim::ImprovementModel improvement;
  std::int64_t labeled_images = 100;
  std::int64_t unlabeled_images = 1000;
  int iterations = 3;
  std::vector<double> sweep;  // fixed thresholds compared against the ground threshold
};

struct PipelineConfig {
  PipelinePaths paths;
  HistogramConfig histogram;
  ThresholdMode mode = ThresholdMode::kClassWise;
  NmsOptions nms;
  std::vector<ViewKind> views = {kAllViewKinds.begin(), kAllViewKinds.end()};
  double scale_factor = kDefaultScaleFactor;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  bool weighted = true;
  double tau_high = 1.0;
  double eval_iou = 0.5;
  SimulatorConfig simulator;

  std::set<ViewKind> view_set() const { return {views.begin(), views.end()}; }

  std::vector<ViewSpec> view_specs() const {
    std::vector<ViewSpec> out;
    for (ViewKind k : views) out.push_back(ViewSpec::of(k, scale_factor));
    return out;
  }

  void validate() const {
    histogram.validate();
    validate_nms_threshold(nms.iou_threshold);
    if (views.empty()) throw ConfigError("at least one view is required");
    if (!(scale_factor > 0.0)) throw ConfigError("scale_factor must be positive");
    if (workers < 1) throw ConfigError("workers must be at least 1");
    if (!(eval_iou > 0.0 && eval_iou < 1.0)) throw ConfigError("eval_iou must lie in (0, 1)");
    if (!(tau_high > 0.0 && tau_high <= 1.0)) throw ConfigError("tau_high must lie in (0, 1]");
  }
};

namespace detail {

class ConfigReader {
 public:
  ConfigReader(const json& obj, std::string ctx) : obj_(obj), ctx_(std::move(ctx)) {
    if (!obj_.is_object()) throw ConfigError(ctx_ + ": expected an object");
  }

  /// Rejects keys that were never read.
  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.contains(it.key())) throw ConfigError(ctx_ + ": unknown key '" + it.key() + "'");
    }
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return (it == obj_.end() || it->is_null()) ? nullptr : &*it;
  }

  void number(const std::string& key, double& out) {
    if (const json* j = find(key)) {
      if (!j->is_number()) throw ConfigError(where(key) + " must be a number");
      out = j->get<double>();
    }
  }

  template <typename Int>
  void integer(const std::string& key, Int& out) {
    if (const json* j = find(key)) {
      if (!j->is_number_integer()) throw ConfigError(where(key) + " must be an integer");
      out = j->get<Int>();
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (const json* j = find(key)) {
      if (!j->is_boolean()) throw ConfigError(where(key) + " must be a boolean");
      out = j->get<bool>();
    }
  }

  void string(const std::string& key, std::string& out) {
    if (const json* j = find(key)) {
      if (!j->is_string()) throw ConfigError(where(key) + " must be a string");
      out = j->get<std::string>();
    }
  }

  void numbers(const std::string& key, std::vector<double>& out) {
    if (const json* j = find(key)) {
      if (!j->is_array()) throw ConfigError(where(key) + " must be an array of numbers");
      out.clear();
      for (const json& e : *j) {
        if (!e.is_number()) throw ConfigError(where(key) + " must be an array of numbers");
        out.push_back(e.get<double>());
      }
    }
  }

  void beta(const std::string& key, sim::BetaParams& out) {
    std::vector<double> v;
    numbers(key, v);
    if (find(key)) {
      if (v.size() != 2) throw ConfigError(where(key) + " must be [a, b]");
      out = {v[0], v[1]};
    }
  }

  std::string where(const std::string& key) const { return ctx_ + "." + key; }

 private:
  const json& obj_;
  std::string ctx_;
  std::set<std::string> seen_;
};

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

inline void read_scene(const json& j, sim::SceneConfig& s) {
  ConfigReader r(j, "simulator.scene");
  r.integer("width", s.width);
  r.integer("height", s.height);
  r.integer("min_objects", s.min_objects);
  r.integer("max_objects", s.max_objects);
  r.numbers("class_weights", s.class_weights);
  r.number("min_size", s.min_size);
  r.number("max_size", s.max_size);
  r.number("small_fraction", s.small_fraction);
  r.number("small_min_size", s.small_min_size);
  r.number("small_max_size", s.small_max_size);
  r.number("small_area", s.small_area);
  r.number("max_overlap_iou", s.max_overlap_iou);
  r.integer("placement_attempts", s.placement_attempts);
  r.finish();
}

inline void read_detector(const json& j, sim::DetectorModel& m) {
  ConfigReader r(j, "simulator.detector");
  r.numbers("recall", m.recall);
  r.number("small_recall_factor", m.small_recall_factor);
  if (const json* v = r.find("view_recall")) {
    ConfigReader vr(*v, "simulator.detector.view_recall");
    for (ViewKind k : kAllViewKinds) vr.number(std::string(view_tag(k)), m.view_recall[static_cast<std::size_t>(k)]);
    vr.finish();
  }
  r.number("view_correlation", m.view_correlation);
  r.number("score_correlation", m.score_correlation);
  r.number("fp_rate", m.fp_rate);
  r.number("loc_sigma", m.loc_sigma);
  r.number("fp_min_size", m.fp_min_size);
  r.number("fp_max_size", m.fp_max_size);
  r.beta("tp_score", m.tp_score);
  r.beta("fp_score", m.fp_score);
  r.beta("hard_tp_score", m.hard_tp_score);
  if (const json* h = r.find("hard_class")) {
    if (!h->is_number_integer()) throw ConfigError("simulator.detector.hard_class must be an integer");
    m.hard_class = h->get<CategoryId>();
  }
  r.finish();
}

inline void read_improvement(const json& j, sim::ImprovementModel& m) {
  ConfigReader r(j, "simulator.improvement");
  r.number("recall_gain", m.recall_gain);
  r.number("recall_ceiling", m.recall_ceiling);
  r.number("small_gain", m.small_gain);
  r.number("fp_decay", m.fp_decay);
  r.number("sigma_decay", m.sigma_decay);
  r.number("score_gain", m.score_gain);
  r.number("refine_recall_bonus", m.refine_recall_bonus);
  r.number("refine_fp_decay", m.refine_fp_decay);
  r.number("refine_score_bonus", m.refine_score_bonus);
  r.finish();
}

}  // namespace detail

inline std::vector<ViewKind> parse_view_list(const std::vector<std::string>& tags) {
  std::vector<ViewKind> out;
  for (const std::string& t : tags) {
    ViewKind k;
    try {
      k = parse_view_tag(t);
    } catch (const UnknownView& e) {
      throw ConfigError(e.what());
    }
    if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
  }
  if (out.empty()) throw ConfigError("at least one view is required");
  return out;
}

/// Reads a pipeline configuration document. Relative paths resolve against
/// `base_dir` (normally the directory holding the document).
inline PipelineConfig config_from_json(const json& doc, const std::filesystem::path& base_dir = {}) {
  using detail::ConfigReader;
  PipelineConfig cfg;
  ConfigReader r(doc, "config");
  if (const json* p = r.find("paths")) {
    ConfigReader pr(*p, "config.paths");
    auto path = [&](const char* key) {
      std::string s;
      pr.string(key, s);
      return detail::resolve(base_dir, s);
    };
    cfg.paths.dataset = path("dataset");
    cfg.paths.detections = path("detections");
    cfg.paths.labeled = path("labeled");
    cfg.paths.ground_truth = path("ground_truth");
    cfg.paths.output_dir = path("output_dir");
    pr.finish();
  }
  if (const json* h = r.find("histogram")) {
    ConfigReader hr(*h, "config.histogram");
    hr.number("lo", cfg.histogram.lo);
    hr.number("hi", cfg.histogram.hi);
    hr.integer("bins", cfg.histogram.n_bins);
    hr.finish();
  }
  std::string mode;
  r.string("mode", mode);
  if (!mode.empty()) cfg.mode = parse_mode(mode);
  if (const json* n = r.find("nms")) {
    ConfigReader nr(*n, "config.nms");
    nr.number("iou", cfg.nms.iou_threshold);
    nr.boolean("class_agnostic", cfg.nms.class_agnostic);
    nr.finish();
  }
  if (const json* v = r.find("views")) {
    if (!v->is_array()) throw ConfigError("config.views must be an array of view tags");
    std::vector<std::string> tags;
    for (const json& e : *v) {
      if (!e.is_string()) throw ConfigError("config.views must be an array of view tags");
      tags.push_back(e.get<std::string>());
    }
    cfg.views = parse_view_list(tags);
  }
  r.number("scale_factor", cfg.scale_factor);
  if (const json* s = r.find("seed")) {
    if (!s->is_number_unsigned()) throw ConfigError("config.seed must be a non-negative integer");
    cfg.seed = s->get<std::uint64_t>();
  }
  r.integer("workers", cfg.workers);
  r.boolean("weights", cfg.weighted);
  r.number("tau_high", cfg.tau_high);
  r.number("eval_iou", cfg.eval_iou);
  if (const json* s = r.find("simulator")) {
    ConfigReader sr(*s, "config.simulator");
    sr.integer("labeled_images", cfg.simulator.labeled_images);
    sr.integer("unlabeled_images", cfg.simulator.unlabeled_images);
    sr.integer("iterations", cfg.simulator.iterations);
    sr.numbers("sweep", cfg.simulator.sweep);
    if (const json* j = sr.find("scene")) detail::read_scene(*j, cfg.simulator.scene);
    if (const json* j = sr.find("detector")) detail::read_detector(*j, cfg.simulator.detector);
    if (const json* j = sr.find("improvement")) detail::read_improvement(*j, cfg.simulator.improvement);
    sr.finish();
  }
  r.finish();
  cfg.validate();
  return cfg;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  return config_from_json(load_json(path), path.parent_path());
}

inline json scene_to_json(const sim::SceneConfig& s) {
  return json{{"width", s.width},
              {"height", s.height},
              {"min_objects", s.min_objects},
              {"max_objects", s.max_objects},
              {"class_weights", s.class_weights},
              {"min_size", s.min_size},
              {"max_size", s.max_size},
              {"small_fraction", s.small_fraction},
              {"small_min_size", s.small_min_size},
              {"small_max_size", s.small_max_size},
              {"small_area", s.small_area},
              {"max_overlap_iou", s.max_overlap_iou},
              {"placement_attempts", s.placement_attempts}};
}

inline json detector_to_json(const sim::DetectorModel& m) {
  json vr = json::object();
  for (ViewKind k : kAllViewKinds) vr[std::string(view_tag(k))] = m.view_recall[static_cast<std::size_t>(k)];
  json j{{"recall", m.recall},
         {"small_recall_factor", m.small_recall_factor},
         {"view_recall", vr},
         {"view_correlation", m.view_correlation},
         {"score_correlation", m.score_correlation},
         {"fp_rate", m.fp_rate},
         {"loc_sigma", m.loc_sigma},
         {"fp_min_size", m.fp_min_size},
         {"fp_max_size", m.fp_max_size},
         {"tp_score", {m.tp_score.a, m.tp_score.b}},
         {"fp_score", {m.fp_score.a, m.fp_score.b}},
         {"hard_tp_score", {m.hard_tp_score.a, m.hard_tp_score.b}},
         {"hard_class", nullptr}};
  if (m.hard_class) j["hard_class"] = *m.hard_class;
  return j;
}

inline json improvement_to_json(const sim::ImprovementModel& m) {
  return json{{"recall_gain", m.recall_gain},
              {"recall_ceiling", m.recall_ceiling},
              {"small_gain", m.small_gain},
              {"fp_decay", m.fp_decay},
              {"sigma_decay", m.sigma_decay},
              {"score_gain", m.score_gain},
              {"refine_recall_bonus", m.refine_recall_bonus},
              {"refine_fp_decay", m.refine_fp_decay},
              {"refine_score_bonus", m.refine_score_bonus}};
}

/// Settings that determine pipeline outputs (paths excluded).
inline json config_to_json(const PipelineConfig& c) {
  json views = json::array();
  for (ViewKind k : c.views) views.push_back(std::string(view_tag(k)));
  json j{{"histogram", {{"lo", c.histogram.lo}, {"hi", c.histogram.hi}, {"bins", c.histogram.n_bins}}},
         {"mode", std::string(mode_name(c.mode))},
         {"nms", {{"iou", c.nms.iou_threshold}, {"class_agnostic", c.nms.class_agnostic}}},
         {"views", views},
         {"scale_factor", c.scale_factor},
         {"weights", c.weighted},
         {"tau_high", c.tau_high},
         {"eval_iou", c.eval_iou},
         {"seed", nullptr}};
  if (c.seed) j["seed"] = *c.seed;
  return j;
}

}  // namespace astod
