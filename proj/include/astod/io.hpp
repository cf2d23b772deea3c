#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "astod/dataset.hpp"
#include "astod/error.hpp"
#include "astod/geometry.hpp"
#include "astod/json_io.hpp"
#include "astod/log.hpp"
#include "astod/nms.hpp"
#include "astod/thresholding.hpp"

namespace astod {

namespace detail {

inline const json& require(const json& obj, const char* key, const std::string& ctx) {
  if (!obj.is_object()) throw ParseError(ctx + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(ctx + ": missing field '" + key + "'");
  return *it;
}

inline double as_number(const json& j, const std::string& ctx) {
  if (!j.is_number()) throw ParseError(ctx + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ParseError(ctx + ": non-finite number");
  return v;
}

inline std::int64_t as_integer(const json& j, const std::string& ctx) {
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number_float()) {
    const double v = j.get<double>();
    if (std::isfinite(v) && v == std::floor(v)) return static_cast<std::int64_t>(v);
  }
  throw ParseError(ctx + ": expected an integer");
}

inline const json& require_array(const json& obj, const char* key, const std::string& ctx) {
  const json& a = require(obj, key, ctx);
  if (!a.is_array()) throw ParseError(ctx + ": field '" + key + "' must be an array");
  return a;
}

inline Box parse_xywh(const json& j, const std::string& ctx) {
  if (!j.is_array() || j.size() != 4) throw ParseError(ctx + ": bbox must be [x, y, w, h]");
  const double x = as_number(j[0], ctx + ".bbox[0]");
  const double y = as_number(j[1], ctx + ".bbox[1]");
  const double w = as_number(j[2], ctx + ".bbox[2]");
  const double h = as_number(j[3], ctx + ".bbox[3]");
  if (!(w > 0.0 && h > 0.0)) throw ParseError(ctx + ": bbox width and height must be positive");
  return Box::from_xywh(x, y, w, h);
}

inline double parse_unit(const json& j, const std::string& ctx, const char* what) {
  const double v = as_number(j, ctx);
  if (v < 0.0 || v > 1.0) {
    throw ParseError(ctx + ": " + what + " " + format_fixed(v) + " outside [0, 1]");
  }
  return v;
}

inline std::string record_ctx(const char* table, std::size_t index, const json& rec) {
  std::string ctx = std::string(table) + "[" + std::to_string(index) + "]";
  if (rec.is_object()) {
    if (auto it = rec.find("id"); it != rec.end() && it->is_number_integer()) {
      ctx += " (id " + std::to_string(it->get<std::int64_t>()) + ")";
    }
  }
  return ctx;
}

}  // namespace detail

/// Parses a COCO-style document. Unknown fields (area, iscrowd,
/// segmentation, ...) are ignored. Throws ParseError on schema violations and
/// IntegrityError on dangling or duplicate ids.
inline Dataset dataset_from_json(const json& doc, const std::string& origin = "dataset") {
  using namespace detail;
  if (!doc.is_object()) throw ParseError(origin + ": top level must be an object");
  Dataset ds;
  const json& images = require_array(doc, "images", origin);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const json& r = images[i];
    const std::string ctx = origin + ": " + record_ctx("images", i, r);
    ImageInfo im;
    im.id = as_integer(require(r, "id", ctx), ctx + ".id");
    im.width = as_integer(require(r, "width", ctx), ctx + ".width");
    im.height = as_integer(require(r, "height", ctx), ctx + ".height");
    if (auto it = r.find("file_name"); it != r.end() && it->is_string()) im.file_name = it->get<std::string>();
    ds.images.push_back(std::move(im));
  }
  if (auto it = doc.find("categories"); it != doc.end()) {
    if (!it->is_array()) throw ParseError(origin + ": field 'categories' must be an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const json& r = (*it)[i];
      const std::string ctx = origin + ": " + record_ctx("categories", i, r);
      Category c;
      c.id = as_integer(require(r, "id", ctx), ctx + ".id");
      if (auto n = r.find("name"); n != r.end() && n->is_string()) c.name = n->get<std::string>();
      ds.categories.push_back(std::move(c));
    }
  }
  if (auto it = doc.find("annotations"); it != doc.end()) {
    if (!it->is_array()) throw ParseError(origin + ": field 'annotations' must be an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const json& r = (*it)[i];
      const std::string ctx = origin + ": " + record_ctx("annotations", i, r);
      Annotation a;
      a.id = as_integer(require(r, "id", ctx), ctx + ".id");
      a.image_id = as_integer(require(r, "image_id", ctx), ctx + ".image_id");
      a.category_id = as_integer(require(r, "category_id", ctx), ctx + ".category_id");
      a.box = parse_xywh(require(r, "bbox", ctx), ctx);
      if (auto f = r.find("score"); f != r.end() && !f->is_null()) a.score = parse_unit(*f, ctx, "score");
      if (auto f = r.find("alpha"); f != r.end() && !f->is_null()) a.alpha = parse_unit(*f, ctx, "alpha");
      if (auto f = r.find("source"); f != r.end() && !f->is_null()) {
        if (!f->is_string()) throw ParseError(ctx + ": source must be a string");
        try {
          a.source = parse_source(f->get<std::string>());
        } catch (const ParseError& e) {
          throw ParseError(ctx + ": " + e.what());
        }
      }
      ds.annotations.push_back(std::move(a));
    }
  }
  ds.validate();
  ds.canonicalize();
  return ds;
}

struct SaveReport {
  std::size_t clipped = 0;
  std::size_t dropped = 0;  // annotations with no area left inside the image
};

/// Builds the canonical document for `ds`. Boxes are clipped to their image
/// and the area recomputed; boxes left without area are dropped. Both events
/// are logged as warnings.
inline json dataset_to_json(const Dataset& ds, SaveReport* report = nullptr) {
  ds.validate();
  Dataset sorted = ds;
  sorted.canonicalize();
  const auto index = sorted.image_index();
  SaveReport rep;

  json images = json::array();
  for (const ImageInfo& im : sorted.images) {
    images.push_back(json{{"id", im.id}, {"width", im.width}, {"height", im.height},
                          {"file_name", im.file_name}});
  }
  json cats = json::array();
  for (const Category& c : sorted.categories) cats.push_back(json{{"id", c.id}, {"name", c.name}});

  json anns = json::array();
  for (const Annotation& a : sorted.annotations) {
    const ImageDims dims = index.at(a.image_id)->dims();
    const Box clipped = clip(a.box, dims);
    auto xywh = clipped.to_xywh();
    // Values are rounded as they will be rendered so that the area and the
    // emptiness test agree with what a reader sees.
    for (double& v : xywh) v = std::stod(format_fixed(v));
    if (!(xywh[2] > 0.0 && xywh[3] > 0.0)) {
      ++rep.dropped;
      log::warn("annotation " + std::to_string(a.id) + " lies outside image " +
                std::to_string(a.image_id) + "; dropped");
      continue;
    }
    constexpr double kClipTolerance = 1e-9;
    if (std::abs(clipped.x1 - a.box.x1) > kClipTolerance || std::abs(clipped.y1 - a.box.y1) > kClipTolerance ||
        std::abs(clipped.x2 - a.box.x2) > kClipTolerance || std::abs(clipped.y2 - a.box.y2) > kClipTolerance) {
      ++rep.clipped;
      log::warn("annotation " + std::to_string(a.id) + " clipped to image " +
                std::to_string(a.image_id) + " bounds");
    }
    json r{{"id", a.id},
           {"image_id", a.image_id},
           {"category_id", a.category_id},
           {"bbox", json::array({xywh[0], xywh[1], xywh[2], xywh[3]})},
           {"area", xywh[2] * xywh[3]},
           {"iscrowd", 0}};
    if (a.score) r["score"] = *a.score;
    if (a.alpha) r["alpha"] = *a.alpha;
    if (a.source) r["source"] = std::string(source_tag(*a.source));
    anns.push_back(std::move(r));
  }
  if (report) *report = rep;
  return json{{"images", std::move(images)}, {"annotations", std::move(anns)}, {"categories", std::move(cats)}};
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  return dataset_from_json(load_json(path), path.string());
}

inline SaveReport save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  SaveReport rep;
  save_json(path, dataset_to_json(ds, &rep));
  return rep;
}

// ---------------------------------------------------------------------------
// Detection files

/// One record of a detector-exchange file: a prediction in the frame of the
/// view it was produced on.
struct DetectionRecord {
  ImageId image_id = 0;
  CategoryId category_id = 0;
  Box box;  // view frame
  double score = 0.0;
  ViewKind view = ViewKind::kIdentity;
};

using ViewPool = std::map<ImageId, std::vector<ViewPredictions>>;

inline std::vector<DetectionRecord> detection_records_from_json(const json& doc,
                                                                const std::string& origin = "detections") {
  using namespace detail;
  const json* arr = &doc;
  if (doc.is_object()) arr = &require_array(doc, "detections", origin);
  if (!arr->is_array()) throw ParseError(origin + ": expected an array of detections");
  std::vector<DetectionRecord> out;
  out.reserve(arr->size());
  for (std::size_t i = 0; i < arr->size(); ++i) {
    const json& r = (*arr)[i];
    const std::string ctx = origin + ": detections[" + std::to_string(i) + "]";
    DetectionRecord d;
    d.image_id = as_integer(require(r, "image_id", ctx), ctx + ".image_id");
    d.category_id = as_integer(require(r, "category_id", ctx), ctx + ".category_id");
    d.box = parse_xywh(require(r, "bbox", ctx), ctx);
    d.score = parse_unit(require(r, "score", ctx), ctx, "score");
    const json& v = require(r, "view", ctx);
    if (!v.is_string()) throw ParseError(ctx + ": view must be a string");
    try {
      d.view = parse_view_tag(v.get<std::string>());
    } catch (const UnknownView&) {
      throw UnknownView(v.get<std::string>(), ctx);
    }
    out.push_back(d);
  }
  return out;
}

inline json detection_records_to_json(const std::vector<DetectionRecord>& recs) {
  json arr = json::array();
  for (const DetectionRecord& d : recs) {
    const auto xywh = d.box.to_xywh();
    arr.push_back(json{{"image_id", d.image_id},
                       {"category_id", d.category_id},
                       {"bbox", json::array({xywh[0], xywh[1], xywh[2], xywh[3]})},
                       {"score", d.score},
                       {"view", std::string(view_tag(d.view))}});
  }
  return arr;
}

/// Groups records per image and view (views in identity, hflip, scale,
/// hflip_scale order). Images without any record are absent from the result,
/// which is how images without predictions leave the candidate pool.
inline ViewPool group_detections(const std::vector<DetectionRecord>& recs, const Dataset& dataset,
                                 double scale_factor = kDefaultScaleFactor) {
  const auto index = dataset.image_index();
  const auto cats = dataset.category_ids();
  std::map<ImageId, std::map<ViewKind, std::vector<Detection>>> grouped;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const DetectionRecord& r = recs[i];
    if (!index.contains(r.image_id)) {
      throw IntegrityError("detections[" + std::to_string(i) + "] references missing image id " +
                           std::to_string(r.image_id));
    }
    if (!cats.contains(r.category_id)) {
      throw IntegrityError("detections[" + std::to_string(i) + "] references missing category id " +
                           std::to_string(r.category_id));
    }
    grouped[r.image_id][r.view].push_back(Detection{r.category_id, r.box, r.score});
  }
  ViewPool pool;
  for (auto& [image, views] : grouped) {
    std::vector<ViewPredictions> vps;
    for (auto& [kind, dets] : views) vps.push_back(ViewPredictions{ViewSpec::of(kind, scale_factor), std::move(dets)});
    pool.emplace(image, std::move(vps));
  }
  return pool;
}

inline ViewPool load_detections(const std::filesystem::path& path, const Dataset& dataset,
                                double scale_factor = kDefaultScaleFactor) {
  return group_detections(detection_records_from_json(load_json(path), path.string()), dataset, scale_factor);
}

// ---------------------------------------------------------------------------
// Threshold reports

inline json histogram_to_json(const ScoreHistogram& h) {
  return json{{"counts", h.counts}, {"n_below", h.n_below}, {"n_above", h.n_above}};
}

inline json config_to_json(const HistogramConfig& c) {
  return json{{"lo", c.lo}, {"hi", c.hi}, {"bins", c.n_bins}};
}

inline json threshold_set_to_json(const ThresholdSet& ts) {
  json classes = json::array();
  for (const auto& [cls, t] : ts.per_class) {
    json r = histogram_to_json(t.histogram);
    r["category_id"] = cls;
    r["bin"] = t.bin;
    r["tau"] = t.tau;
    classes.push_back(std::move(r));
  }
  json empty = json::array();
  for (const auto& [cls, h] : ts.empty_classes) {
    json r = histogram_to_json(h);
    r["category_id"] = cls;
    empty.push_back(std::move(r));
  }
  json doc{{"mode", std::string(mode_name(ts.mode))},
           {"config", config_to_json(ts.config)},
           {"classes", std::move(classes)},
           {"empty_classes", std::move(empty)},
           {"uniform", nullptr}};
  if (ts.uniform) {
    json u = histogram_to_json(ts.uniform->histogram);
    u["bin"] = ts.uniform->bin;
    u["tau"] = ts.uniform->tau;
    doc["uniform"] = std::move(u);
  }
  return doc;
}

namespace detail {

inline ScoreHistogram histogram_from_json(const json& r, const HistogramConfig& cfg, const std::string& ctx) {
  ScoreHistogram h = empty_histogram(cfg);
  const json& counts = require_array(r, "counts", ctx);
  if (counts.size() != static_cast<std::size_t>(cfg.n_bins)) {
    throw ParseError(ctx + ": expected " + std::to_string(cfg.n_bins) + " counts");
  }
  for (std::size_t k = 0; k < counts.size(); ++k) h.counts[k] = as_integer(counts[k], ctx + ".counts");
  if (auto it = r.find("n_below"); it != r.end()) h.n_below = as_integer(*it, ctx + ".n_below");
  if (auto it = r.find("n_above"); it != r.end()) h.n_above = as_integer(*it, ctx + ".n_above");
  return h;
}

// Thresholds are reconstructed from the bin index so they are bit-identical
// to the in-memory values regardless of decimal rounding in the file.
inline ClassThreshold class_threshold_from_json(const json& r, const HistogramConfig& cfg, const std::string& ctx) {
  ClassThreshold t;
  t.bin = static_cast<int>(as_integer(require(r, "bin", ctx), ctx + ".bin"));
  if (t.bin < 0 || t.bin >= cfg.n_bins) throw ParseError(ctx + ": bin index out of range");
  t.tau = cfg.edge(t.bin);
  t.histogram = histogram_from_json(r, cfg, ctx);
  return t;
}

}  // namespace detail

inline ThresholdSet threshold_set_from_json(const json& doc, const std::string& origin = "thresholds") {
  using namespace detail;
  ThresholdSet ts;
  const json& mode = require(doc, "mode", origin);
  if (!mode.is_string()) throw ParseError(origin + ": mode must be a string");
  try {
    ts.mode = parse_mode(mode.get<std::string>());
  } catch (const ConfigError& e) {
    throw ParseError(origin + ": " + e.what());
  }
  const json& c = require(doc, "config", origin);
  ts.config.lo = as_number(require(c, "lo", origin + ".config"), origin + ".config.lo");
  ts.config.hi = as_number(require(c, "hi", origin + ".config"), origin + ".config.hi");
  ts.config.n_bins = static_cast<int>(as_integer(require(c, "bins", origin + ".config"), origin + ".config.bins"));
  ts.config.validate();

  const json& classes = require_array(doc, "classes", origin);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const std::string ctx = origin + ": classes[" + std::to_string(i) + "]";
    const CategoryId id = as_integer(require(classes[i], "category_id", ctx), ctx + ".category_id");
    ts.per_class.emplace(id, class_threshold_from_json(classes[i], ts.config, ctx));
  }
  if (auto it = doc.find("empty_classes"); it != doc.end() && it->is_array()) {
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string ctx = origin + ": empty_classes[" + std::to_string(i) + "]";
      const CategoryId id = as_integer(require((*it)[i], "category_id", ctx), ctx + ".category_id");
      ts.empty_classes.emplace(id, histogram_from_json((*it)[i], ts.config, ctx));
    }
  }
  if (auto it = doc.find("uniform"); it != doc.end() && !it->is_null()) {
    ts.uniform = class_threshold_from_json(*it, ts.config, origin + ": uniform");
  }
  if (ts.mode == ThresholdMode::kUniform && !ts.uniform) {
    throw ParseError(origin + ": uniform mode without a uniform threshold");
  }
  return ts;
}

inline ThresholdSet load_thresholds(const std::filesystem::path& path) {
  return threshold_set_from_json(load_json(path), path.string());
}

}  // namespace astod
