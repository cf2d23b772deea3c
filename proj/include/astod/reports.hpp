#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "astod/config.hpp"
#include "astod/eval.hpp"
#include "astod/json_io.hpp"
#include "astod/simulator.hpp"

namespace astod {

inline json counts_to_json(const MatchCounts& c) { return json{{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}}; }

/// Metrics report: P/R/F1 at one IoU plus AP per class and mAP over `ious`.
inline json metrics_to_json(const MatchCounts& counts, double iou_threshold, const ApResult& ap,
                            const std::vector<double>& ious) {
  const PrF1 m = pr_f1(counts);
  json per_class = json::array();
  for (const auto& [c, v] : ap.per_class) {
    json r{{"category_id", c}, {"ap", v}};
    const auto& per_iou = ap.per_class_iou.at(c);
    r["ap_per_iou"] = per_iou;
    per_class.push_back(std::move(r));
  }
  return json{{"iou", iou_threshold},
              {"counts", counts_to_json(counts)},
              {"precision", m.precision},
              {"recall", m.recall},
              {"f1", m.f1},
              {"ap", {{"iou_thresholds", ious},
                      {"per_class", std::move(per_class)},
                      {"map", ap.mean_ap},
                      {"classes_without_gt", ap.classes_without_gt}}}};
}

inline json pass_to_json(const sim::PassMetrics& p) {
  json taus = json::array();
  for (const auto& [c, t] : p.class_tau) taus.push_back(json{{"category_id", c}, {"tau", t}});
  json per_class = json::array();
  for (const auto& [c, n] : p.pseudo_per_class) per_class.push_back(json{{"category_id", c}, {"pseudo_labels", n}});
  json j{{"n_images", p.n_images},
         {"n_candidate_images", p.n_candidate_images},
         {"n_candidates", p.n_candidates},
         {"candidate_recall", p.candidate_recall},
         {"n_pseudo_images", p.n_pseudo_images},
         {"n_pseudo_labels", p.n_pseudo_labels},
         {"counts", counts_to_json(p.counts)},
         {"precision", p.precision},
         {"recall", p.recall},
         {"f1", p.f1},
         {"mean_alpha", p.mean_alpha},
         {"map", p.map},
         {"uniform_tau", nullptr},
         {"class_tau", std::move(taus)},
         {"empty_classes", p.empty_classes},
         {"pseudo_per_class", std::move(per_class)}};
  if (p.uniform_tau) j["uniform_tau"] = *p.uniform_tau;
  return j;
}

inline json loop_to_json(const sim::LoopReport& r) {
  json its = json::array();
  for (const sim::IterationReport& it : r.iterations) {
    its.push_back(json{{"iteration", it.iteration},
                       {"n_labeled", it.n_labeled},
                       {"n_merged_images", it.n_merged_images},
                       {"teacher", pass_to_json(it.teacher)},
                       {"student", pass_to_json(it.student)},
                       {"refined", pass_to_json(it.refined)},
                       {"student_model", detector_to_json(it.student_model)},
                       {"refined_model", detector_to_json(it.refined_model)}});
  }
  return its;
}

struct LabeledLoop {
  std::string label;  // "ground" or the fixed threshold
  sim::LoopReport report;
};

inline std::string loops_to_csv(const std::vector<LabeledLoop>& runs) {
  std::ostringstream out;
  out << "threshold,iteration,stage,uniform_tau,n_candidates,candidate_recall,n_pseudo_images,"
         "n_pseudo_labels,precision,recall,f1,mean_alpha,map\n";
  auto row = [&](const std::string& label, int it, const char* stage, const sim::PassMetrics& p) {
    out << label << ',' << it << ',' << stage << ',' << (p.uniform_tau ? format_fixed(*p.uniform_tau) : "") << ','
        << p.n_candidates << ',' << format_fixed(p.candidate_recall) << ',' << p.n_pseudo_images << ','
        << p.n_pseudo_labels << ',' << format_fixed(p.precision) << ',' << format_fixed(p.recall) << ','
        << format_fixed(p.f1) << ',' << format_fixed(p.mean_alpha) << ',' << format_fixed(p.map) << '\n';
  };
  for (const LabeledLoop& run : runs) {
    for (const sim::IterationReport& it : run.report.iterations) {
      row(run.label, it.iteration, "teacher", it.teacher);
      row(run.label, it.iteration, "student", it.student);
      row(run.label, it.iteration, "refined", it.refined);
    }
  }
  return out.str();
}

}  // namespace astod
