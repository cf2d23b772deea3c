// astod: command-line front end for the pseudo-labeling pipeline stages.

#include <cmath>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "astod/astod.hpp"

namespace {

using astod::ConfigError;
using astod::PipelineConfig;
namespace fs = std::filesystem;

// Options shared by every subcommand; each overrides the config document.
struct CommonOptions {
  std::string config;
  std::string mode;
  std::optional<int> bins;
  std::string range;
  std::optional<double> nms_iou;
  std::string views;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  bool no_weights = false;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--config", o.config, "Pipeline configuration document");
  app->add_option("--mode", o.mode, "Threshold mode: uniform or class-wise");
  app->add_option("--bins", o.bins, "Histogram bin count");
  app->add_option("--range", o.range, "Histogram score range lo:hi");
  app->add_option("--nms-iou", o.nms_iou, "NMS IoU threshold");
  app->add_option("--views", o.views, "Comma-separated views (identity,hflip,scale,hflip_scale)");
  app->add_option("--seed", o.seed, "Random seed");
  app->add_option("--workers", o.workers, "Worker threads");
  app->add_flag("--no-weights", o.no_weights, "Set every alpha weight to 1");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string("invalid number '") + s + "' in " + what);
  }
}

// "lo:hi:step" (inclusive) or a comma-separated list.
std::vector<double> parse_sweep(const std::string& s) {
  std::vector<double> out;
  const auto parts = split(s, ':');
  if (parts.size() == 3) {
    const double lo = parse_double(parts[0], "--sweep");
    const double hi = parse_double(parts[1], "--sweep");
    const double step = parse_double(parts[2], "--sweep");
    if (!(step > 0.0) || hi < lo) throw ConfigError("--sweep expects lo:hi:step with step > 0");
    for (int i = 0;; ++i) {
      const double v = std::round((lo + i * step) * 1e10) / 1e10;
      if (v > hi + 1e-9) break;
      out.push_back(v);
    }
    return out;
  }
  for (const auto& p : split(s, ',')) out.push_back(parse_double(p, "--sweep"));
  if (out.empty()) throw ConfigError("--sweep expects lo:hi:step or a comma-separated list");
  return out;
}

PipelineConfig resolve_config(const CommonOptions& o) {
  PipelineConfig cfg = o.config.empty() ? PipelineConfig{} : astod::load_config(o.config);
  if (!o.mode.empty()) cfg.mode = astod::parse_mode(o.mode);
  if (o.bins) cfg.histogram.n_bins = *o.bins;
  if (!o.range.empty()) {
    const auto parts = split(o.range, ':');
    if (parts.size() != 2) throw ConfigError("--range expects lo:hi");
    cfg.histogram.lo = parse_double(parts[0], "--range");
    cfg.histogram.hi = parse_double(parts[1], "--range");
  }
  if (o.nms_iou) cfg.nms.iou_threshold = *o.nms_iou;
  if (!o.views.empty()) cfg.views = astod::parse_view_list(split(o.views, ','));
  if (o.seed) cfg.seed = *o.seed;
  if (o.workers) cfg.workers = *o.workers;
  if (o.no_weights) cfg.weighted = false;
  cfg.validate();
  return cfg;
}

void override_path(fs::path& target, const std::string& value) {
  if (!value.empty()) target = value;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view pseudo-labeling with adaptive ground thresholds"};
  app.require_subcommand(1);
  CommonOptions common;

  std::string detections, dataset, candidates, thresholds, labeled, input, predictions, ground_truth;
  std::string out, out_pseudo, out_merged, out_dir, sweep, export_dir;
  std::optional<double> tau_high;
  std::optional<double> eval_iou;
  std::optional<int> iterations;

  auto* aggregate = app.add_subcommand("aggregate", "Merge multi-view detections into candidate labels");
  add_common(aggregate, common);
  aggregate->add_option("--detections", detections, "Detection file (view-frame boxes)");
  aggregate->add_option("--dataset", dataset, "Unlabeled pool dataset");
  aggregate->add_option("--out", out, "Candidate dataset to write")->required();

  auto* threshold = app.add_subcommand("threshold", "Compute ground thresholds from candidate scores");
  add_common(threshold, common);
  threshold->add_option("--candidates", candidates, "Candidate dataset")->required();
  threshold->add_option("--out", out, "Threshold report to write")->required();

  auto* filter = app.add_subcommand("filter", "Select pseudo-labels and merge with the labeled set");
  add_common(filter, common);
  filter->add_option("--candidates", candidates, "Candidate dataset")->required();
  filter->add_option("--thresholds", thresholds, "Threshold report")->required();
  filter->add_option("--labeled", labeled, "Labeled dataset");
  filter->add_option("--out-pseudo", out_pseudo, "Pseudo-labeled dataset to write");
  filter->add_option("--out-merged", out_merged, "Merged training dataset to write");

  auto* weights = app.add_subcommand("weights", "Recompute alpha loss weights of a dataset");
  add_common(weights, common);
  weights->add_option("--input", input, "Dataset with scored annotations")->required();
  weights->add_option("--thresholds", thresholds, "Threshold report")->required();
  weights->add_option("--tau-high", tau_high, "Upper threshold of the two-sided weighting (default 1)");
  weights->add_option("--out", out, "Dataset to write")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate predictions against ground truth");
  add_common(eval, common);
  eval->add_option("--predictions", predictions, "Scored dataset or detection file")->required();
  eval->add_option("--ground-truth", ground_truth, "Ground-truth dataset")->required();
  eval->add_option("--iou", eval_iou, "IoU threshold for precision/recall/F1");
  eval->add_option("--out", out, "Metrics report to write (stdout when omitted)");

  auto* simulate = app.add_subcommand("simulate", "Run the iterative loop on synthetic data");
  add_common(simulate, common);
  simulate->add_option("--out-dir", out_dir, "Directory for simulation.json and simulation.csv");
  simulate->add_option("--iterations", iterations, "Teacher/student iterations");
  simulate->add_option("--sweep", sweep, "Fixed thresholds to compare, lo:hi:step or a,b,c");
  simulate->add_option("--export-corpus", export_dir, "Also write a synthetic corpus for `pipeline`");

  auto* pipeline = app.add_subcommand("pipeline", "Run aggregate, threshold, filter and eval");
  add_common(pipeline, common);
  pipeline->add_option("--detections", detections, "Detection file");
  pipeline->add_option("--dataset", dataset, "Unlabeled pool dataset");
  pipeline->add_option("--labeled", labeled, "Labeled dataset");
  pipeline->add_option("--ground-truth", ground_truth, "Ground truth of the pool (optional)");
  pipeline->add_option("--out-dir", out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(astod::ExitCode::kConfig);
  }

  try {
    PipelineConfig cfg = resolve_config(common);
    if (*aggregate) {
      override_path(cfg.paths.detections, detections);
      override_path(cfg.paths.dataset, dataset);
      const auto ds = astod::cmd_aggregate(cfg.paths.detections, cfg.paths.dataset, cfg, out);
      std::cerr << "candidates: " << ds.images.size() << " images, " << ds.annotations.size() << " detections\n";
    } else if (*threshold) {
      const auto ts = astod::cmd_threshold(candidates, cfg, out);
      if (ts.uniform) std::cerr << "uniform tau: " << astod::format_fixed(ts.uniform->tau) << '\n';
      for (const auto& [c, t] : ts.per_class) {
        std::cerr << "class " << c << " tau: " << astod::format_fixed(t.tau) << '\n';
      }
    } else if (*filter) {
      override_path(cfg.paths.labeled, labeled);
      const auto r = astod::cmd_filter(candidates, thresholds, cfg.paths.labeled, cfg, out_pseudo, out_merged);
      std::cerr << "pseudo-labeled images: " << r.counts.n_pseudo << ", labels: " << r.n_pseudo_labels
                << ", merged images: " << r.merged.images.size() << '\n';
    } else if (*weights) {
      if (tau_high) cfg.tau_high = *tau_high;
      cfg.validate();
      astod::cmd_weights(input, thresholds, cfg, out);
    } else if (*eval) {
      if (eval_iou) cfg.eval_iou = *eval_iou;
      cfg.validate();
      const auto report = astod::cmd_eval(predictions, ground_truth, cfg, out);
      if (out.empty()) std::cout << astod::canonical_dump(report);
    } else if (*simulate) {
      if (iterations) cfg.simulator.iterations = *iterations;
      if (!sweep.empty()) cfg.simulator.sweep = parse_sweep(sweep);
      const auto res = astod::cmd_simulate(cfg, out_dir);
      if (out_dir.empty()) std::cout << res.csv;
      if (!export_dir.empty()) astod::export_corpus(cfg, export_dir);
    } else if (*pipeline) {
      override_path(cfg.paths.detections, detections);
      override_path(cfg.paths.dataset, dataset);
      override_path(cfg.paths.labeled, labeled);
      override_path(cfg.paths.ground_truth, ground_truth);
      override_path(cfg.paths.output_dir, out_dir);
      const auto summary = astod::cmd_pipeline(cfg);
      std::cerr << "pseudo-labeled images: " << summary["counts"]["n_pseudo"].get<std::size_t>() << '\n';
    }
  } catch (const astod::Error& e) {
    std::cerr << "astod: error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "astod: error: " << e.what() << '\n';
    return static_cast<int>(astod::ExitCode::kIo);
  }
  return 0;
}
