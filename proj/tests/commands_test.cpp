#include <gtest/gtest.h>

#include <filesystem>

#include "astod/commands.hpp"
#include "astod/error.hpp"

namespace astod {
namespace {

namespace fs = std::filesystem;

const fs::path kData = ASTOD_TEST_DATA;
const fs::path kCorpus = kData / "corpus";
const char* const kArtifacts[] = {"candidates.json", "thresholds.json", "pseudo.json",
                                  "merged.json",     "metrics.json",    "summary.json"};

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("astod_cmd_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

PipelineConfig corpus_config(const fs::path& out) {
  PipelineConfig cfg = load_config(kCorpus / "config.json");
  cfg.paths.output_dir = out;
  return cfg;
}

void write_dataset(const fs::path& p, const json& doc) { save_json(p, doc); }

TEST(Pipeline, StagesComposeToThePipeline) {
  const fs::path staged = scratch_dir("staged");
  const fs::path oneshot = scratch_dir("oneshot");
  const PipelineConfig cfg = corpus_config(oneshot);
  cmd_pipeline(cfg);

  cmd_aggregate(cfg.paths.detections, cfg.paths.dataset, cfg, staged / "candidates.json");
  cmd_threshold(staged / "candidates.json", cfg, staged / "thresholds.json");
  cmd_filter(staged / "candidates.json", staged / "thresholds.json", cfg.paths.labeled, cfg, staged / "pseudo.json",
             staged / "merged.json");
  cmd_eval(staged / "pseudo.json", cfg.paths.ground_truth, cfg, staged / "metrics.json");
  for (const char* f : kArtifacts) {
    if (std::string(f) == "summary.json") continue;
    EXPECT_EQ(read_text(staged / f), read_text(oneshot / f)) << f;
  }
}

TEST(Pipeline, MatchesGoldenFiles) {
  const fs::path out = scratch_dir("golden");
  cmd_pipeline(corpus_config(out));
  for (const char* f : kArtifacts) EXPECT_EQ(read_text(out / f), read_text(kData / "golden" / f)) << f;
}

TEST(Pipeline, RerunAndWorkerCountGiveSameBytes) {
  const fs::path ref = scratch_dir("ref");
  cmd_pipeline(corpus_config(ref));
  for (int workers : {1, 4, 16}) {
    const fs::path out = scratch_dir("w" + std::to_string(workers));
    PipelineConfig cfg = corpus_config(out);
    cfg.workers = workers;
    cmd_pipeline(cfg);
    for (const char* f : kArtifacts) EXPECT_EQ(read_text(out / f), read_text(ref / f)) << f << " workers " << workers;
  }
}

TEST(Pipeline, NoWeightsSetsEveryAlphaToOne) {
  const fs::path out = scratch_dir("noweights");
  PipelineConfig cfg = corpus_config(out);
  cfg.weighted = false;
  cmd_pipeline(cfg);
  const Dataset merged = load_dataset(out / "merged.json");
  ASSERT_FALSE(merged.annotations.empty());
  for (const Annotation& a : merged.annotations) EXPECT_EQ(a.alpha, 1.0);

  const Dataset weighted = load_dataset(kData / "golden" / "pseudo.json");
  EXPECT_TRUE(std::any_of(weighted.annotations.begin(), weighted.annotations.end(),
                          [](const Annotation& a) { return *a.alpha < 1.0; }));
}

TEST(Pipeline, MissingInputsAreIoErrors) {
  PipelineConfig cfg = corpus_config(scratch_dir("missing"));
  cfg.paths.detections = kCorpus / "no_such_file.json";
  try {
    cmd_pipeline(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ExitCode::kIo);
  }
}

TEST(Aggregate, SingleImageFixture) {
  const fs::path dir = scratch_dir("single");
  write_dataset(dir / "pool.json", json::parse(R"({"images":[{"id":1,"width":100,"height":100,"file_name":"a.jpg"}],
    "categories":[{"id":1,"name":"a"}],"annotations":[]})"));
  save_json(dir / "dets.json", json::parse(R"([
    {"image_id":1,"category_id":1,"bbox":[0,0,10,10],"score":0.8,"view":"identity"},
    {"image_id":1,"category_id":1,"bbox":[0,0,10,10],"score":0.9,"view":"identity"}])"));
  const Dataset out = cmd_aggregate(dir / "dets.json", dir / "pool.json", PipelineConfig{}, dir / "cand.json");
  ASSERT_EQ(out.annotations.size(), 1u);
  EXPECT_EQ(out.annotations[0].score, 0.9);
  EXPECT_EQ(load_dataset(dir / "cand.json"), out);
}

TEST(Aggregate, FourViewFixture) {
  const fs::path dir = scratch_dir("fourview");
  write_dataset(dir / "pool.json", json::parse(R"({"images":[{"id":1,"width":100,"height":100}],
    "categories":[{"id":1,"name":"a"}],"annotations":[]})"));
  save_json(dir / "dets.json", json::parse(R"([
    {"image_id":1,"category_id":1,"bbox":[10,10,20,20],"score":0.6,"view":"identity"},
    {"image_id":1,"category_id":1,"bbox":[70,10,20,20],"score":0.7,"view":"hflip"},
    {"image_id":1,"category_id":1,"bbox":[20,20,40,40],"score":0.8,"view":"scale"},
    {"image_id":1,"category_id":1,"bbox":[140,20,40,40],"score":0.9,"view":"hflip_scale"}])"));
  const Dataset out = cmd_aggregate(dir / "dets.json", dir / "pool.json", PipelineConfig{}, dir / "cand.json");
  ASSERT_EQ(out.annotations.size(), 1u);
  EXPECT_EQ(out.annotations[0].score, 0.9);
  EXPECT_EQ(out.annotations[0].box, (Box{10, 10, 30, 30}));

  PipelineConfig identity_only;
  identity_only.views = {ViewKind::kIdentity};
  const Dataset one = cmd_aggregate(dir / "dets.json", dir / "pool.json", identity_only, dir / "cand1.json");
  ASSERT_EQ(one.annotations.size(), 1u);
  EXPECT_EQ(one.annotations[0].score, 0.6);
}

// Candidate dataset with the given scores on one image, all of category 1.
json scored_candidates(const std::vector<double>& scores) {
  json anns = json::array();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    anns.push_back(json{{"id", i + 1}, {"image_id", 1}, {"category_id", 1},
                        {"bbox", {static_cast<double>(i), 0, 1, 1}}, {"score", scores[i]}});
  }
  return json{{"images", json::array({json{{"id", 1}, {"width", 1000}, {"height", 10}}})},
              {"categories", json::array({json{{"id", 1}, {"name", "a"}}})},
              {"annotations", anns}};
}

TEST(Threshold, UShapedAndMonotoneFixtures) {
  const fs::path dir = scratch_dir("threshold");
  PipelineConfig cfg;
  cfg.histogram = {0.5, 1.0, 5};

  // Counts per 0.1-wide bin: 5 2 1 3 6.
  std::vector<double> u;
  for (auto [s, n] : std::vector<std::pair<double, int>>{{0.55, 5}, {0.65, 2}, {0.75, 1}, {0.85, 3}, {0.95, 6}}) {
    u.insert(u.end(), static_cast<std::size_t>(n), s);
  }
  write_dataset(dir / "u.json", scored_candidates(u));
  const ThresholdSet tu = cmd_threshold(dir / "u.json", cfg, dir / "tu.json");
  EXPECT_DOUBLE_EQ(*tu.tau_for(1), 0.7);

  // Counts 6 4 3 2 1.
  std::vector<double> m;
  for (auto [s, n] : std::vector<std::pair<double, int>>{{0.55, 6}, {0.65, 4}, {0.75, 3}, {0.85, 2}, {0.95, 1}}) {
    m.insert(m.end(), static_cast<std::size_t>(n), s);
  }
  write_dataset(dir / "m.json", scored_candidates(m));
  const ThresholdSet tm = cmd_threshold(dir / "m.json", cfg, dir / "tm.json");
  EXPECT_DOUBLE_EQ(*tm.tau_for(1), 0.9);

  // The report always carries both the uniform and the per-class values.
  const json report = load_json(dir / "tm.json");
  EXPECT_EQ(report["mode"], "class-wise");
  EXPECT_EQ(report["classes"].size(), 1u);
  EXPECT_FALSE(report["uniform"].is_null());
  cfg.mode = ThresholdMode::kUniform;
  cmd_threshold(dir / "m.json", cfg, dir / "tm_uniform.json");
  EXPECT_EQ(load_json(dir / "tm_uniform.json")["mode"], "uniform");
}

TEST(Filter, OverlappingLabeledSetIsRejected) {
  const fs::path out = scratch_dir("overlap");
  const PipelineConfig cfg = corpus_config(out);
  cmd_aggregate(cfg.paths.detections, cfg.paths.dataset, cfg, out / "c.json");
  cmd_threshold(out / "c.json", cfg, out / "t.json");
  try {
    cmd_filter(out / "c.json", out / "t.json", cfg.paths.dataset, cfg, out / "p.json", out / "m.json");
    FAIL();
  } catch (const DuplicateImageId& e) {
    EXPECT_EQ(e.code(), ExitCode::kIntegrity);
  }
}

TEST(Filter, PseudoAnnotationIdsFollowTheLabeledOnes) {
  const Dataset merged = load_dataset(kData / "golden" / "merged.json");
  std::set<std::int64_t> ids;
  for (const Annotation& a : merged.annotations) EXPECT_TRUE(ids.insert(a.id).second);
  const Dataset labeled = load_dataset(kCorpus / "labeled.json");
  const Dataset pseudo = load_dataset(kData / "golden" / "pseudo.json");
  std::int64_t max_labeled = 0;
  for (const Annotation& a : labeled.annotations) max_labeled = std::max(max_labeled, a.id);
  for (const Annotation& a : pseudo.annotations) EXPECT_GT(a.id, max_labeled);
}

TEST(Weights, TwoSidedWeighting) {
  const fs::path dir = scratch_dir("weights");
  write_dataset(dir / "c.json", scored_candidates({0.6, 0.8, 0.95}));
  PipelineConfig cfg;
  cfg.histogram = {0.5, 1.0, 5};
  cfg.mode = ThresholdMode::kUniform;
  // One score per bin 1, 3 and 4: the leftmost empty bin is bin 0.
  cmd_threshold(dir / "c.json", cfg, dir / "t.json");
  cfg.tau_high = 0.9;
  const Dataset out = cmd_weights(dir / "c.json", dir / "t.json", cfg, dir / "w.json");
  ASSERT_EQ(out.annotations.size(), 3u);
  EXPECT_NEAR(*out.annotations[0].alpha, 0.25, 1e-12);
  EXPECT_NEAR(*out.annotations[1].alpha, 0.75, 1e-12);
  EXPECT_EQ(*out.annotations[2].alpha, 1.0);
  cfg.tau_high = 0.5;
  EXPECT_THROW(cmd_weights(dir / "c.json", dir / "t.json", cfg, dir / "w.json"), InvalidThresholdPair);
}

TEST(Eval, GroundTruthAgainstItself) {
  const fs::path dir = scratch_dir("eval");
  const json report = cmd_eval(kCorpus / "ground_truth.json", kCorpus / "ground_truth.json", PipelineConfig{}, {});
  EXPECT_EQ(report["f1"].get<double>(), 1.0);
  EXPECT_EQ(report["ap"]["map"].get<double>(), 1.0);
  // The raw detection file is accepted too and mapped back from its views.
  const json raw = cmd_eval(kCorpus / "detections.json", kCorpus / "ground_truth.json", PipelineConfig{}, dir / "m.json");
  EXPECT_GT(raw["recall"].get<double>(), 0.8);
  EXPECT_TRUE(fs::exists(dir / "m.json"));
}

TEST(Simulate, NeedsSeedAndIsWorkerInvariant) {
  PipelineConfig cfg;
  cfg.simulator.labeled_images = 5;
  cfg.simulator.unlabeled_images = 60;
  cfg.simulator.iterations = 2;
  cfg.simulator.sweep = {0.6, 0.8};
  EXPECT_THROW(cmd_simulate(cfg, {}), ConfigError);
  cfg.seed = 5;
  const auto a = cmd_simulate(cfg, {});
  cfg.workers = 4;
  const auto b = cmd_simulate(cfg, {});
  EXPECT_EQ(canonical_dump(a.report), canonical_dump(b.report));
  EXPECT_EQ(a.csv, b.csv);
  // Header plus three rows per iteration for each of the three runs.
  EXPECT_EQ(std::count(a.csv.begin(), a.csv.end(), '\n'), 1 + 3 * 2 * 3);
}

}  // namespace
}  // namespace astod
