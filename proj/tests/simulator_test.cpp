#include <gtest/gtest.h>

#include <cmath>

#include "astod/error.hpp"
#include "astod/io.hpp"
#include "astod/reports.hpp"
#include "astod/simulator.hpp"
#include "astod/stages.hpp"

namespace astod {
namespace {

const std::vector<ViewSpec> kFourViews{ViewSpec::identity(), ViewSpec::hflip(), ViewSpec::scale(),
                                       ViewSpec::hflip_scale()};

sim::DetectorModel noiseless() {
  sim::DetectorModel m;
  m.recall = {1.0};
  m.small_recall_factor = 1.0;
  m.fp_rate = 0.0;
  m.loc_sigma = 0.0;
  m.tp_score = {1e6, 1.0};
  return m;
}

TEST(Scenes, ZeroObjectsGiveEmptyImage) {
  sim::SceneConfig cfg;
  cfg.min_objects = cfg.max_objects = 0;
  const Dataset ds = sim::generate_scenes(cfg, 1, 4);
  ASSERT_EQ(ds.images.size(), 1u);
  EXPECT_TRUE(ds.annotations.empty());
  EXPECT_EQ(ds.categories.size(), 3u);
}

TEST(Scenes, DeterministicAndWorkerInvariant) {
  const sim::SceneConfig cfg;
  const std::string a = canonical_dump(dataset_to_json(sim::generate_scenes(cfg, 50, 9)));
  EXPECT_EQ(canonical_dump(dataset_to_json(sim::generate_scenes(cfg, 50, 9))), a);
  EXPECT_EQ(canonical_dump(dataset_to_json(sim::generate_scenes(cfg, 50, 9, 1, 4))), a);
  EXPECT_NE(canonical_dump(dataset_to_json(sim::generate_scenes(cfg, 50, 10))), a);
}

TEST(Scenes, BoxesInsideImageAndSeparated) {
  const sim::SceneConfig cfg;
  const Dataset ds = sim::generate_scenes(cfg, 200, 1);
  for (const auto& [_, v] : ds.detections_by_image()) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      EXPECT_GE(v[i].box.x1, 0.0);
      EXPECT_LE(v[i].box.x2, 640.0);
      EXPECT_GE(v[i].box.y1, 0.0);
      EXPECT_LE(v[i].box.y2, 480.0);
      for (std::size_t j = i + 1; j < v.size(); ++j) EXPECT_LE(iou(v[i].box, v[j].box), cfg.max_overlap_iou);
    }
  }
}

TEST(Scenes, ClassFrequenciesFollowWeights) {
  sim::SceneConfig cfg;
  cfg.min_objects = cfg.max_objects = 5;
  const Dataset ds = sim::generate_scenes(cfg, 2000, 21);
  std::map<CategoryId, double> counts;
  for (const Annotation& a : ds.annotations) counts[a.category_id] += 1;
  const double n = static_cast<double>(ds.annotations.size());
  ASSERT_GE(n, 10000.0 * 0.99);
  double chi2 = 0.0;
  for (std::size_t i = 0; i < cfg.class_weights.size(); ++i) {
    const double p = cfg.class_weights[i];
    const double expected = n * p;
    const double observed = counts[static_cast<CategoryId>(i + 1)];
    EXPECT_LE(std::abs(observed - expected), 3.0 * std::sqrt(n * p * (1.0 - p)));
    chi2 += (observed - expected) * (observed - expected) / expected;
  }
  // 99.9th percentile of chi-square with 2 degrees of freedom.
  EXPECT_LT(chi2, 13.816);
}

TEST(Detector, NoiselessViewsInvertOntoGroundTruth) {
  const Dataset gt = sim::generate_scenes(sim::SceneConfig{}, 30, 2);
  const ViewPool pool = sim::simulate_detector(gt, noiseless(), kFourViews, 3);
  const auto truth = gt.detections_by_image();
  for (const auto& [image, views] : pool) {
    const ImageDims dims = gt.find_image(image)->dims();
    for (const ViewPredictions& vp : views) {
      const auto& want = truth.at(image);
      ASSERT_EQ(vp.detections.size(), want.size());
      for (std::size_t i = 0; i < want.size(); ++i) {
        const Box b = invert_view(vp.detections[i].box, vp.view, dims);
        EXPECT_NEAR(b.x1, want[i].box.x1, 1e-9);
        EXPECT_NEAR(b.y1, want[i].box.y1, 1e-9);
        EXPECT_NEAR(b.x2, want[i].box.x2, 1e-9);
        EXPECT_NEAR(b.y2, want[i].box.y2, 1e-9);
        EXPECT_EQ(vp.detections[i].class_id, want[i].class_id);
      }
    }
  }
}

TEST(Detector, ZeroRecallAndNoFalsePositivesIsEmpty) {
  const Dataset gt = sim::generate_scenes(sim::SceneConfig{}, 30, 2);
  sim::DetectorModel m;
  m.recall = {0.0};
  m.fp_rate = 0.0;
  for (const auto& [_, views] : sim::simulate_detector(gt, m, kFourViews, 3)) {
    for (const ViewPredictions& vp : views) EXPECT_TRUE(vp.detections.empty());
  }
}

TEST(Detector, WorkerCountDoesNotMatter) {
  const Dataset gt = sim::generate_scenes(sim::SceneConfig{}, 40, 2);
  const auto a = detection_records_to_json(sim::to_detection_records(sim::simulate_detector(gt, {}, kFourViews, 8, 1)));
  const auto b = detection_records_to_json(sim::to_detection_records(sim::simulate_detector(gt, {}, kFourViews, 8, 7)));
  EXPECT_EQ(canonical_dump(a), canonical_dump(b));
}

TEST(Detector, DefaultScoresFormAValley) {
  constexpr int kSeeds = 100;
  int interior = 0, u_shaped = 0;
  const HistogramConfig cfg;
  for (int seed = 0; seed < kSeeds; ++seed) {
    // About 10^4 objects at 4.5 objects per image.
    const Dataset gt = sim::generate_scenes(sim::SceneConfig{}, 2223, 1000 + seed);
    const ViewPool pool = sim::simulate_detector(gt, {}, kFourViews, 5000 + seed);
    const auto cand = aggregate_pool(pool, gt, NmsOptions{});
    ScoreHistogram h = empty_histogram(cfg);
    for (const Detection& d : flatten(cand)) add_score(h, d.score);
    const int k = ground_bin(h);
    interior += k > 0 && k < cfg.n_bins - 1;
    const auto mid = *std::min_element(h.counts.begin() + 1, h.counts.end() - 1);
    u_shaped += h.counts.front() >= 2 * mid && h.counts.back() >= 2 * mid;
  }
  EXPECT_GE(interior, 95);
  EXPECT_GE(u_shaped, 95);
}

TEST(Improvement, HigherQualityNeverGivesWorseDetector) {
  const sim::ImprovementModel imp;
  const sim::DetectorModel m0;
  for (int i = 0; i < 100; ++i) {
    const auto lo = imp.train(m0, i / 100.0);
    const auto hi = imp.train(m0, (i + 1) / 100.0);
    EXPECT_GE(hi.recall[0], lo.recall[0]);
    EXPECT_GE(hi.small_recall_factor, lo.small_recall_factor);
    EXPECT_LE(hi.fp_rate, lo.fp_rate);
    EXPECT_LE(hi.loc_sigma, lo.loc_sigma);
    EXPECT_GE(hi.tp_score.a, lo.tp_score.a);
    const auto r = imp.refine(hi);
    EXPECT_GE(r.recall[0], hi.recall[0]);
    EXPECT_LE(r.fp_rate, hi.fp_rate);
  }
  EXPECT_EQ(sim::ImprovementModel::identity().train(m0, 0.9), m0);
  EXPECT_EQ(sim::ImprovementModel::identity().refine(m0), m0);
}

sim::LoopConfig quick_loop() {
  sim::LoopConfig lc;
  lc.compute_map = false;
  return lc;
}

TEST(Loop, NoiselessPassLabelsEverythingCorrectly) {
  const Dataset gt = sim::generate_scenes(sim::SceneConfig{}, 100, 12);
  const auto pass = sim::run_labeling_pass(gt, noiseless(), quick_loop(), 1);
  EXPECT_EQ(pass.metrics.precision, 1.0);
  EXPECT_EQ(pass.metrics.recall, 1.0);
  EXPECT_EQ(pass.metrics.n_pseudo_labels, gt.annotations.size());
}

TEST(Loop, IdentityImprovementRepeatsTheTeacher) {
  const Dataset labeled = sim::generate_scenes(sim::SceneConfig{}, 20, 1);
  const Dataset pool = sim::generate_scenes(sim::SceneConfig{}, 200, 1, 21);
  const auto report = sim::run_iteration_loop(labeled, pool, {}, sim::ImprovementModel::identity(), 1, quick_loop(), 4);
  ASSERT_EQ(report.iterations.size(), 1u);
  const auto& it = report.iterations[0];
  EXPECT_EQ(canonical_dump(pass_to_json(it.student)), canonical_dump(pass_to_json(it.teacher)));
  EXPECT_EQ(canonical_dump(pass_to_json(it.refined)), canonical_dump(pass_to_json(it.student)));
  EXPECT_EQ(it.n_merged_images, 20 + it.teacher.n_pseudo_images);
}

TEST(Loop, DefaultModelImprovesEveryIteration) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Dataset labeled = sim::generate_scenes(sim::SceneConfig{}, 50, seed);
    const Dataset pool = sim::generate_scenes(sim::SceneConfig{}, 500, seed, 51);
    const auto report = sim::run_iteration_loop(labeled, pool, {}, {}, 3, quick_loop(), seed + 100);
    double prev = report.iterations[0].teacher.f1;
    for (const auto& it : report.iterations) {
      EXPECT_GE(it.student.f1, prev);
      EXPECT_GE(it.refined.f1, it.student.f1);
      prev = it.refined.f1;
    }
  }
}

TEST(Loop, ExtraViewsNeverLowerCandidateRecall) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Dataset gt = sim::generate_scenes(sim::SceneConfig{}, 300, seed);
    sim::LoopConfig one = quick_loop();
    one.views = {ViewSpec::identity()};
    const auto single = sim::run_labeling_pass(gt, {}, one, seed);
    const auto multi = sim::run_labeling_pass(gt, {}, quick_loop(), seed);
    EXPECT_LE(single.metrics.candidate_recall, multi.metrics.candidate_recall);
  }
}

TEST(Loop, RejectsBadArguments) {
  const Dataset gt = sim::generate_scenes(sim::SceneConfig{}, 5, 1);
  EXPECT_THROW(sim::run_iteration_loop(gt, gt, {}, {}, 0, quick_loop(), 1), ConfigError);
  sim::DetectorModel bad;
  bad.recall = {1.5};
  EXPECT_THROW(sim::simulate_detector(gt, bad, kFourViews, 1), ConfigError);
  EXPECT_THROW(sim::simulate_detector(gt, {}, std::vector<ViewSpec>{}, 1), ConfigError);
  EXPECT_THROW(sim::generate_scenes(sim::SceneConfig{}, 0, 1), ConfigError);
}

}  // namespace
}  // namespace astod
