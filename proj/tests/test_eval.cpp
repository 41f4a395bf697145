#include "mdn/eval.hpp"

#include <gtest/gtest.h>

#include <vector>

#include "mdn/rng.hpp"
#include "oracles.hpp"

using namespace mdn;
using namespace mdn::eval;

TEST(Match, WithinRadiusIsTruePositive) {
  const std::vector<Vec2> dets = {{0.0, 0.0}};
  const std::vector<Vec2> gts = {{3.0, 4.0}};  // distance 5
  const MatchResult r = match(dets, gts, 6.0);
  EXPECT_EQ(r.pairs.size(), 1u);
  EXPECT_TRUE(r.unmatched_detections.empty());
  EXPECT_TRUE(r.unmatched_gts.empty());
}

TEST(Match, BeyondRadiusIsFpPlusFn) {
  const std::vector<Vec2> dets = {{0.0, 0.0}};
  const std::vector<Vec2> gts = {{7.0, 0.0}};
  const MatchResult r = match(dets, gts, 6.0);
  EXPECT_TRUE(r.pairs.empty());
  EXPECT_EQ(r.unmatched_detections.size(), 1u);
  EXPECT_EQ(r.unmatched_gts.size(), 1u);
}

TEST(Match, ExactRadiusCounts) {
  const std::vector<Vec2> dets = {{0.0, 0.0}};
  const std::vector<Vec2> gts = {{6.0, 0.0}};
  EXPECT_EQ(match(dets, gts, 6.0).pairs.size(), 1u);
}

TEST(Match, CrossingConfigurationReachesMaximumCardinality) {
  // Greedy alone would strand the second detection here: the middle
  // detection is closest to the only gt the left detection can reach.
  const std::vector<Vec2> dets = {{0.0, 6.0}, {0.0, -2.0}};
  const std::vector<Vec2> gts = {{0.0, 0.0}, {0.0, -8.0}};
  const MatchResult r = match(dets, gts, 6.0);
  const auto brute = oracles::brute_match(dets, gts, 6.0);
  EXPECT_EQ(brute.cardinality, 2);
  EXPECT_EQ(static_cast<int>(r.pairs.size()), brute.cardinality);
  for (const auto& p : r.pairs) EXPECT_LE(p.dist, 6.0);
}

TEST(Match, CardinalityMatchesBruteForceOnRandomInstances) {
  Rng rng(606);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Vec2> dets, gts;
    const int nd = static_cast<int>(rng.below(7));
    const int ng = static_cast<int>(rng.below(7));
    for (int i = 0; i < nd; ++i) dets.push_back({rng.uniform(0, 30), rng.uniform(0, 30)});
    for (int i = 0; i < ng; ++i) gts.push_back({rng.uniform(0, 30), rng.uniform(0, 30)});
    const MatchResult r = match(dets, gts, 6.0);
    const auto brute = oracles::brute_match(dets, gts, 6.0);
    ASSERT_EQ(static_cast<int>(r.pairs.size()), brute.cardinality);
    // One-to-one and within radius.
    std::vector<bool> det_used(dets.size(), false), gt_used(gts.size(), false);
    for (const auto& p : r.pairs) {
      EXPECT_FALSE(det_used[p.det_index]);
      EXPECT_FALSE(gt_used[p.gt_index]);
      det_used[p.det_index] = true;
      gt_used[p.gt_index] = true;
      EXPECT_LE(p.dist, 6.0);
    }
  }
}

TEST(Match, SymmetricUnderRelabeling) {
  Rng rng(11);
  std::vector<Vec2> dets, gts;
  for (int i = 0; i < 5; ++i) {
    dets.push_back({rng.uniform(0, 20), rng.uniform(0, 20)});
    gts.push_back({rng.uniform(0, 20), rng.uniform(0, 20)});
  }
  const MatchResult forward = match(dets, gts, 6.0);
  const MatchResult swapped = match(gts, dets, 6.0);
  EXPECT_EQ(forward.pairs.size(), swapped.pairs.size());
  EXPECT_EQ(forward.unmatched_detections.size(), swapped.unmatched_gts.size());
  EXPECT_EQ(forward.unmatched_gts.size(), swapped.unmatched_detections.size());
}

TEST(Metrics, BasicArithmetic) {
  MatchResult r;
  for (int i = 0; i < 8; ++i) r.pairs.push_back({i, i, 1.0});
  r.unmatched_detections = {8, 9};
  r.unmatched_gts = {8, 9};
  const MetricsReport m = metrics({&r, 1});
  EXPECT_DOUBLE_EQ(m.precision, 0.8);
  EXPECT_DOUBLE_EQ(m.recall, 0.8);
  EXPECT_DOUBLE_EQ(m.f1, 0.8);
}

TEST(Metrics, NoDetectionsConvention) {
  MatchResult r;
  r.unmatched_gts = {0, 1, 2};
  const MetricsReport m = metrics({&r, 1});
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_EQ(m.recall, 0.0);
  EXPECT_EQ(m.f1, 0.0);
}

TEST(Metrics, MicroAverageIgnoresGrouping) {
  Rng rng(5);
  std::vector<MatchResult> split(4);
  MatchResult merged;
  int det_id = 0, gt_id = 0;
  for (auto& r : split) {
    const int tp = static_cast<int>(rng.below(5));
    const int fp = static_cast<int>(rng.below(4));
    const int fn = static_cast<int>(rng.below(4));
    for (int i = 0; i < tp; ++i) {
      r.pairs.push_back({det_id, gt_id, 1.0});
      merged.pairs.push_back({det_id, gt_id, 1.0});
      ++det_id;
      ++gt_id;
    }
    for (int i = 0; i < fp; ++i) {
      r.unmatched_detections.push_back(det_id);
      merged.unmatched_detections.push_back(det_id);
      ++det_id;
    }
    for (int i = 0; i < fn; ++i) {
      r.unmatched_gts.push_back(gt_id);
      merged.unmatched_gts.push_back(gt_id);
      ++gt_id;
    }
  }
  const MetricsReport by_image = metrics(split);
  const MetricsReport as_one = metrics({&merged, 1});
  EXPECT_DOUBLE_EQ(by_image.precision, as_one.precision);
  EXPECT_DOUBLE_EQ(by_image.recall, as_one.recall);
  EXPECT_DOUBLE_EQ(by_image.f1, as_one.f1);
  EXPECT_EQ(by_image.per_image.size(), 4u);
}

TEST(Metrics, F1BetweenPrecisionAndRecall) {
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    MatchResult r;
    const int tp = 1 + static_cast<int>(rng.below(20));
    const int fp = static_cast<int>(rng.below(20));
    const int fn = static_cast<int>(rng.below(20));
    for (int i = 0; i < tp; ++i) r.pairs.push_back({i, i, 0.0});
    for (int i = 0; i < fp; ++i) r.unmatched_detections.push_back(tp + i);
    for (int i = 0; i < fn; ++i) r.unmatched_gts.push_back(tp + i);
    const MetricsReport m = metrics({&r, 1});
    if (m.precision > 0.0 && m.recall > 0.0) {
      EXPECT_GE(m.f1, std::min(m.precision, m.recall) - 1e-12);
      EXPECT_LE(m.f1, std::max(m.precision, m.recall) + 1e-12);
    }
  }
}

TEST(SparseExperiment, ZeroDropGivesIdenticalReports) {
  // Tiny scenes and a tiny network: the point is bitwise equality of the
  // two runs, not detection quality.
  synth::SceneConfig scene;
  scene.image_size = 60;
  scene.blob_count_min = 2;
  scene.blob_count_max = 4;
  Rng seeds(42);
  std::vector<synth::AnnotatedImage> train_images, test_images;
  for (int i = 0; i < 2; ++i) {
    synth::SceneConfig cfg = scene;
    cfg.seed = seeds.fork(i).seed();
    train_images.push_back(synth::generate_image(cfg));
    cfg.seed = seeds.fork(100 + i).seed();
    test_images.push_back(synth::generate_image(cfg));
  }
  NetworkConfig net;
  net.mixture_components = 3;
  net.patch_size = 30;
  net.conv_blocks = {{4, 3, 2}, {6, 3, 2}};
  net.fc_hidden = 8;
  net.epochs = 2;
  net.seed = 7;
  pipeline::PipelineConfig pipe;
  pipe.stride = 30;
  SparseExperimentConfig exp;
  exp.drop_fraction = 0.0;
  exp.seed = 3;

  const SparseExperimentResult result =
      sparse_experiment(train_images, test_images, net, pipe, exp);
  EXPECT_EQ(result.full.tp, result.sparse.tp);
  EXPECT_EQ(result.full.fp, result.sparse.fp);
  EXPECT_EQ(result.full.fn, result.sparse.fn);
  EXPECT_DOUBLE_EQ(result.full.f1, result.sparse.f1);
  ASSERT_EQ(result.full_loss_curve.size(), result.sparse_loss_curve.size());
  for (std::size_t i = 0; i < result.full_loss_curve.size(); ++i) {
    EXPECT_DOUBLE_EQ(result.full_loss_curve[i], result.sparse_loss_curve[i]);
  }
}

TEST(SparseExperiment, InvalidDropFractionIsConfigError) {
  std::vector<synth::AnnotatedImage> imgs(1);
  imgs[0].pixels = ImageF(30, 30, 0.0);
  NetworkConfig net;
  net.patch_size = 30;
  pipeline::PipelineConfig pipe;
  SparseExperimentConfig exp;
  exp.drop_fraction = 1.0;
  EXPECT_THROW(sparse_experiment(imgs, imgs, net, pipe, exp), config_error);
}
