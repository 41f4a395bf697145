#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "mdn/errors.hpp"
#include "mdn/image.hpp"
#include "mdn/network.hpp"
#include "mdn/pipeline.hpp"
#include "mdn/synth.hpp"

// Detection scoring: radius-bounded one-to-one matching, micro-averaged
// precision/recall/F1, and the full-vs-sparse annotation experiment.

namespace mdn::eval {

struct MatchPair {
  int det_index = 0;
  int gt_index = 0;
  double dist = 0.0;
};

struct MatchResult {
  std::vector<MatchPair> pairs;
  std::vector<int> unmatched_detections;  // false positives
  std::vector<int> unmatched_gts;         // false negatives
};

struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long tp = 0;
  long fp = 0;
  long fn = 0;
  struct Counts {
    long tp = 0, fp = 0, fn = 0;
  };
  std::vector<Counts> per_image;
};

/// One-to-one matching of detections to ground truths within radius_px
/// (inclusive). Pairs are chosen greedily by ascending distance, then
/// augmented to maximum cardinality, so the number of matches always
/// equals the maximum-cardinality matching on the radius graph.
inline MatchResult match(std::span<const Vec2> detections, std::span<const Vec2> gts,
                         double radius_px = 6.0) {
  if (radius_px < 0.0) throw config_error("match: radius must be >= 0");
  struct Edge {
    double dist;
    int det;
    int gt;
  };
  std::vector<Edge> edges;
  std::vector<std::vector<int>> candidates(detections.size());
  for (int d = 0; d < static_cast<int>(detections.size()); ++d) {
    for (int g = 0; g < static_cast<int>(gts.size()); ++g) {
      const double dist = distance(detections[d], gts[g]);
      if (dist <= radius_px) {
        edges.push_back({dist, d, g});
        candidates[d].push_back(g);
      }
    }
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (a.det != b.det) return a.det < b.det;
    return a.gt < b.gt;
  });

  std::vector<int> det_of_gt(gts.size(), -1);
  std::vector<int> gt_of_det(detections.size(), -1);
  for (const Edge& e : edges) {
    if (gt_of_det[e.det] == -1 && det_of_gt[e.gt] == -1) {
      gt_of_det[e.det] = e.gt;
      det_of_gt[e.gt] = e.det;
    }
  }

  // Augmenting-path pass; greedy alone can strand a matchable pair.
  std::vector<bool> visited;
  const auto try_augment = [&](auto&& self, int det) -> bool {
    for (int g : candidates[det]) {
      if (visited[g]) continue;
      visited[g] = true;
      if (det_of_gt[g] == -1 || self(self, det_of_gt[g])) {
        det_of_gt[g] = det;
        gt_of_det[det] = g;
        return true;
      }
    }
    return false;
  };
  for (int d = 0; d < static_cast<int>(detections.size()); ++d) {
    if (gt_of_det[d] != -1) continue;
    visited.assign(gts.size(), false);
    try_augment(try_augment, d);
  }

  MatchResult result;
  for (int d = 0; d < static_cast<int>(detections.size()); ++d) {
    if (gt_of_det[d] == -1) {
      result.unmatched_detections.push_back(d);
    } else {
      result.pairs.push_back({d, gt_of_det[d], distance(detections[d], gts[gt_of_det[d]])});
    }
  }
  for (int g = 0; g < static_cast<int>(gts.size()); ++g) {
    if (det_of_gt[g] == -1) result.unmatched_gts.push_back(g);
  }
  return result;
}

/// Micro-averaged metrics: TP/FP/FN are summed over all images before
/// the ratios. Undefined ratios are 0 by convention.
inline MetricsReport metrics(std::span<const MatchResult> results) {
  MetricsReport report;
  for (const MatchResult& r : results) {
    MetricsReport::Counts counts;
    counts.tp = static_cast<long>(r.pairs.size());
    counts.fp = static_cast<long>(r.unmatched_detections.size());
    counts.fn = static_cast<long>(r.unmatched_gts.size());
    report.per_image.push_back(counts);
    report.tp += counts.tp;
    report.fp += counts.fp;
    report.fn += counts.fn;
  }
  report.precision = report.tp + report.fp > 0
                         ? static_cast<double>(report.tp) / static_cast<double>(report.tp + report.fp)
                         : 0.0;
  report.recall = report.tp + report.fn > 0
                      ? static_cast<double>(report.tp) / static_cast<double>(report.tp + report.fn)
                      : 0.0;
  report.f1 = report.precision + report.recall > 0.0
                  ? 2.0 * report.precision * report.recall / (report.precision + report.recall)
                  : 0.0;
  return report;
}

/// Detect on every image and score against its annotated centers.
inline MetricsReport evaluate_detector(const Checkpoint& checkpoint,
                                       std::span<const synth::AnnotatedImage> images,
                                       const pipeline::PipelineConfig& pipe_cfg,
                                       double radius_px = 6.0) {
  std::vector<MatchResult> results;
  results.reserve(images.size());
  for (const synth::AnnotatedImage& image : images) {
    const pipeline::DetectionSet dets = pipeline::detect(image.pixels, checkpoint, pipe_cfg);
    std::vector<Vec2> det_points;
    det_points.reserve(dets.size());
    for (const pipeline::Detection& d : dets) {
      det_points.push_back({static_cast<double>(d.x), static_cast<double>(d.y)});
    }
    results.push_back(match(det_points, image.centers, radius_px));
  }
  return metrics(results);
}

struct SparseExperimentConfig {
  double drop_fraction = 0.3;
  int train_stride = 0;  // 0: use the patch size (non-overlapping tiles)
  synth::DilationConfig dilation;
  double radius_px = 6.0;
  std::uint64_t seed = 0;  // drives dilation and annotation dropping
};

struct SparseExperimentResult {
  MetricsReport full;
  MetricsReport sparse;
  std::vector<double> full_loss_curve;
  std::vector<double> sparse_loss_curve;
};

namespace eval_detail {

inline std::vector<synth::PatchRecord> build_patches(
    std::span<const synth::AnnotatedImage> images, const NetworkConfig& net_cfg,
    int stride, const synth::DilationConfig& dilation, std::uint64_t seed) {
  std::vector<synth::PatchRecord> patches;
  const Rng base(seed);
  for (std::size_t i = 0; i < images.size(); ++i) {
    std::vector<synth::PatchRecord> recs =
        synth::crop_patches(images[i], net_cfg.patch_size, stride, dilation,
                            base.fork(i).seed(), static_cast<int>(i));
    for (auto& rec : recs) patches.push_back(std::move(rec));
  }
  return patches;
}

}  // namespace eval_detail

/// Train once on the full annotations and once with a fraction dropped
/// (identical seeds otherwise), then score both on the untouched test
/// images.
inline SparseExperimentResult sparse_experiment(
    std::span<const synth::AnnotatedImage> train_images,
    std::span<const synth::AnnotatedImage> test_images, const NetworkConfig& net_cfg,
    const pipeline::PipelineConfig& pipe_cfg, const SparseExperimentConfig& exp_cfg) {
  if (exp_cfg.drop_fraction < 0.0 || exp_cfg.drop_fraction >= 1.0) {
    throw config_error("sparse_experiment: drop fraction must be in [0, 1)");
  }
  const int stride = exp_cfg.train_stride > 0 ? exp_cfg.train_stride : net_cfg.patch_size;
  const Rng base(exp_cfg.seed);
  const std::uint64_t dilation_seed = base.fork(0).seed();
  const std::uint64_t drop_seed = base.fork(1).seed();

  SparseExperimentResult out;
  {
    const std::vector<synth::PatchRecord> patches = eval_detail::build_patches(
        train_images, net_cfg, stride, exp_cfg.dilation, dilation_seed);
    TrainResult trained = train(patches, net_cfg);
    out.full_loss_curve = trained.epoch_mean_loss;
    out.full = evaluate_detector(trained.checkpoint, test_images, pipe_cfg, exp_cfg.radius_px);
  }
  {
    std::vector<synth::AnnotatedImage> sparse_images(train_images.begin(), train_images.end());
    sparse_images = synth::drop_annotations(std::move(sparse_images), exp_cfg.drop_fraction,
                                            drop_seed);
    const std::vector<synth::PatchRecord> patches = eval_detail::build_patches(
        sparse_images, net_cfg, stride, exp_cfg.dilation, dilation_seed);
    TrainResult trained = train(patches, net_cfg);
    out.sparse_loss_curve = trained.epoch_mean_loss;
    out.sparse = evaluate_detector(trained.checkpoint, test_images, pipe_cfg, exp_cfg.radius_px);
  }
  return out;
}

}  // namespace mdn::eval
