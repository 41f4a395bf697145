#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <span>
#include <thread>
#include <vector>

#include "mdn/errors.hpp"
#include "mdn/image.hpp"
#include "mdn/mixture.hpp"
#include "mdn/network.hpp"

// Image-wide inference: tile, predict per patch, gate and threshold the
// mixtures, render per-patch probability maps, stitch them, and read
// detections off the stitched map as local maxima.

namespace mdn::pipeline {

struct PipelineConfig {
  int stride = 50;                  // tile step; 50 = non-overlapping for 50 px patches
  double e_thresh = 0.5;            // gate threshold
  double alpha_thresh = 0.001;      // mixing coefficient threshold
  double min_distance_px = 6.0;     // peak separation
  double peak_threshold_rel = 0.05; // peak cutoff as a fraction of the map maximum
  int workers = 1;
};

/// A mixture component that survived gating and weight thresholding.
struct KeptComponent {
  double alpha = 0.0;
  Vec2 mu;
  double sigma = 0.0;
  int index = 0;  // position in the originating mixture
};

/// Dense per-pixel rendering of predicted mixtures over a whole image,
/// with the number of covering tiles recorded per pixel.
struct ProbabilityMap {
  ImageF grid;
  Grid<int> coverage;
};

struct Detection {
  int x = 0;  // column
  int y = 0;  // row
  double score = 0.0;
};

using DetectionSet = std::vector<Detection>;

struct PatchPrediction {
  int offset_row = 0;
  int offset_col = 0;
  MixtureParams params;
};

/// Drop everything when the gate is below e_thresh; otherwise keep
/// components with alpha >= alpha_thresh, in their original order.
/// Surviving alphas are not renormalized.
inline std::vector<KeptComponent> filter_components(const MixtureParams& params,
                                                    double e_thresh = 0.5,
                                                    double alpha_thresh = 0.001) {
  std::vector<KeptComponent> kept;
  if (params.gate_e < e_thresh) return kept;
  for (int k = 0; k < params.component_count(); ++k) {
    if (params.alphas[k] >= alpha_thresh) {
      kept.push_back({params.alphas[k], params.mus[k], params.sigmas[k], k});
    }
  }
  return kept;
}

/// Evaluate the kept mixture at every pixel center of a patch-sized grid.
/// Pixel (r, c) maps to normalized coordinates ((c+0.5)/S, (r+0.5)/S).
inline ImageF render_probmap(std::span<const KeptComponent> components, int patch_size = 50) {
  ImageF grid(patch_size, patch_size, 0.0);
  const double inv = 1.0 / patch_size;
  for (const KeptComponent& comp : components) {
    const double inv_two_s2 = 1.0 / (2.0 * comp.sigma * comp.sigma);
    const double scale = comp.alpha / (kTwoPi * comp.sigma * comp.sigma);
    for (int r = 0; r < patch_size; ++r) {
      const double dy = (r + 0.5) * inv - comp.mu.y;
      for (int c = 0; c < patch_size; ++c) {
        const double dx = (c + 0.5) * inv - comp.mu.x;
        grid(r, c) += scale * std::exp(-(dx * dx + dy * dy) * inv_two_s2);
      }
    }
  }
  return grid;
}

/// Predict a mixture for every tile of the image, row-major. The last
/// tile of each axis is clamped to the border.
inline std::vector<PatchPrediction> tile_and_predict(const ImageF& image,
                                                     const Checkpoint& checkpoint,
                                                     int stride, int workers = 1) {
  const Predictor predictor(checkpoint);
  const int patch = predictor.config().patch_size;
  if (image.rows() < patch || image.cols() < patch) {
    throw config_error("tile_and_predict: image smaller than the patch size");
  }
  if (stride < 1 || stride > patch) {
    throw config_error("tile_and_predict: stride must be in [1, patch_size]");
  }
  const std::vector<int> row_offsets = tile_offsets(image.rows(), patch, stride);
  const std::vector<int> col_offsets = tile_offsets(image.cols(), patch, stride);

  std::vector<PatchPrediction> out(row_offsets.size() * col_offsets.size());
  const std::size_t total = out.size();
  const auto run_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const int row0 = row_offsets[i / col_offsets.size()];
      const int col0 = col_offsets[i % col_offsets.size()];
      const ImageF patch_pixels = crop(image, row0, col0, patch, patch);
      out[i] = {row0, col0, predictor.predict(patch_pixels)};
    }
  };

  const int n_threads = std::max(1, std::min<int>(workers, static_cast<int>(total)));
  if (n_threads == 1) {
    run_range(0, total);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (total + n_threads - 1) / n_threads;
    for (int t = 0; t < n_threads; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(total, begin + chunk);
      if (begin >= end) break;
      pool.emplace_back(run_range, begin, end);
    }
    for (auto& th : pool) th.join();
  }
  return out;
}

/// Combine per-patch grids into an image-wide map: per-pixel mean over
/// the tiles covering that pixel.
inline ProbabilityMap stitch(std::span<const ImageF> patch_grids,
                             std::span<const std::array<int, 2>> offsets,
                             int height, int width) {
  if (patch_grids.size() != offsets.size()) {
    throw config_error("stitch: grids/offsets misaligned");
  }
  ProbabilityMap map;
  map.grid = ImageF(height, width, 0.0);
  map.coverage = Grid<int>(height, width, 0);
  for (std::size_t i = 0; i < patch_grids.size(); ++i) {
    const ImageF& g = patch_grids[i];
    const auto [row0, col0] = offsets[i];
    if (row0 < 0 || col0 < 0 || row0 + g.rows() > height || col0 + g.cols() > width) {
      throw config_error("stitch: patch outside the image bounds");
    }
    for (int r = 0; r < g.rows(); ++r) {
      for (int c = 0; c < g.cols(); ++c) {
        map.grid(row0 + r, col0 + c) += g(r, c);
        map.coverage(row0 + r, col0 + c) += 1;
      }
    }
  }
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const int count = map.coverage(r, c);
      assert(count > 0 && "tiling contract: every pixel is covered");
      if (count > 0) map.grid(r, c) /= count;
    }
  }
  return map;
}

/// Local maxima of the map: pixels above the threshold that strictly
/// dominate every pixel within min_distance_px (ties go to the row-major
/// first occurrence). Sorted by descending score.
inline DetectionSet find_peaks(const ProbabilityMap& map, double min_distance_px,
                               double peak_threshold) {
  const int height = map.grid.rows();
  const int width = map.grid.cols();
  const int reach = static_cast<int>(std::floor(min_distance_px));
  std::vector<std::array<int, 2>> disk;
  for (int dy = -reach; dy <= reach; ++dy) {
    for (int dx = -reach; dx <= reach; ++dx) {
      if (dy == 0 && dx == 0) continue;
      if (dy * dy + dx * dx <= min_distance_px * min_distance_px) disk.push_back({dy, dx});
    }
  }

  DetectionSet peaks;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const double v = map.grid(r, c);
      if (!(v > peak_threshold)) continue;
      bool is_peak = true;
      for (const auto& [dy, dx] : disk) {
        const int nr = r + dy, nc = c + dx;
        if (nr < 0 || nr >= height || nc < 0 || nc >= width) continue;
        const double nv = map.grid(nr, nc);
        if (nv > v || (nv == v && (nr < r || (nr == r && nc < c)))) {
          is_peak = false;
          break;
        }
      }
      if (is_peak) peaks.push_back({c, r, v});
    }
  }
  std::stable_sort(peaks.begin(), peaks.end(), [](const Detection& a, const Detection& b) {
    return a.score > b.score;
  });
  return peaks;
}

/// Tile, predict, filter, render, and stitch; no peak extraction.
inline ProbabilityMap probability_map(const ImageF& image, const Checkpoint& checkpoint,
                                      const PipelineConfig& cfg) {
  const std::vector<PatchPrediction> predictions =
      tile_and_predict(image, checkpoint, cfg.stride, cfg.workers);
  const int patch = checkpoint.config.patch_size;
  std::vector<ImageF> grids;
  std::vector<std::array<int, 2>> offsets;
  grids.reserve(predictions.size());
  offsets.reserve(predictions.size());
  for (const PatchPrediction& pred : predictions) {
    const std::vector<KeptComponent> kept =
        filter_components(pred.params, cfg.e_thresh, cfg.alpha_thresh);
    grids.push_back(render_probmap(kept, patch));
    offsets.push_back({pred.offset_row, pred.offset_col});
  }
  return stitch(grids, offsets, image.rows(), image.cols());
}

/// Full detection pass; equal to composing tile_and_predict,
/// filter_components, render_probmap, stitch and find_peaks.
inline DetectionSet detect(const ImageF& image, const Checkpoint& checkpoint,
                           const PipelineConfig& cfg) {
  const ProbabilityMap map = probability_map(image, checkpoint, cfg);
  double peak = 0.0;
  for (double v : map.grid.values()) peak = std::max(peak, v);
  return find_peaks(map, cfg.min_distance_px, cfg.peak_threshold_rel * peak);
}

}  // namespace mdn::pipeline
