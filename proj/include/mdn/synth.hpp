#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mdn/errors.hpp"
#include "mdn/image.hpp"
#include "mdn/mixture.hpp"
#include "mdn/rng.hpp"

// Synthetic scenes: bright round blobs (including touching pairs) on a
// textured noisy background, annotated with their center coordinates.
// Also the point-set dilation and patch cropping used to build training
// data, and annotation dropping for the sparse-label experiment.

namespace mdn::synth {

struct SceneConfig {
  int image_size = 500;
  int blob_count_min = 60;
  int blob_count_max = 120;
  double blob_radius_min = 4.0;
  double blob_radius_max = 11.0;
  double blob_intensity_min = 0.45;
  double blob_intensity_max = 0.95;
  double background_min = 0.05;
  double background_max = 0.20;
  double touching_fraction = 0.25;   // fraction of blobs placed as touching pairs
  double noise_level = 0.03;         // per-pixel gaussian std
  double texture_amplitude = 0.06;   // low-frequency background modulation
  std::uint64_t seed = 0;

  void validate() const {
    if (image_size < 1) throw config_error("scene: image_size must be >= 1");
    if (blob_count_min < 0 || blob_count_max < blob_count_min) {
      throw config_error("scene: blob count range is not ordered");
    }
    if (!(blob_radius_min > 0.0) || blob_radius_max < blob_radius_min) {
      throw config_error("scene: blob radius range is not ordered");
    }
    if (blob_intensity_max < blob_intensity_min || background_max < background_min) {
      throw config_error("scene: intensity ranges are not ordered");
    }
    if (touching_fraction < 0.0 || touching_fraction > 1.0) {
      throw config_error("scene: touching_fraction must be in [0, 1]");
    }
    if (noise_level < 0.0 || texture_amplitude < 0.0) {
      throw config_error("scene: noise/texture levels must be >= 0");
    }
  }
};

/// An image with its annotated object centers (pixel coordinates,
/// x = column, y = row, origin top-left).
struct AnnotatedImage {
  ImageF pixels;
  std::vector<Vec2> centers;
};

/// A cropped training patch: pixels, normalized training targets, the
/// original centers in patch-local pixels, and placement metadata.
struct PatchRecord {
  ImageF pixels;
  TargetSet targets;
  std::vector<Vec2> raw_centers;
  int offset_row = 0;
  int offset_col = 0;
  int parent_id = 0;
};

struct DilationConfig {
  int n_samples = 10;
  double radius_px = 6.0;
};

namespace synth_detail {

struct Blob {
  Vec2 center;
  double radius;
  double intensity;
};

inline bool far_from_all(const std::vector<Blob>& blobs, Vec2 p, double radius,
                         std::size_t skip_index) {
  for (std::size_t i = 0; i < blobs.size(); ++i) {
    if (i == skip_index) continue;
    if (distance(blobs[i].center, p) < 1.35 * (blobs[i].radius + radius)) return false;
  }
  return true;
}

struct Wave {
  double fx, fy, phase, amp;
};

}  // namespace synth_detail

/// Deterministic scene generation. Blobs are isotropic intensity bumps
/// (std = radius/2); a configured fraction is laid out as touching pairs
/// with center distance in [0.8, 1.2] times the radius sum.
inline AnnotatedImage generate_image(const SceneConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const int size = cfg.image_size;

  const int n_blobs = cfg.blob_count_min +
                      static_cast<int>(rng.below(cfg.blob_count_max - cfg.blob_count_min + 1));
  const int n_pairs = static_cast<int>(std::floor(cfg.touching_fraction * n_blobs / 2.0));

  std::vector<synth_detail::Blob> blobs;
  blobs.reserve(n_blobs);
  const std::size_t no_skip = static_cast<std::size_t>(-1);
  int placed_pairs = 0;
  while (static_cast<int>(blobs.size()) < n_blobs) {
    const bool as_pair = placed_pairs < n_pairs && static_cast<int>(blobs.size()) + 2 <= n_blobs;
    const double radius = rng.uniform(cfg.blob_radius_min, cfg.blob_radius_max);
    const double margin = radius + 2.0;
    if (2.0 * margin >= size) throw config_error("scene: blobs do not fit the image");

    bool placed = false;
    for (int attempt = 0; attempt < 500 && !placed; ++attempt) {
      const Vec2 p{rng.uniform(margin, size - margin), rng.uniform(margin, size - margin)};
      if (!synth_detail::far_from_all(blobs, p, radius, no_skip)) continue;
      const double intensity = rng.uniform(cfg.blob_intensity_min, cfg.blob_intensity_max);
      if (!as_pair) {
        blobs.push_back({p, radius, intensity});
        placed = true;
        break;
      }
      // Partner within touching distance of the first blob.
      const double partner_radius = rng.uniform(cfg.blob_radius_min, cfg.blob_radius_max);
      const double partner_margin = partner_radius + 2.0;
      for (int partner_attempt = 0; partner_attempt < 100; ++partner_attempt) {
        const double angle = rng.uniform(0.0, kTwoPi);
        const double dist = rng.uniform(0.8, 1.2) * (radius + partner_radius);
        const Vec2 q = p + Vec2{dist * std::cos(angle), dist * std::sin(angle)};
        if (q.x < partner_margin || q.x > size - partner_margin || q.y < partner_margin ||
            q.y > size - partner_margin) {
          continue;
        }
        if (!synth_detail::far_from_all(blobs, q, partner_radius, no_skip)) continue;
        const double partner_intensity =
            std::clamp(intensity * rng.uniform(0.85, 1.15), cfg.blob_intensity_min,
                       cfg.blob_intensity_max);
        blobs.push_back({p, radius, intensity});
        blobs.push_back({q, partner_radius, partner_intensity});
        placed_pairs += 1;
        placed = true;
        break;
      }
    }
    if (!placed) {
      throw config_error("scene: could not place blob after bounded retries; "
                         "loosen the count/radius ranges");
    }
  }

  const double base = rng.uniform(cfg.background_min, cfg.background_max);
  std::vector<synth_detail::Wave> waves(6);
  for (auto& w : waves) {
    const double wavelength = rng.uniform(40.0, 160.0);
    const double angle = rng.uniform(0.0, kTwoPi);
    w.fx = std::cos(angle) / wavelength;
    w.fy = std::sin(angle) / wavelength;
    w.phase = rng.uniform(0.0, kTwoPi);
    w.amp = cfg.texture_amplitude * rng.uniform(0.3, 1.0) / 6.0;
  }

  AnnotatedImage out;
  out.pixels = ImageF(size, size, base);
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      double v = out.pixels(r, c);
      for (const auto& w : waves) {
        v += w.amp * std::cos(kTwoPi * (w.fx * (c + 0.5) + w.fy * (r + 0.5)) + w.phase);
      }
      out.pixels(r, c) = v;
    }
  }

  for (const auto& blob : blobs) {
    const double sigma = blob.radius / 2.0;
    const double cutoff = 3.0 * blob.radius;
    const int r0 = std::max(0, static_cast<int>(std::floor(blob.center.y - cutoff)));
    const int r1 = std::min(size - 1, static_cast<int>(std::ceil(blob.center.y + cutoff)));
    const int c0 = std::max(0, static_cast<int>(std::floor(blob.center.x - cutoff)));
    const int c1 = std::min(size - 1, static_cast<int>(std::ceil(blob.center.x + cutoff)));
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        const double d2 = squared_norm(Vec2{c + 0.5, r + 0.5} - blob.center);
        if (d2 > cutoff * cutoff) continue;
        out.pixels(r, c) += blob.intensity * std::exp(-d2 / (2.0 * sigma * sigma));
      }
    }
    out.centers.push_back(blob.center);
  }

  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const double v = out.pixels(r, c) + cfg.noise_level * rng.normal();
      out.pixels(r, c) = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

/// Sample n_samples points per center from a truncated isotropic Gaussian
/// (std = radius/3, resampled until within radius of the center and inside
/// the patch). Input centers are patch-local pixels; the returned targets
/// are normalized by the patch side.
inline TargetSet dilate_points(std::span<const Vec2> centers_px, int n_samples,
                               double radius_px, std::uint64_t seed, int patch_size = 50) {
  if (n_samples < 1) throw config_error("dilate_points: n_samples must be >= 1");
  if (radius_px < 0.0) throw config_error("dilate_points: radius must be >= 0");
  Rng rng(seed);
  const double std_dev = radius_px / 3.0;
  TargetSet out;
  out.points.reserve(centers_px.size() * static_cast<std::size_t>(n_samples));
  for (const Vec2& center : centers_px) {
    for (int s = 0; s < n_samples; ++s) {
      Vec2 p = center;
      if (radius_px > 0.0) {
        bool accepted = false;
        for (int attempt = 0; attempt < 10000; ++attempt) {
          const Vec2 candidate = center + Vec2{rng.normal(0.0, std_dev), rng.normal(0.0, std_dev)};
          if (distance(candidate, center) > radius_px) continue;
          if (candidate.x < 0.0 || candidate.x >= patch_size || candidate.y < 0.0 ||
              candidate.y >= patch_size) {
            continue;
          }
          p = candidate;
          accepted = true;
          break;
        }
        if (!accepted) p = center;  // center pinned to a patch corner
      }
      out.points.push_back({p.x / patch_size, p.y / patch_size});
    }
  }
  return out;
}

/// Tile an annotated image into patches. Each patch carries the centers in
/// its half-open [offset, offset+size) footprint; training targets are the
/// normalized centers plus their dilated samples. Empty patches are kept.
inline std::vector<PatchRecord> crop_patches(const AnnotatedImage& image, int patch_size,
                                             int stride, const DilationConfig& dilation,
                                             std::uint64_t seed, int parent_id = 0) {
  if (image.pixels.rows() < patch_size || image.pixels.cols() < patch_size) {
    throw config_error("crop_patches: image smaller than the patch size");
  }
  if (stride < 1 || stride > patch_size) {
    throw config_error("crop_patches: stride must be in [1, patch_size]");
  }
  const std::vector<int> row_offsets = tile_offsets(image.pixels.rows(), patch_size, stride);
  const std::vector<int> col_offsets = tile_offsets(image.pixels.cols(), patch_size, stride);
  const Rng base(seed);

  std::vector<PatchRecord> records;
  records.reserve(row_offsets.size() * col_offsets.size());
  std::uint64_t patch_index = 0;
  for (int row0 : row_offsets) {
    for (int col0 : col_offsets) {
      PatchRecord rec;
      rec.offset_row = row0;
      rec.offset_col = col0;
      rec.parent_id = parent_id;
      rec.pixels = crop(image.pixels, row0, col0, patch_size, patch_size);
      for (const Vec2& center : image.centers) {
        const Vec2 local = center - Vec2{static_cast<double>(col0), static_cast<double>(row0)};
        if (local.x >= 0.0 && local.x < patch_size && local.y >= 0.0 && local.y < patch_size) {
          rec.raw_centers.push_back(local);
        }
      }
      for (const Vec2& local : rec.raw_centers) {
        rec.targets.points.push_back({local.x / patch_size, local.y / patch_size});
      }
      const TargetSet dilated =
          dilate_points(rec.raw_centers, dilation.n_samples, dilation.radius_px,
                        base.fork(patch_index).seed(), patch_size);
      rec.targets.points.insert(rec.targets.points.end(), dilated.points.begin(),
                                dilated.points.end());
      records.push_back(std::move(rec));
      ++patch_index;
    }
  }
  return records;
}

/// Remove floor(fraction * N) centers uniformly across the dataset,
/// before any dilation or patching. Pixels are untouched.
inline std::vector<AnnotatedImage> drop_annotations(std::vector<AnnotatedImage> dataset,
                                                    double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction >= 1.0) {
    throw config_error("drop_annotations: fraction must be in [0, 1)");
  }
  std::size_t total = 0;
  for (const auto& image : dataset) total += image.centers.size();
  const std::size_t n_drop = static_cast<std::size_t>(std::floor(fraction * total));
  if (n_drop == 0) return dataset;

  std::vector<std::pair<std::size_t, std::size_t>> slots;
  slots.reserve(total);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (std::size_t j = 0; j < dataset[i].centers.size(); ++j) slots.emplace_back(i, j);
  }
  Rng rng(seed);
  shuffle(slots, rng);

  std::vector<std::vector<bool>> dropped(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    dropped[i].assign(dataset[i].centers.size(), false);
  }
  for (std::size_t d = 0; d < n_drop; ++d) dropped[slots[d].first][slots[d].second] = true;

  for (std::size_t i = 0; i < dataset.size(); ++i) {
    std::vector<Vec2> kept;
    kept.reserve(dataset[i].centers.size());
    for (std::size_t j = 0; j < dataset[i].centers.size(); ++j) {
      if (!dropped[i][j]) kept.push_back(dataset[i].centers[j]);
    }
    dataset[i].centers = std::move(kept);
  }
  return dataset;
}

}  // namespace mdn::synth
