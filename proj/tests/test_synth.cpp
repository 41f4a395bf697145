#include "mdn/synth.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

using namespace mdn;
using namespace mdn::synth;

namespace {

SceneConfig small_scene(std::uint64_t seed) {
  SceneConfig cfg;
  cfg.image_size = 200;
  cfg.blob_count_min = 10;
  cfg.blob_count_max = 20;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST(GenerateImage, ZeroBlobRangeGivesPureBackground) {
  SceneConfig cfg = small_scene(3);
  cfg.blob_count_min = 0;
  cfg.blob_count_max = 0;
  const AnnotatedImage img = generate_image(cfg);
  EXPECT_TRUE(img.centers.empty());
  double peak = 0.0;
  for (double v : img.pixels.values()) peak = std::max(peak, v);
  EXPECT_LT(peak, 0.6);  // background + texture + noise only
}

TEST(GenerateImage, FixedSeedReproduces) {
  const AnnotatedImage a = generate_image(small_scene(77));
  const AnnotatedImage b = generate_image(small_scene(77));
  ASSERT_EQ(a.centers.size(), b.centers.size());
  for (std::size_t i = 0; i < a.centers.size(); ++i) {
    EXPECT_EQ(a.centers[i], b.centers[i]);
  }
  EXPECT_EQ(a.pixels.values(), b.pixels.values());
}

TEST(GenerateImage, DefaultConfigCentersInBoundsAndCountInRange) {
  SceneConfig cfg;  // 500*500, 60..120 blobs
  cfg.seed = 9;
  const AnnotatedImage img = generate_image(cfg);
  EXPECT_GE(static_cast<int>(img.centers.size()), cfg.blob_count_min);
  EXPECT_LE(static_cast<int>(img.centers.size()), cfg.blob_count_max);
  for (const Vec2& c : img.centers) {
    EXPECT_GE(c.x, 1.0);
    EXPECT_GE(c.y, 1.0);
    EXPECT_LE(c.x, cfg.image_size - 1.0);
    EXPECT_LE(c.y, cfg.image_size - 1.0);
  }
}

TEST(GenerateImage, InvalidRangesAreConfigErrors) {
  SceneConfig cfg = small_scene(1);
  cfg.blob_count_min = 10;
  cfg.blob_count_max = 5;
  EXPECT_THROW(generate_image(cfg), config_error);
}

TEST(DilatePoints, ZeroRadiusCollapsesToCenters) {
  const std::vector<Vec2> centers = {{10.0, 20.0}, {30.0, 5.0}};
  const TargetSet t = dilate_points(centers, 4, 0.0, 11, 50);
  ASSERT_EQ(t.points.size(), 8u);
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(t.points[i].x, 10.0 / 50, 1e-12);
    EXPECT_NEAR(t.points[i].y, 20.0 / 50, 1e-12);
  }
}

TEST(DilatePoints, TenSamplesWithinRadius) {
  const std::vector<Vec2> centers = {{25.0, 25.0}};
  const TargetSet t = dilate_points(centers, 10, 6.0, 5, 50);
  ASSERT_EQ(t.points.size(), 10u);
  for (const Vec2& p : t.points) {
    const double d = distance({p.x * 50, p.y * 50}, centers[0]);
    EXPECT_LE(d, 6.0);
    EXPECT_GE(p.x, 0.0);
    EXPECT_LE(p.x, 1.0);
  }
}

TEST(DilatePoints, EmpiricalMeanNearCenter) {
  const std::vector<Vec2> centers = {{25.0, 25.0}};
  const TargetSet t = dilate_points(centers, 10000, 6.0, 123, 50);
  double mx = 0.0, my = 0.0;
  for (const Vec2& p : t.points) {
    mx += p.x * 50;
    my += p.y * 50;
  }
  mx /= t.points.size();
  my /= t.points.size();
  EXPECT_NEAR(mx, 25.0, 0.3);
  EXPECT_NEAR(my, 25.0, 0.3);
}

TEST(DilatePoints, CountScalesWithCenters) {
  Rng rng(8);
  std::vector<Vec2> centers;
  for (int i = 0; i < 7; ++i) centers.push_back({rng.uniform(5, 45), rng.uniform(5, 45)});
  const TargetSet t = dilate_points(centers, 10, 6.0, 77, 50);
  EXPECT_EQ(t.points.size(), 70u);
  EXPECT_TRUE(t.has_object());
}

TEST(CropPatches, ExactTilingCountAndCoverage) {
  SceneConfig cfg;
  cfg.seed = 5;
  const AnnotatedImage img = generate_image(cfg);
  const auto patches = crop_patches(img, 50, 50, {}, 1);
  EXPECT_EQ(patches.size(), 100u);
  // Non-overlapping tiling partitions the center set exactly.
  std::multiset<std::pair<double, double>> collected, expected;
  for (const auto& rec : patches) {
    for (const Vec2& c : rec.raw_centers) {
      collected.insert({c.x + rec.offset_col, c.y + rec.offset_row});
    }
  }
  for (const Vec2& c : img.centers) expected.insert({c.x, c.y});
  EXPECT_EQ(collected, expected);
}

TEST(CropPatches, LocalCoordinateTranslation) {
  AnnotatedImage img;
  img.pixels = ImageF(100, 100, 0.0);
  img.centers = {{60.0, 60.0}};
  const auto patches = crop_patches(img, 50, 50, {}, 1);
  ASSERT_EQ(patches.size(), 4u);
  // Row-major tile order: offsets (0,0), (0,50), (50,0), (50,50).
  const auto& rec = patches[3];
  EXPECT_EQ(rec.offset_row, 50);
  EXPECT_EQ(rec.offset_col, 50);
  ASSERT_EQ(rec.raw_centers.size(), 1u);
  EXPECT_NEAR(rec.raw_centers[0].x, 10.0, 1e-12);
  EXPECT_NEAR(rec.raw_centers[0].y, 10.0, 1e-12);
  ASSERT_FALSE(rec.targets.points.empty());
  EXPECT_NEAR(rec.targets.points[0].x, 0.2, 1e-12);
  EXPECT_NEAR(rec.targets.points[0].y, 0.2, 1e-12);
  for (const auto& other : {patches[0], patches[1], patches[2]}) {
    EXPECT_TRUE(other.raw_centers.empty());
    EXPECT_FALSE(other.targets.has_object());
  }
}

TEST(CropPatches, TargetsIncludeCenterPlusDilatedSamples) {
  AnnotatedImage img;
  img.pixels = ImageF(50, 50, 0.0);
  img.centers = {{25.0, 25.0}};
  DilationConfig dil;  // 10 samples, 6 px
  const auto patches = crop_patches(img, 50, 50, dil, 9);
  ASSERT_EQ(patches.size(), 1u);
  EXPECT_EQ(patches[0].targets.points.size(), 11u);  // center + 10 samples
  EXPECT_NEAR(patches[0].targets.points[0].x, 0.5, 1e-12);
}

TEST(CropPatches, UndersizedImageIsConfigError) {
  AnnotatedImage img;
  img.pixels = ImageF(30, 30, 0.0);
  EXPECT_THROW(crop_patches(img, 50, 50, {}, 1), config_error);
}

TEST(CropPatches, OverlappingTilesCoverEveryPixel) {
  AnnotatedImage img;
  img.pixels = ImageF(120, 120, 0.0);
  const auto patches = crop_patches(img, 50, 30, {}, 1);
  Grid<int> covered(120, 120, 0);
  for (const auto& rec : patches) {
    for (int r = 0; r < 50; ++r) {
      for (int c = 0; c < 50; ++c) covered(rec.offset_row + r, rec.offset_col + c) += 1;
    }
  }
  for (int v : covered.values()) EXPECT_GE(v, 1);
}

TEST(TileOffsets, ClampedLastTile) {
  const auto offs = tile_offsets(500, 50, 25);
  EXPECT_EQ(offs.size(), 19u);
  EXPECT_EQ(offs.front(), 0);
  EXPECT_EQ(offs.back(), 450);
  const auto single = tile_offsets(50, 50, 50);
  EXPECT_EQ(single.size(), 1u);
  const auto clamped = tile_offsets(130, 50, 50);
  ASSERT_EQ(clamped.size(), 3u);
  EXPECT_EQ(clamped[2], 80);
}

TEST(DropAnnotations, ZeroFractionIsIdentity) {
  std::vector<AnnotatedImage> dataset(2);
  dataset[0].centers = {{1, 1}, {2, 2}};
  dataset[1].centers = {{3, 3}};
  const auto kept = drop_annotations(dataset, 0.0, 5);
  EXPECT_EQ(kept[0].centers.size(), 2u);
  EXPECT_EQ(kept[1].centers.size(), 1u);
}

TEST(DropAnnotations, ExactCountSurvives) {
  std::vector<AnnotatedImage> dataset(10);
  Rng rng(3);
  for (auto& img : dataset) {
    for (int i = 0; i < 100; ++i) img.centers.push_back({rng.uniform(0, 500), rng.uniform(0, 500)});
  }
  const auto kept = drop_annotations(dataset, 0.3, 17);
  std::size_t total = 0;
  for (const auto& img : kept) total += img.centers.size();
  EXPECT_EQ(total, 700u);
}

TEST(DropAnnotations, FixedSeedReproducesSubset) {
  std::vector<AnnotatedImage> dataset(3);
  Rng rng(4);
  for (auto& img : dataset) {
    for (int i = 0; i < 50; ++i) img.centers.push_back({rng.uniform(0, 100), rng.uniform(0, 100)});
  }
  const auto a = drop_annotations(dataset, 0.4, 99);
  const auto b = drop_annotations(dataset, 0.4, 99);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].centers.size(), b[i].centers.size());
    for (std::size_t j = 0; j < a[i].centers.size(); ++j) {
      EXPECT_EQ(a[i].centers[j], b[i].centers[j]);
    }
  }
}

TEST(DropAnnotations, FullDropIsConfigError) {
  std::vector<AnnotatedImage> dataset(1);
  EXPECT_THROW(drop_annotations(dataset, 1.0, 1), config_error);
  EXPECT_THROW(drop_annotations(dataset, -0.1, 1), config_error);
}
