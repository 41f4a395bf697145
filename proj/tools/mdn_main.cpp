// Command line front end: synthesize datasets, train, detect, evaluate,
// and run the sparse-annotation experiment.
//
// Exit codes: 0 success, 1 usage/config error, 2 io/format error,
// 3 numeric failure.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "mdn/checkpoint.hpp"
#include "mdn/eval.hpp"
#include "mdn/io.hpp"
#include "mdn/log.hpp"
#include "mdn/network.hpp"
#include "mdn/pipeline.hpp"
#include "mdn/png_io.hpp"
#include "mdn/synth.hpp"

namespace {

struct Options {
  std::uint64_t seed = 0;
  std::string out;
  std::string data_dir;
  std::string checkpoint_path;
  std::string image_path;
  std::string detections_path;
  std::string gt_path;
  std::string loss_csv;
  std::string metrics_csv;

  int images = 0;
  int image_size = 500;
  int blobs_min = 60;
  int blobs_max = 120;
  double noise = 0.03;

  int k = 100;
  int patch = 50;
  int stride = 0;        // inference tiling; 0 = patch size
  int train_stride = 0;  // training tiling; 0 = patch size / 2
  int epochs = 30;
  int batch = 32;
  double lr = 1e-3;

  double e_thresh = 0.5;
  double alpha_thresh = 0.001;
  double min_distance = 6.0;
  double peak_rel = 0.05;
  double radius = 6.0;
  double drop = 0.3;
  int workers = 1;
  bool probmap_csv = false;
};

mdn::synth::SceneConfig scene_config(const Options& opt) {
  mdn::synth::SceneConfig scene;
  scene.image_size = opt.image_size;
  scene.blob_count_min = opt.blobs_min;
  scene.blob_count_max = opt.blobs_max;
  scene.noise_level = opt.noise;
  return scene;
}

mdn::NetworkConfig network_config(const Options& opt) {
  mdn::NetworkConfig cfg;
  cfg.mixture_components = opt.k;
  cfg.patch_size = opt.patch;
  cfg.seed = opt.seed;
  cfg.learning_rate = opt.lr;
  cfg.batch_size = opt.batch;
  cfg.epochs = opt.epochs;
  return cfg;
}

mdn::pipeline::PipelineConfig pipeline_config(const Options& opt, int patch_size) {
  mdn::pipeline::PipelineConfig cfg;
  cfg.stride = opt.stride > 0 ? opt.stride : patch_size;
  cfg.e_thresh = opt.e_thresh;
  cfg.alpha_thresh = opt.alpha_thresh;
  cfg.min_distance_px = opt.min_distance;
  cfg.peak_threshold_rel = opt.peak_rel;
  cfg.workers = opt.workers;
  return cfg;
}

int effective_train_stride(const Options& opt) {
  if (opt.train_stride > 0) return opt.train_stride;
  return std::max(1, opt.patch / 2);
}

std::vector<mdn::synth::PatchRecord> build_training_patches(
    const std::vector<mdn::synth::AnnotatedImage>& images, const Options& opt) {
  std::vector<mdn::synth::PatchRecord> patches;
  const mdn::Rng dilation_base = mdn::Rng(opt.seed).fork(2);
  for (std::size_t i = 0; i < images.size(); ++i) {
    auto records = mdn::synth::crop_patches(images[i], opt.patch, effective_train_stride(opt),
                                            {}, dilation_base.fork(i).seed(),
                                            static_cast<int>(i));
    for (auto& rec : records) patches.push_back(std::move(rec));
  }
  return patches;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw mdn::config_error(message);
}

int run_synth(const Options& opt) {
  require(opt.images >= 1, "synth: --images must be >= 1");
  require(!opt.out.empty(), "synth: --out directory is required");
  const mdn::synth::SceneConfig base = scene_config(opt);
  base.validate();

  const mdn::Rng seeds(opt.seed);
  std::vector<mdn::synth::AnnotatedImage> images;
  std::vector<std::string> splits;
  const int n_train = (opt.images + 1) / 2;
  std::size_t total_centers = 0;
  for (int i = 0; i < opt.images; ++i) {
    mdn::synth::SceneConfig cfg = base;
    cfg.seed = seeds.fork(static_cast<std::uint64_t>(i)).seed();
    images.push_back(mdn::synth::generate_image(cfg));
    splits.push_back(i < n_train ? "train" : "test");
    total_centers += images.back().centers.size();
  }
  mdn::io::save_dataset(opt.out, images, splits);
  std::printf("wrote %d images (%zu centers, %d train / %d test) to %s\n", opt.images,
              total_centers, n_train, opt.images - n_train, opt.out.c_str());
  return 0;
}

int run_train(const Options& opt) {
  require(!opt.data_dir.empty(), "train: --data directory is required");
  require(!opt.out.empty(), "train: --out checkpoint path is required");
  const auto images = mdn::io::load_dataset(opt.data_dir, "train");
  require(!images.empty(), "train: dataset has no train split entries");

  const auto patches = build_training_patches(images, opt);
  std::size_t with_objects = 0;
  for (const auto& p : patches) with_objects += p.targets.has_object() ? 1 : 0;
  mdn::log::info("training on %zu patches (%zu with objects)", patches.size(), with_objects);

  const mdn::TrainResult result = mdn::train(patches, network_config(opt));
  mdn::save_checkpoint(result.checkpoint, opt.out);
  const std::string loss_path = opt.loss_csv.empty() ? opt.out + ".loss.csv" : opt.loss_csv;
  mdn::io::write_loss_csv(loss_path, result.epoch_mean_loss);
  std::printf("trained %d epochs on %zu patches; final mean loss %.6f\n", opt.epochs,
              patches.size(), result.epoch_mean_loss.back());
  std::printf("checkpoint: %s\nloss curve: %s\n", opt.out.c_str(), loss_path.c_str());
  return 0;
}

int run_detect(const Options& opt) {
  require(!opt.checkpoint_path.empty(), "detect: --checkpoint is required");
  require(!opt.image_path.empty(), "detect: --image is required");
  require(!opt.out.empty(), "detect: --out prefix is required");

  const mdn::Checkpoint ckpt = mdn::load_checkpoint(opt.checkpoint_path);
  const mdn::ImageF image = mdn::png::read_gray_normalized(opt.image_path);
  const mdn::pipeline::PipelineConfig cfg = pipeline_config(opt, ckpt.config.patch_size);

  const mdn::pipeline::ProbabilityMap map = mdn::pipeline::probability_map(image, ckpt, cfg);
  double peak = 0.0;
  for (double v : map.grid.values()) peak = std::max(peak, v);
  const mdn::pipeline::DetectionSet detections =
      mdn::pipeline::find_peaks(map, cfg.min_distance_px, cfg.peak_threshold_rel * peak);

  mdn::io::write_detections_csv(opt.out + ".detections.csv", detections);
  mdn::io::write_probmap_png(opt.out + ".probmap.png", opt.out + ".probmap.max.txt", map.grid);
  if (opt.probmap_csv) mdn::io::write_probmap_csv(opt.out + ".probmap.csv", map.grid);
  std::printf("%zu detections -> %s.detections.csv\n", detections.size(), opt.out.c_str());
  return 0;
}

int run_eval(const Options& opt) {
  require(!opt.detections_path.empty(), "eval: --detections is required");
  require(!opt.gt_path.empty(), "eval: --gt is required");
  require(opt.radius >= 0.0, "eval: --radius must be >= 0");

  const mdn::pipeline::DetectionSet detections =
      mdn::io::read_detections_csv(opt.detections_path);
  const std::vector<mdn::Vec2> gts = mdn::io::read_centers_csv(opt.gt_path);
  std::vector<mdn::Vec2> det_points;
  det_points.reserve(detections.size());
  for (const auto& d : detections) {
    det_points.push_back({static_cast<double>(d.x), static_cast<double>(d.y)});
  }
  const mdn::eval::MatchResult result = mdn::eval::match(det_points, gts, opt.radius);
  const mdn::eval::MetricsReport report = mdn::eval::metrics({&result, 1});

  const std::vector<std::string> methods = {"detections"};
  const std::vector<mdn::eval::MetricsReport> reports = {report};
  std::printf("%s", mdn::io::metrics_table(methods, reports).c_str());
  std::printf("tp=%ld fp=%ld fn=%ld\n", report.tp, report.fp, report.fn);
  if (!opt.metrics_csv.empty()) mdn::io::write_metrics_csv(opt.metrics_csv, methods, reports);
  return 0;
}

int run_sparse(const Options& opt) {
  require(!opt.data_dir.empty(), "sparse: --data directory is required");
  require(opt.drop >= 0.0 && opt.drop < 1.0, "sparse: --drop must be in [0, 1)");
  const auto train_images = mdn::io::load_dataset(opt.data_dir, "train");
  const auto test_images = mdn::io::load_dataset(opt.data_dir, "test");
  require(!train_images.empty(), "sparse: dataset has no train split entries");
  require(!test_images.empty(), "sparse: dataset has no test split entries");

  const mdn::NetworkConfig net_cfg = network_config(opt);
  const mdn::pipeline::PipelineConfig pipe_cfg = pipeline_config(opt, net_cfg.patch_size);
  mdn::eval::SparseExperimentConfig exp_cfg;
  exp_cfg.drop_fraction = opt.drop;
  exp_cfg.train_stride = effective_train_stride(opt);
  exp_cfg.radius_px = opt.radius;
  exp_cfg.seed = mdn::Rng(opt.seed).fork(2).seed();

  const mdn::eval::SparseExperimentResult result =
      mdn::eval::sparse_experiment(train_images, test_images, net_cfg, pipe_cfg, exp_cfg);

  const std::vector<std::string> methods = {"full", "sparse"};
  const std::vector<mdn::eval::MetricsReport> reports = {result.full, result.sparse};
  std::printf("%s", mdn::io::metrics_table(methods, reports).c_str());
  std::printf("delta: precision %+.3f recall %+.3f f1 %+.3f\n",
              result.sparse.precision - result.full.precision,
              result.sparse.recall - result.full.recall, result.sparse.f1 - result.full.f1);
  if (!opt.metrics_csv.empty()) mdn::io::write_metrics_csv(opt.metrics_csv, methods, reports);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixture-density multi-point detector: synthetic data, training, "
               "inference, and evaluation"};
  app.fallthrough();
  app.require_subcommand(1);
  Options opt;

  app.set_config("--config", "", "Flat key=value config file; command line flags override");
  app.add_option("--seed", opt.seed, "Master seed for all randomness")->capture_default_str();
  app.add_option("--out", opt.out, "Output directory, file, or prefix");
  app.add_option("--data", opt.data_dir, "Dataset directory (contains manifest.txt)");
  app.add_option("--checkpoint", opt.checkpoint_path, "Checkpoint file to load");
  app.add_option("--image", opt.image_path, "Input image (grayscale png)");
  app.add_option("--detections", opt.detections_path, "Detections csv (x,y,score)");
  app.add_option("--gt", opt.gt_path, "Ground-truth centers csv (x,y)");
  app.add_option("--loss-csv", opt.loss_csv, "Loss curve output path");
  app.add_option("--metrics-csv", opt.metrics_csv, "Metrics csv output path");

  app.add_option("--images", opt.images, "Number of images to synthesize");
  app.add_option("--size", opt.image_size, "Synthetic image side length")->capture_default_str();
  app.add_option("--blobs-min", opt.blobs_min, "Minimum blobs per image")->capture_default_str();
  app.add_option("--blobs-max", opt.blobs_max, "Maximum blobs per image")->capture_default_str();
  app.add_option("--noise", opt.noise, "Background noise level")->capture_default_str();

  app.add_option("--k", opt.k, "Mixture components per patch")->capture_default_str();
  app.add_option("--patch", opt.patch, "Patch side length")->capture_default_str();
  app.add_option("--stride", opt.stride, "Inference tile stride (0 = patch size)")
      ->capture_default_str();
  app.add_option("--train-stride", opt.train_stride,
                 "Training tile stride (0 = half the patch size)")
      ->capture_default_str();
  app.add_option("--epochs", opt.epochs, "Training epochs")->capture_default_str();
  app.add_option("--batch", opt.batch, "Batch size")->capture_default_str();
  app.add_option("--lr", opt.lr, "Learning rate")->capture_default_str();

  app.add_option("--e-thresh", opt.e_thresh, "Gate threshold")->capture_default_str();
  app.add_option("--alpha-thresh", opt.alpha_thresh, "Mixing coefficient threshold")
      ->capture_default_str();
  app.add_option("--min-distance", opt.min_distance, "Peak separation in pixels")
      ->capture_default_str();
  app.add_option("--peak-rel", opt.peak_rel, "Peak threshold as a fraction of the map maximum")
      ->capture_default_str();
  app.add_option("--radius", opt.radius, "Match radius in pixels")->capture_default_str();
  app.add_option("--drop", opt.drop, "Annotation drop fraction for the sparse experiment")
      ->capture_default_str();
  app.add_option("--workers", opt.workers, "Worker threads for per-patch inference")
      ->capture_default_str();
  app.add_flag("--probmap-csv", opt.probmap_csv, "Also dump the probability map as csv");

  CLI::App* cmd_synth = app.add_subcommand("synth", "Generate an annotated synthetic dataset");
  CLI::App* cmd_train = app.add_subcommand("train", "Train a detector on a dataset");
  CLI::App* cmd_detect = app.add_subcommand("detect", "Detect objects in one image");
  CLI::App* cmd_eval = app.add_subcommand("eval", "Score detections against ground truth");
  CLI::App* cmd_sparse =
      app.add_subcommand("sparse", "Train with full and dropped annotations, compare metrics");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (cmd_synth->parsed()) return run_synth(opt);
    if (cmd_train->parsed()) return run_train(opt);
    if (cmd_detect->parsed()) return run_detect(opt);
    if (cmd_eval->parsed()) return run_eval(opt);
    if (cmd_sparse->parsed()) return run_sparse(opt);
    throw mdn::config_error("no subcommand given");
  } catch (const mdn::config_error& e) {
    mdn::log::error("%s", e.what());
    return 1;
  } catch (const mdn::io_error& e) {
    mdn::log::error("%s", e.what());
    return 2;
  } catch (const mdn::format_error& e) {
    mdn::log::error("%s", e.what());
    return 2;
  } catch (const mdn::numeric_error& e) {
    mdn::log::error("%s", e.what());
    return 3;
  } catch (const std::domain_error& e) {
    mdn::log::error("%s", e.what());
    return 3;
  } catch (const std::exception& e) {
    mdn::log::error("unexpected error: %s", e.what());
    return 1;
  }
}
