#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mdn/errors.hpp"
#include "mdn/eval.hpp"
#include "mdn/image.hpp"
#include "mdn/pipeline.hpp"
#include "mdn/png_io.hpp"
#include "mdn/synth.hpp"

// Plain-text and image file formats:
//   centers CSV     "x,y" integer pixels, one per line, no header
//   detections CSV  "x,y,score" with header
//   manifest        "image_path,csv_path,split" per line
//   loss CSV        "epoch,mean_loss" with header
//   metrics CSV     "method,precision,recall,f1,tp,fp,fn" with header
//   probability map 16-bit PNG scaled by the recorded maximum, the
//                   maximum in a sidecar text file, and optionally raw CSV

namespace mdn::io {

namespace io_detail {

inline std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, sep)) fields.push_back(field);
  return fields;
}

}  // namespace io_detail

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw io_error("write failed: " + path);
}

// --- center lists ---------------------------------------------------------

inline void write_centers_csv(const std::string& path, std::span<const Vec2> centers) {
  std::string body;
  for (const Vec2& c : centers) {
    body += std::to_string(static_cast<long>(std::llround(c.x))) + "," +
            std::to_string(static_cast<long>(std::llround(c.y))) + "\n";
  }
  write_text(path, body);
}

inline std::vector<Vec2> read_centers_csv(const std::string& path) {
  std::vector<Vec2> centers;
  const std::vector<std::string> lines = io_detail::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto fields = io_detail::split(lines[i], ',');
    try {
      if (fields.size() != 2) throw std::invalid_argument("field count");
      centers.push_back({std::stod(fields[0]), std::stod(fields[1])});
    } catch (const std::exception&) {
      throw format_error("bad center line " + std::to_string(i + 1) + " in " + path);
    }
  }
  return centers;
}

// --- detections ------------------------------------------------------------

inline void write_detections_csv(const std::string& path, const pipeline::DetectionSet& dets) {
  std::string body = "x,y,score\n";
  for (const pipeline::Detection& d : dets) {
    body += std::to_string(d.x) + "," + std::to_string(d.y) + "," +
            io_detail::fmt("%.6f", d.score) + "\n";
  }
  write_text(path, body);
}

inline pipeline::DetectionSet read_detections_csv(const std::string& path) {
  const std::vector<std::string> lines = io_detail::read_lines(path);
  if (lines.empty() || lines[0] != "x,y,score") {
    throw format_error("detections file lacks the x,y,score header: " + path);
  }
  pipeline::DetectionSet dets;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto fields = io_detail::split(lines[i], ',');
    try {
      if (fields.size() != 3) throw std::invalid_argument("field count");
      dets.push_back({std::stoi(fields[0]), std::stoi(fields[1]), std::stod(fields[2])});
    } catch (const std::exception&) {
      throw format_error("bad detection line " + std::to_string(i + 1) + " in " + path);
    }
  }
  return dets;
}

// --- dataset manifest ------------------------------------------------------

struct ManifestEntry {
  std::string image_path;  // relative to the manifest directory
  std::string csv_path;
  std::string split;  // "train" or "test"
};

inline void write_manifest(const std::string& path, std::span<const ManifestEntry> entries) {
  std::string body;
  for (const ManifestEntry& e : entries) {
    body += e.image_path + "," + e.csv_path + "," + e.split + "\n";
  }
  write_text(path, body);
}

inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
  const std::vector<std::string> lines = io_detail::read_lines(path);
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto fields = io_detail::split(lines[i], ',');
    if (fields.size() != 3 || (fields[2] != "train" && fields[2] != "test")) {
      throw format_error("bad manifest line " + std::to_string(i + 1) + " in " + path);
    }
    entries.push_back({fields[0], fields[1], fields[2]});
  }
  return entries;
}

/// Write images as 8-bit PNGs with sibling center CSVs plus a manifest.
/// Returns the manifest entries (paths relative to the directory).
inline std::vector<ManifestEntry> save_dataset(const std::string& dir,
                                               std::span<const synth::AnnotatedImage> images,
                                               std::span<const std::string> splits) {
  if (images.size() != splits.size()) throw config_error("save_dataset: splits misaligned");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "images", ec);
  if (ec) throw io_error("cannot create directory: " + dir + "/images");

  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < images.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof(stem), "images/img_%04zu", i);
    ManifestEntry entry{std::string(stem) + ".png", std::string(stem) + ".csv", splits[i]};
    png::write_gray8_normalized(dir + "/" + entry.image_path, images[i].pixels);
    write_centers_csv(dir + "/" + entry.csv_path, images[i].centers);
    entries.push_back(std::move(entry));
  }
  write_manifest(dir + "/manifest.txt", entries);
  return entries;
}

/// Load every entry of a split ("train", "test", or "" for all).
inline std::vector<synth::AnnotatedImage> load_dataset(const std::string& dir,
                                                       const std::string& split = "") {
  const std::vector<ManifestEntry> entries = read_manifest(dir + "/manifest.txt");
  std::vector<synth::AnnotatedImage> images;
  for (const ManifestEntry& e : entries) {
    if (!split.empty() && e.split != split) continue;
    synth::AnnotatedImage image;
    image.pixels = png::read_gray_normalized(dir + "/" + e.image_path);
    image.centers = read_centers_csv(dir + "/" + e.csv_path);
    images.push_back(std::move(image));
  }
  return images;
}

// --- training curve --------------------------------------------------------

inline void write_loss_csv(const std::string& path, std::span<const double> epoch_mean_loss) {
  std::string body = "epoch,mean_loss\n";
  for (std::size_t i = 0; i < epoch_mean_loss.size(); ++i) {
    body += std::to_string(i + 1) + "," + io_detail::fmt("%.10g", epoch_mean_loss[i]) + "\n";
  }
  write_text(path, body);
}

// --- metrics ---------------------------------------------------------------

inline void write_metrics_csv(const std::string& path, std::span<const std::string> methods,
                              std::span<const eval::MetricsReport> reports) {
  if (methods.size() != reports.size()) throw config_error("metrics csv: rows misaligned");
  std::string body = "method,precision,recall,f1,tp,fp,fn\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const eval::MetricsReport& r = reports[i];
    body += methods[i] + "," + io_detail::fmt("%.6f", r.precision) + "," +
            io_detail::fmt("%.6f", r.recall) + "," + io_detail::fmt("%.6f", r.f1) + "," +
            std::to_string(r.tp) + "," + std::to_string(r.fp) + "," + std::to_string(r.fn) + "\n";
  }
  write_text(path, body);
}

inline std::string metrics_table(std::span<const std::string> methods,
                                 std::span<const eval::MetricsReport> reports) {
  if (methods.size() != reports.size()) throw config_error("metrics table: rows misaligned");
  std::size_t width = 8;
  for (const std::string& m : methods) width = std::max(width, m.size());
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-*s  %9s  %9s  %9s\n", static_cast<int>(width), "Method",
                "Precision", "Recall", "F1 score");
  out += line;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    std::snprintf(line, sizeof(line), "%-*s  %9.3f  %9.3f  %9.3f\n", static_cast<int>(width),
                  methods[i].c_str(), reports[i].precision, reports[i].recall, reports[i].f1);
    out += line;
  }
  return out;
}

// --- probability maps ------------------------------------------------------

/// 16-bit PNG scaled by the map maximum; the maximum goes to a sidecar
/// text file so raw values can be recovered.
inline void write_probmap_png(const std::string& png_path, const std::string& max_path,
                              const ImageF& map) {
  double peak = 0.0;
  for (double v : map.values()) peak = std::max(peak, v);
  const double scale = peak > 0.0 ? 65535.0 / peak : 0.0;
  Grid<std::uint16_t> q(map.rows(), map.cols());
  for (std::size_t i = 0; i < map.size(); ++i) {
    q.values()[i] = static_cast<std::uint16_t>(map.values()[i] * scale + 0.5);
  }
  png::write_gray16(png_path, q);
  write_text(max_path, io_detail::fmt("%.17g", peak) + "\n");
}

inline void write_probmap_csv(const std::string& path, const ImageF& map) {
  std::string body;
  body.reserve(map.size() * 12);
  for (int r = 0; r < map.rows(); ++r) {
    for (int c = 0; c < map.cols(); ++c) {
      if (c > 0) body += ",";
      body += io_detail::fmt("%.8g", map(r, c));
    }
    body += "\n";
  }
  write_text(path, body);
}

}  // namespace mdn::io
