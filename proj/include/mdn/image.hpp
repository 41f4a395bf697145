#pragma once

#include <cassert>
#include <cmath>
#include <vector>

#include "mdn/errors.hpp"

namespace mdn {

/// 2-D point. x runs along columns, y along rows; the origin is the
/// top-left corner of the image or patch.
struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
inline bool operator==(Vec2 a, Vec2 b) { return a.x == b.x && a.y == b.y; }

inline double squared_norm(Vec2 v) { return v.x * v.x + v.y * v.y; }
inline double norm(Vec2 v) { return std::sqrt(squared_norm(v)); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }

/// Dense row-major grid.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols),
        data_(static_cast<std::size_t>(rows) * cols, fill) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int r, int c) {
    assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }
  const T& operator()(int r, int c) const {
    assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

/// Grayscale raster with values in [0, 1].
using ImageF = Grid<double>;

/// Start offsets of windows covering [0, extent). Windows step by `stride`
/// and the last one is clamped to the border, so every index is covered.
inline std::vector<int> tile_offsets(int extent, int window, int stride) {
  if (window <= 0 || extent < window) {
    throw config_error("tile_offsets: extent smaller than window");
  }
  if (stride < 1) throw config_error("tile_offsets: stride must be >= 1");
  std::vector<int> offsets;
  for (int off = 0; off + window <= extent; off += stride) offsets.push_back(off);
  if (offsets.back() + window < extent) offsets.push_back(extent - window);
  return offsets;
}

inline ImageF crop(const ImageF& image, int row0, int col0, int rows, int cols) {
  if (row0 < 0 || col0 < 0 || row0 + rows > image.rows() || col0 + cols > image.cols()) {
    throw config_error("crop: window outside image bounds");
  }
  ImageF out(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) out(r, c) = image(row0 + r, col0 + c);
  }
  return out;
}

}  // namespace mdn
