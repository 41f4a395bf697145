#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mdn/errors.hpp"
#include "mdn/image.hpp"

// Grayscale PNG reader/writer covering the subset this project emits:
// bit depth 8 or 16, color type 0, no interlacing. Output bytes are
// deterministic (fixed zlib level, filter type 0 on every scanline).

namespace mdn::png {

struct GrayImage {
  int width = 0;
  int height = 0;
  int bit_depth = 8;                 // 8 or 16
  std::vector<std::uint16_t> pixels; // row-major samples
};

namespace detail {

inline void put_u32be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint32_t get_u32be(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

inline void append_chunk(std::vector<std::uint8_t>& out, const char* tag,
                         const std::uint8_t* data, std::size_t n) {
  put_u32be(out, static_cast<std::uint32_t>(n));
  const std::size_t tag_start = out.size();
  out.insert(out.end(), tag, tag + 4);
  if (n > 0) out.insert(out.end(), data, data + n);
  const std::uint32_t crc = static_cast<std::uint32_t>(
      ::crc32(0L, out.data() + tag_start, static_cast<uInt>(n + 4)));
  put_u32be(out, crc);
}

inline const std::uint8_t* signature() {
  static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  return sig;
}

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw io_error("write failed: " + path);
}

inline void write_gray(const std::string& path, int width, int height,
                       int bit_depth, const std::uint16_t* samples) {
  if (width <= 0 || height <= 0) throw config_error("png: empty image");
  const int bytes_per_sample = bit_depth / 8;
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(height) * (1 + std::size_t(width) * bytes_per_sample));
  for (int r = 0; r < height; ++r) {
    raw.push_back(0);  // filter: none
    for (int c = 0; c < width; ++c) {
      const std::uint16_t v = samples[static_cast<std::size_t>(r) * width + c];
      if (bit_depth == 16) raw.push_back(static_cast<std::uint8_t>(v >> 8));
      raw.push_back(static_cast<std::uint8_t>(v & 0xff));
    }
  }

  uLongf compressed_cap = ::compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> compressed(compressed_cap);
  if (::compress2(compressed.data(), &compressed_cap, raw.data(),
                  static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw io_error("png: compression failed");
  }
  compressed.resize(compressed_cap);

  std::uint8_t ihdr[13];
  ihdr[0] = static_cast<std::uint8_t>(width >> 24);
  ihdr[1] = static_cast<std::uint8_t>(width >> 16);
  ihdr[2] = static_cast<std::uint8_t>(width >> 8);
  ihdr[3] = static_cast<std::uint8_t>(width);
  ihdr[4] = static_cast<std::uint8_t>(height >> 24);
  ihdr[5] = static_cast<std::uint8_t>(height >> 16);
  ihdr[6] = static_cast<std::uint8_t>(height >> 8);
  ihdr[7] = static_cast<std::uint8_t>(height);
  ihdr[8] = static_cast<std::uint8_t>(bit_depth);
  ihdr[9] = 0;   // color type: grayscale
  ihdr[10] = 0;  // compression
  ihdr[11] = 0;  // filter method
  ihdr[12] = 0;  // interlace

  std::vector<std::uint8_t> file(signature(), signature() + 8);
  append_chunk(file, "IHDR", ihdr, sizeof(ihdr));
  append_chunk(file, "IDAT", compressed.data(), compressed.size());
  append_chunk(file, "IEND", nullptr, 0);
  write_file(path, file);
}

inline std::uint8_t paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return static_cast<std::uint8_t>(a);
  if (pb <= pc) return static_cast<std::uint8_t>(b);
  return static_cast<std::uint8_t>(c);
}

}  // namespace detail

inline void write_gray8(const std::string& path, const Grid<std::uint8_t>& image) {
  std::vector<std::uint16_t> wide(image.values().begin(), image.values().end());
  detail::write_gray(path, image.cols(), image.rows(), 8, wide.data());
}

inline void write_gray16(const std::string& path, const Grid<std::uint16_t>& image) {
  detail::write_gray(path, image.cols(), image.rows(), 16, image.data());
}

inline GrayImage read_gray(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());

  if (bytes.size() < 8 || std::memcmp(bytes.data(), detail::signature(), 8) != 0) {
    throw format_error("not a png file: " + path);
  }

  GrayImage img;
  std::vector<std::uint8_t> idat;
  bool have_ihdr = false, have_iend = false;
  std::size_t pos = 8;
  while (!have_iend) {
    if (pos + 12 > bytes.size()) throw format_error("truncated png: " + path);
    const std::uint32_t len = detail::get_u32be(&bytes[pos]);
    if (pos + 12 + len > bytes.size()) throw format_error("truncated png: " + path);
    const std::uint8_t* tag = &bytes[pos + 4];
    const std::uint8_t* data = &bytes[pos + 8];
    const std::uint32_t crc_stored = detail::get_u32be(data + len);
    const std::uint32_t crc_actual = static_cast<std::uint32_t>(
        ::crc32(0L, tag, static_cast<uInt>(len + 4)));
    if (crc_stored != crc_actual) throw format_error("png crc mismatch: " + path);

    if (std::memcmp(tag, "IHDR", 4) == 0) {
      if (len != 13) throw format_error("bad IHDR: " + path);
      img.width = static_cast<int>(detail::get_u32be(data));
      img.height = static_cast<int>(detail::get_u32be(data + 4));
      img.bit_depth = data[8];
      const int color_type = data[9];
      if (img.width <= 0 || img.height <= 0) throw format_error("bad png dimensions: " + path);
      if (color_type != 0) throw format_error("unsupported png (grayscale only): " + path);
      if (img.bit_depth != 8 && img.bit_depth != 16) {
        throw format_error("unsupported png bit depth: " + path);
      }
      if (data[10] != 0 || data[11] != 0 || data[12] != 0) {
        throw format_error("unsupported png encoding: " + path);
      }
      have_ihdr = true;
    } else if (std::memcmp(tag, "IDAT", 4) == 0) {
      if (!have_ihdr) throw format_error("png IDAT before IHDR: " + path);
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(tag, "IEND", 4) == 0) {
      have_iend = true;
    }
    pos += 12 + len;
  }
  if (!have_ihdr || idat.empty()) throw format_error("png missing image data: " + path);

  const int bpp = img.bit_depth / 8;  // bytes per pixel
  const std::size_t row_bytes = static_cast<std::size_t>(img.width) * bpp;
  const std::size_t expected = static_cast<std::size_t>(img.height) * (1 + row_bytes);
  std::vector<std::uint8_t> raw(expected);
  uLongf raw_len = static_cast<uLongf>(expected);
  if (::uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != expected) {
    throw format_error("corrupt png data: " + path);
  }

  // Undo per-row filtering.
  std::vector<std::uint8_t> prev(row_bytes, 0);
  std::vector<std::uint8_t> cur(row_bytes);
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
  for (int r = 0; r < img.height; ++r) {
    const std::uint8_t* src = &raw[static_cast<std::size_t>(r) * (1 + row_bytes)];
    const int filter = src[0];
    ++src;
    for (std::size_t i = 0; i < row_bytes; ++i) {
      const int a = i >= static_cast<std::size_t>(bpp) ? cur[i - bpp] : 0;
      const int b = prev[i];
      const int c = i >= static_cast<std::size_t>(bpp) ? prev[i - bpp] : 0;
      int x = src[i];
      switch (filter) {
        case 0: break;
        case 1: x += a; break;
        case 2: x += b; break;
        case 3: x += (a + b) / 2; break;
        case 4: x += detail::paeth(a, b, c); break;
        default: throw format_error("bad png filter type: " + path);
      }
      cur[i] = static_cast<std::uint8_t>(x & 0xff);
    }
    for (int col = 0; col < img.width; ++col) {
      const std::size_t at = static_cast<std::size_t>(r) * img.width + col;
      if (bpp == 1) {
        img.pixels[at] = cur[col];
      } else {
        img.pixels[at] = static_cast<std::uint16_t>((cur[2 * col] << 8) | cur[2 * col + 1]);
      }
    }
    std::swap(prev, cur);
  }
  return img;
}

/// Load a grayscale PNG as an intensity raster in [0, 1].
inline ImageF read_gray_normalized(const std::string& path) {
  const GrayImage img = read_gray(path);
  const double scale = img.bit_depth == 8 ? 255.0 : 65535.0;
  ImageF out(img.height, img.width);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    out.values()[i] = static_cast<double>(img.pixels[i]) / scale;
  }
  return out;
}

/// Quantize [0, 1] intensities to an 8-bit grayscale PNG.
inline void write_gray8_normalized(const std::string& path, const ImageF& image) {
  Grid<std::uint8_t> q(image.rows(), image.cols());
  for (std::size_t i = 0; i < image.size(); ++i) {
    double v = image.values()[i];
    v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    q.values()[i] = static_cast<std::uint8_t>(v * 255.0 + 0.5);
  }
  write_gray8(path, q);
}

}  // namespace mdn::png
