#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mdn/errors.hpp"
#include "mdn/network.hpp"

// Checkpoint file format ("MDNC", version 1), all little-endian:
//   magic[4] | u32 version
//   u32 K | u32 patch_size | u32 in_channels | u32 fc_hidden
//   u32 n_conv | n_conv x (u32 channels, u32 kernel, u32 stride)
//   u32 activation (0 = elu) | u64 seed
//   f64 learning_rate | f64 beta1 | f64 beta2 | f64 eps
//   u32 batch_size | u32 epochs
//   f64 final_loss | u32 trained_epochs
//   u32 tensor_count | per tensor:
//     u16 name_len, name bytes, u32 ndim, ndim x u32 dims, f32 data

namespace mdn {

namespace ckpt_detail {

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

constexpr char kMagic[4] = {'M', 'D', 'N', 'C'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void u16(std::uint16_t v) { raw(&v, 2); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void f32(float v) { raw(&v, 4); }
  void f64(double v) { raw(&v, 8); }
  void bytes(const void* p, std::size_t n) { raw_ptr(p, n); }

  const std::vector<std::uint8_t>& buffer() const { return buf_; }

 private:
  template <typename T>
  void raw(const T* v, std::size_t n) { raw_ptr(v, n); }
  void raw_ptr(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size, std::string path)
      : data_(data), size_(size), path_(std::move(path)) {}

  std::uint16_t u16() { return get<std::uint16_t>(); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  float f32() { return get<float>(); }
  double f64() { return get<double>(); }

  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }

  void floats(float* out, std::size_t count) {
    need(count * 4);
    std::memcpy(out, data_ + pos_, count * 4);
    pos_ += count * 4;
  }

 private:
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void need(std::size_t n) {
    if (pos_ + n > size_) throw format_error("truncated checkpoint: " + path_);
  }
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::string path_;
};

}  // namespace ckpt_detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  ckpt_detail::Writer w;
  w.bytes(ckpt_detail::kMagic, 4);
  w.u32(ckpt_detail::kVersion);

  const NetworkConfig& cfg = ckpt.config;
  w.u32(static_cast<std::uint32_t>(cfg.mixture_components));
  w.u32(static_cast<std::uint32_t>(cfg.patch_size));
  w.u32(static_cast<std::uint32_t>(cfg.in_channels));
  w.u32(static_cast<std::uint32_t>(cfg.fc_hidden));
  w.u32(static_cast<std::uint32_t>(cfg.conv_blocks.size()));
  for (const ConvSpec& block : cfg.conv_blocks) {
    w.u32(static_cast<std::uint32_t>(block.channels));
    w.u32(static_cast<std::uint32_t>(block.kernel));
    w.u32(static_cast<std::uint32_t>(block.stride));
  }
  w.u32(0);  // activation: elu
  w.u64(cfg.seed);
  w.f64(cfg.learning_rate);
  w.f64(cfg.adam_beta1);
  w.f64(cfg.adam_beta2);
  w.f64(cfg.adam_eps);
  w.u32(static_cast<std::uint32_t>(cfg.batch_size));
  w.u32(static_cast<std::uint32_t>(cfg.epochs));
  w.f64(ckpt.final_loss);
  w.u32(static_cast<std::uint32_t>(ckpt.trained_epochs));

  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const Tensor32& t : ckpt.tensors) {
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) w.u32(static_cast<std::uint32_t>(d));
    w.bytes(t.data.data(), t.data.size() * 4);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(w.buffer().data()),
            static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw io_error("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  ckpt_detail::Reader r(bytes.data(), bytes.size(), path);

  const std::string magic = r.str(4);
  if (std::memcmp(magic.data(), ckpt_detail::kMagic, 4) != 0) {
    throw format_error("not a checkpoint file (bad magic): " + path);
  }
  const std::uint32_t version = r.u32();
  if (version != ckpt_detail::kVersion) {
    throw format_error("unsupported checkpoint version " + std::to_string(version) +
                       ": " + path);
  }

  Checkpoint ckpt;
  NetworkConfig& cfg = ckpt.config;
  cfg.mixture_components = static_cast<int>(r.u32());
  cfg.patch_size = static_cast<int>(r.u32());
  cfg.in_channels = static_cast<int>(r.u32());
  cfg.fc_hidden = static_cast<int>(r.u32());
  const std::uint32_t n_conv = r.u32();
  if (n_conv > 64) throw format_error("implausible conv block count: " + path);
  cfg.conv_blocks.clear();
  for (std::uint32_t i = 0; i < n_conv; ++i) {
    ConvSpec block;
    block.channels = static_cast<int>(r.u32());
    block.kernel = static_cast<int>(r.u32());
    block.stride = static_cast<int>(r.u32());
    cfg.conv_blocks.push_back(block);
  }
  const std::uint32_t activation = r.u32();
  if (activation != 0) throw format_error("unsupported activation id: " + path);
  cfg.seed = r.u64();
  cfg.learning_rate = r.f64();
  cfg.adam_beta1 = r.f64();
  cfg.adam_beta2 = r.f64();
  cfg.adam_eps = r.f64();
  cfg.batch_size = static_cast<int>(r.u32());
  cfg.epochs = static_cast<int>(r.u32());
  ckpt.final_loss = r.f64();
  ckpt.trained_epochs = static_cast<int>(r.u32());

  const std::uint32_t tensor_count = r.u32();
  if (tensor_count > 4096) throw format_error("implausible tensor count: " + path);
  for (std::uint32_t i = 0; i < tensor_count; ++i) {
    Tensor32 t;
    const std::uint16_t name_len = r.u16();
    t.name = r.str(name_len);
    const std::uint32_t ndim = r.u32();
    if (ndim > 8) throw format_error("implausible tensor rank: " + path);
    std::size_t count = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const std::uint32_t dim = r.u32();
      t.shape.push_back(static_cast<int>(dim));
      count *= dim;
    }
    if (count > (1u << 28)) throw format_error("implausible tensor size: " + path);
    t.data.resize(count);
    r.floats(t.data.data(), count);
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

}  // namespace mdn
