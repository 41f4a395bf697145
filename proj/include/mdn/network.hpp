#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "mdn/errors.hpp"
#include "mdn/image.hpp"
#include "mdn/log.hpp"
#include "mdn/mixture.hpp"
#include "mdn/rng.hpp"
#include "mdn/synth.hpp"

// Convolutional backbone + mixture head. Forward evaluation and training
// run in double precision; stored weights are 32-bit. Everything is
// single-threaded and deterministic for a fixed seed.

namespace mdn {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvSpec {
  int channels = 0;
  int kernel = 3;
  int stride = 1;
};

struct NetworkConfig {
  int mixture_components = 100;  // K
  int patch_size = 50;
  int in_channels = 1;
  std::vector<ConvSpec> conv_blocks = {{16, 3, 1}, {32, 3, 2}, {64, 3, 2}, {64, 3, 2}};
  int fc_hidden = 256;
  std::uint64_t seed = 0;

  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 32;
  int epochs = 30;

  /// Width of the raw head: (c+2)K + 1 (401 for K=100).
  int head_size() const { return (kTargetDim + 2) * mixture_components + 1; }

  void validate() const {
    if (mixture_components < 1) throw config_error("config: K must be >= 1");
    if (patch_size < 1) throw config_error("config: patch_size must be >= 1");
    if (in_channels < 1) throw config_error("config: in_channels must be >= 1");
    if (fc_hidden < 1) throw config_error("config: fc_hidden must be >= 1");
    if (conv_blocks.empty()) throw config_error("config: need at least one conv block");
    if (batch_size < 1) throw config_error("config: batch_size must be >= 1");
    if (epochs < 1) throw config_error("config: epochs must be >= 1");
    if (!(learning_rate >= 0.0)) throw config_error("config: learning_rate must be >= 0");
    int side = patch_size;
    for (const ConvSpec& block : conv_blocks) {
      if (block.channels < 1 || block.kernel < 1 || block.kernel % 2 == 0 || block.stride < 1) {
        throw config_error("config: conv blocks need odd kernel, positive channels/stride");
      }
      side = (side + 2 * (block.kernel / 2) - block.kernel) / block.stride + 1;
      if (side < 1) throw config_error("config: conv stack shrinks the patch away");
    }
  }
};

struct Tensor32 {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

struct Tensor64 {
  std::string name;
  std::vector<int> shape;
  std::vector<double> data;
};

/// Serializable model: architecture, 32-bit weights, training metadata.
struct Checkpoint {
  NetworkConfig config;
  std::vector<Tensor32> tensors;
  double final_loss = 0.0;
  int trained_epochs = 0;
};

namespace net_detail {

inline int conv_out_size(int in, int kernel, int stride) {
  return (in + 2 * (kernel / 2) - kernel) / stride + 1;
}

inline std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

/// Spatial side of the final conv feature map.
inline int final_side(const NetworkConfig& cfg) {
  int side = cfg.patch_size;
  for (const ConvSpec& block : cfg.conv_blocks) {
    side = conv_out_size(side, block.kernel, block.stride);
  }
  return side;
}

/// Expected tensor names and shapes, in storage order. The final feature
/// map is flattened (not pooled) before the fully connected stage; pooling
/// would erase the positions the mixture means have to recover.
inline std::vector<Tensor64> tensor_layout(const NetworkConfig& cfg) {
  std::vector<Tensor64> tensors;
  int channels = cfg.in_channels;
  for (std::size_t i = 0; i < cfg.conv_blocks.size(); ++i) {
    const ConvSpec& block = cfg.conv_blocks[i];
    const std::string base = "conv" + std::to_string(i);
    tensors.push_back({base + ".weight", {block.kernel, block.kernel, channels, block.channels}, {}});
    tensors.push_back({base + ".bias", {block.channels}, {}});
    channels = block.channels;
  }
  const int side = final_side(cfg);
  tensors.push_back({"fc.weight", {side * side * channels, cfg.fc_hidden}, {}});
  tensors.push_back({"fc.bias", {cfg.fc_hidden}, {}});
  tensors.push_back({"head.weight", {cfg.fc_hidden, cfg.head_size()}, {}});
  tensors.push_back({"head.bias", {cfg.head_size()}, {}});
  for (Tensor64& t : tensors) t.data.assign(shape_size(t.shape), 0.0);
  return tensors;
}

// elu(x) = max(x, 0) + exp(min(x, 0)) - 1, which vectorizes.
inline void elu_inplace(MatRM& m) {
  m.array() = m.array().max(0.0) + (m.array().min(0.0)).exp() - 1.0;
}

// elu'(x) recovered from the activation a: 1 for a > 0, a + 1 = exp(x)
// otherwise; both cases collapse to min(a, 0) + 1.
inline void elu_backward_inplace(MatRM& grad, const MatRM& act) {
  grad.array() *= act.array().min(0.0) + 1.0;
}

/// Gather convolution windows into rows: input is (B*H*W) x C pixel-major,
/// cols becomes (B*Ho*Wo) x (k*k*C). Out-of-bounds taps are zero ("same"
/// padding of k/2). `cols` is a reusable workspace: in-bounds cells are
/// overwritten on every call and padding cells only ever hold zero, so the
/// buffer is zeroed just once per (re)allocation. Reuse matters; repeated
/// large allocations dominated the training profile.
inline void im2col_into(const MatRM& input, int batch, int height, int width,
                        int kernel, int stride, MatRM& cols) {
  const int channels = static_cast<int>(input.cols());
  const int pad = kernel / 2;
  const int out_h = conv_out_size(height, kernel, stride);
  const int out_w = conv_out_size(width, kernel, stride);
  const Eigen::Index patch_len = static_cast<Eigen::Index>(kernel) * kernel * channels;
  const Eigen::Index rows = static_cast<Eigen::Index>(batch) * out_h * out_w;
  if (cols.rows() != rows || cols.cols() != patch_len) {
    cols.resize(rows, patch_len);
    cols.setZero();
  }
  const double* src_base = input.data();
  double* dst_base = cols.data();
  for (int b = 0; b < batch; ++b) {
    for (int oh = 0; oh < out_h; ++oh) {
      const Eigen::Index row0 = (static_cast<Eigen::Index>(b) * out_h + oh) * out_w;
      for (int kh = 0; kh < kernel; ++kh) {
        const int ih = oh * stride - pad + kh;
        if (ih < 0 || ih >= height) continue;
        const double* src_row =
            src_base + ((static_cast<Eigen::Index>(b) * height + ih) * width) * channels;
        for (int kw = 0; kw < kernel; ++kw) {
          const Eigen::Index dst_off = (static_cast<Eigen::Index>(kh) * kernel + kw) * channels;
          // Valid ow range so that iw = ow*stride - pad + kw stays in bounds.
          const int ow_lo = std::max(0, (pad - kw + stride - 1) / stride);
          const int ow_hi = std::min(out_w - 1, (width - 1 + pad - kw) / stride);
          for (int ow = ow_lo; ow <= ow_hi; ++ow) {
            const int iw = ow * stride - pad + kw;
            std::memcpy(dst_base + (row0 + ow) * patch_len + dst_off,
                        src_row + static_cast<Eigen::Index>(iw) * channels,
                        sizeof(double) * channels);
          }
        }
      }
    }
  }
}

/// Scatter-add transpose of im2col_into; `input_grad` is zeroed and filled.
inline void col2im_into(const MatRM& cols, int batch, int height, int width,
                        int channels, int kernel, int stride, MatRM& input_grad) {
  const int pad = kernel / 2;
  const int out_h = conv_out_size(height, kernel, stride);
  const int out_w = conv_out_size(width, kernel, stride);
  const Eigen::Index patch_len = static_cast<Eigen::Index>(kernel) * kernel * channels;
  input_grad.resize(static_cast<Eigen::Index>(batch) * height * width, channels);
  input_grad.setZero();
  const double* src_base = cols.data();
  double* dst_base = input_grad.data();
  for (int b = 0; b < batch; ++b) {
    for (int oh = 0; oh < out_h; ++oh) {
      const Eigen::Index row0 = (static_cast<Eigen::Index>(b) * out_h + oh) * out_w;
      for (int kh = 0; kh < kernel; ++kh) {
        const int ih = oh * stride - pad + kh;
        if (ih < 0 || ih >= height) continue;
        double* dst_row =
            dst_base + ((static_cast<Eigen::Index>(b) * height + ih) * width) * channels;
        for (int kw = 0; kw < kernel; ++kw) {
          const Eigen::Index src_off = (static_cast<Eigen::Index>(kh) * kernel + kw) * channels;
          const int ow_lo = std::max(0, (pad - kw + stride - 1) / stride);
          const int ow_hi = std::min(out_w - 1, (width - 1 + pad - kw) / stride);
          for (int ow = ow_lo; ow <= ow_hi; ++ow) {
            const int iw = ow * stride - pad + kw;
            const double* src = src_base + (row0 + ow) * patch_len + src_off;
            double* dst = dst_row + static_cast<Eigen::Index>(iw) * channels;
            for (int c = 0; c < channels; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

/// Activations of one batch. Also serves as a reusable workspace: buffers
/// keep their allocations across calls with matching shapes.
struct ForwardCache {
  int batch = 0;
  std::vector<MatRM> cols;  // im2col inputs per conv block
  std::vector<MatRM> acts;  // post-elu outputs per conv block
  MatRM hidden;             // B x fc_hidden, post-elu
  MatRM head;               // B x head_size, linear
};

/// Backward-pass temporaries, reusable like ForwardCache.
struct BackwardScratch {
  MatRM d_hidden;
  MatRM d_flat;              // gradient at the flattened conv output
  std::vector<MatRM> d_acts; // per conv block input gradients
  std::vector<MatRM> d_cols;
};

inline Eigen::Map<const MatRM> as_matrix(const Tensor64& t, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const MatRM>(t.data.data(), rows, cols);
}

inline Eigen::Map<const Eigen::RowVectorXd> as_row(const Tensor64& t) {
  return Eigen::Map<const Eigen::RowVectorXd>(t.data.data(), static_cast<Eigen::Index>(t.data.size()));
}

inline void forward_batch(std::span<const Tensor64> weights, const NetworkConfig& cfg,
                          const MatRM& input, int batch, ForwardCache& cache) {
  cache.batch = batch;
  const int n_conv = static_cast<int>(cfg.conv_blocks.size());
  cache.cols.resize(n_conv);
  cache.acts.resize(n_conv);
  int side = cfg.patch_size;
  const MatRM* current = &input;
  for (int i = 0; i < n_conv; ++i) {
    const ConvSpec& block = cfg.conv_blocks[i];
    const int in_ch = static_cast<int>(current->cols());
    im2col_into(*current, batch, side, side, block.kernel, block.stride, cache.cols[i]);
    const auto w = as_matrix(weights[2 * i], static_cast<Eigen::Index>(block.kernel) * block.kernel * in_ch,
                             block.channels);
    cache.acts[i].noalias() = cache.cols[i] * w;
    cache.acts[i].rowwise() += as_row(weights[2 * i + 1]);
    elu_inplace(cache.acts[i]);
    side = conv_out_size(side, block.kernel, block.stride);
    current = &cache.acts[i];
  }

  // Flatten: a row-major (B*HW) x C activation block is also a row-major
  // B x (HW*C) matrix over the same storage.
  const int hw = side * side;
  const int channels = cfg.conv_blocks.back().channels;
  const Eigen::Map<const MatRM> flat(cache.acts.back().data(), batch,
                                     static_cast<Eigen::Index>(hw) * channels);

  const std::size_t fc_at = 2 * n_conv;
  cache.hidden.noalias() = flat * as_matrix(weights[fc_at],
                                            static_cast<Eigen::Index>(hw) * channels,
                                            cfg.fc_hidden);
  cache.hidden.rowwise() += as_row(weights[fc_at + 1]);
  elu_inplace(cache.hidden);

  cache.head.noalias() = cache.hidden * as_matrix(weights[fc_at + 2], cfg.fc_hidden, cfg.head_size());
  cache.head.rowwise() += as_row(weights[fc_at + 3]);
}

/// Backpropagate head gradients (B x head_size) into `grads`, which is
/// (re)initialized to the weight layout when its shapes do not match.
inline void backward_batch(std::span<const Tensor64> weights, const NetworkConfig& cfg,
                           const ForwardCache& cache, const MatRM& head_grad,
                           BackwardScratch& scratch, std::vector<Tensor64>& grads) {
  const int n_conv = static_cast<int>(cfg.conv_blocks.size());
  const std::size_t fc_at = 2 * n_conv;
  bool layout_ok = grads.size() == weights.size();
  for (std::size_t i = 0; layout_ok && i < grads.size(); ++i) {
    layout_ok = grads[i].data.size() == weights[i].data.size();
  }
  if (!layout_ok) grads = tensor_layout(cfg);
  scratch.d_acts.resize(n_conv);
  scratch.d_cols.resize(n_conv);

  std::vector<int> sides(n_conv + 1);
  sides[0] = cfg.patch_size;
  for (int i = 0; i < n_conv; ++i) {
    sides[i + 1] = conv_out_size(sides[i], cfg.conv_blocks[i].kernel, cfg.conv_blocks[i].stride);
  }

  const int channels = cfg.conv_blocks.back().channels;
  const int batch = cache.batch;

  // Head (linear).
  {
    Eigen::Map<MatRM> gw(grads[fc_at + 2].data.data(), cfg.fc_hidden, cfg.head_size());
    gw.noalias() = cache.hidden.transpose() * head_grad;
    Eigen::Map<Eigen::RowVectorXd> gb(grads[fc_at + 3].data.data(), cfg.head_size());
    gb = head_grad.colwise().sum();
  }
  scratch.d_hidden.noalias() =
      head_grad * as_matrix(weights[fc_at + 2], cfg.fc_hidden, cfg.head_size()).transpose();
  elu_backward_inplace(scratch.d_hidden, cache.hidden);

  // Fully connected over the flattened final feature map.
  const int hw = sides[n_conv] * sides[n_conv];
  const Eigen::Index flat_width = static_cast<Eigen::Index>(hw) * channels;
  const Eigen::Map<const MatRM> flat(cache.acts.back().data(), batch, flat_width);
  {
    Eigen::Map<MatRM> gw(grads[fc_at].data.data(), flat_width, cfg.fc_hidden);
    gw.noalias() = flat.transpose() * scratch.d_hidden;
    Eigen::Map<Eigen::RowVectorXd> gb(grads[fc_at + 1].data.data(), cfg.fc_hidden);
    gb = scratch.d_hidden.colwise().sum();
  }
  // d_flat is shaped (B*HW) x C; fill it through a B x (HW*C) view of the
  // same storage, mirroring the forward flatten.
  scratch.d_flat.resize(static_cast<Eigen::Index>(batch) * hw, channels);
  {
    Eigen::Map<MatRM> wide(scratch.d_flat.data(), batch, flat_width);
    wide.noalias() = scratch.d_hidden * as_matrix(weights[fc_at], flat_width, cfg.fc_hidden).transpose();
  }

  for (int i = n_conv - 1; i >= 0; --i) {
    const ConvSpec& block = cfg.conv_blocks[i];
    const int in_ch = i == 0 ? cfg.in_channels : cfg.conv_blocks[i - 1].channels;
    const Eigen::Index patch_len = static_cast<Eigen::Index>(block.kernel) * block.kernel * in_ch;
    MatRM& d_act = i == n_conv - 1 ? scratch.d_flat : scratch.d_acts[i];

    elu_backward_inplace(d_act, cache.acts[i]);
    {
      Eigen::Map<MatRM> gw(grads[2 * i].data.data(), patch_len, block.channels);
      gw.noalias() = cache.cols[i].transpose() * d_act;
      Eigen::Map<Eigen::RowVectorXd> gb(grads[2 * i + 1].data.data(), block.channels);
      gb = d_act.colwise().sum();
    }
    if (i > 0) {
      scratch.d_cols[i].noalias() =
          d_act * as_matrix(weights[2 * i], patch_len, block.channels).transpose();
      col2im_into(scratch.d_cols[i], batch, sides[i], sides[i], in_ch, block.kernel,
                  block.stride, scratch.d_acts[i - 1]);
    }
  }
}

inline MatRM patches_to_matrix(std::span<const ImageF> patches, const NetworkConfig& cfg) {
  if (cfg.in_channels != 1) {
    throw config_error("network: grayscale entry point requires in_channels=1");
  }
  const int side = cfg.patch_size;
  MatRM input(static_cast<Eigen::Index>(patches.size()) * side * side, 1);
  Eigen::Index row = 0;
  for (const ImageF& patch : patches) {
    if (patch.rows() != side || patch.cols() != side) {
      throw config_error("network: patch is " + std::to_string(patch.rows()) + "x" +
                         std::to_string(patch.cols()) + ", config expects " +
                         std::to_string(side) + "x" + std::to_string(side));
    }
    for (std::size_t i = 0; i < patch.size(); ++i) input(row++, 0) = patch.values()[i];
  }
  return input;
}

}  // namespace net_detail

/// Seeded fan-in-scaled uniform initialization. Head biases get spread-out
/// means and a small starting scale so components differentiate early.
inline std::vector<Tensor64> init_weights(const NetworkConfig& cfg) {
  cfg.validate();
  std::vector<Tensor64> tensors = net_detail::tensor_layout(cfg);
  Rng rng = Rng(cfg.seed).fork(0);
  const std::size_t n = tensors.size();
  for (std::size_t i = 0; i + 2 < n; i += 2) {
    Tensor64& w = tensors[i];
    std::size_t fan_in = 1;
    for (std::size_t d = 0; d + 1 < w.shape.size(); ++d) fan_in *= static_cast<std::size_t>(w.shape[d]);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : w.data) v = rng.uniform(-limit, limit);
  }
  {
    Tensor64& w = tensors[n - 2];  // head.weight
    const double limit = std::sqrt(6.0 / static_cast<double>(cfg.fc_hidden));
    for (double& v : w.data) v = rng.uniform(-limit, limit);
  }
  {
    Tensor64& b = tensors[n - 1];  // head.bias
    const int k_count = cfg.mixture_components;
    for (int k = 0; k < k_count; ++k) {
      b.data[k_count + 2 * k] = rng.uniform(0.15, 0.85);
      b.data[k_count + 2 * k + 1] = rng.uniform(0.15, 0.85);
      b.data[3 * k_count + k] = std::log(0.1);
    }
  }
  return tensors;
}

/// Immutable forward evaluator over a checkpoint. Reentrant; distinct
/// patches may be evaluated concurrently on the same instance.
class Predictor {
 public:
  explicit Predictor(const Checkpoint& ckpt) : cfg_(ckpt.config) {
    cfg_.validate();
    std::vector<Tensor64> expected = net_detail::tensor_layout(cfg_);
    if (ckpt.tensors.size() != expected.size()) {
      throw format_error("checkpoint tensors do not match architecture");
    }
    weights_.reserve(expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
      const Tensor32& src = ckpt.tensors[i];
      if (src.name != expected[i].name || src.shape != expected[i].shape ||
          src.data.size() != expected[i].data.size()) {
        throw format_error("checkpoint tensor mismatch at " + expected[i].name);
      }
      Tensor64 t{src.name, src.shape, std::vector<double>(src.data.begin(), src.data.end())};
      weights_.push_back(std::move(t));
    }
  }

  RawHeadOutput forward(const ImageF& patch) const {
    thread_local net_detail::ForwardCache cache;
    const MatRM input = net_detail::patches_to_matrix({&patch, 1}, cfg_);
    net_detail::forward_batch(weights_, cfg_, input, 1, cache);
    RawHeadOutput raw;
    raw.values.assign(cache.head.data(), cache.head.data() + cache.head.cols());
    return raw;
  }

  MixtureParams predict(const ImageF& patch) const {
    return constrain(forward(patch), cfg_.mixture_components);
  }

  const NetworkConfig& config() const { return cfg_; }

 private:
  NetworkConfig cfg_;
  std::vector<Tensor64> weights_;
};

/// Deterministic single-patch evaluation of a checkpoint.
inline RawHeadOutput forward(const Checkpoint& ckpt, const ImageF& patch) {
  return Predictor(ckpt).forward(patch);
}

struct TrainingBatch {
  std::vector<ImageF> patches;
  std::vector<TargetSet> targets;
};

/// Mutable weights plus first-order optimizer state.
struct TrainState {
  NetworkConfig config;
  std::vector<Tensor64> weights;
  std::vector<Tensor64> adam_m;
  std::vector<Tensor64> adam_v;
  std::int64_t step_count = 0;

  static TrainState init(const NetworkConfig& cfg) {
    TrainState state;
    state.config = cfg;
    state.weights = init_weights(cfg);
    state.adam_m = net_detail::tensor_layout(cfg);
    state.adam_v = net_detail::tensor_layout(cfg);
    return state;
  }

  Checkpoint to_checkpoint(double final_loss = 0.0, int trained_epochs = 0) const {
    Checkpoint ckpt;
    ckpt.config = config;
    ckpt.final_loss = final_loss;
    ckpt.trained_epochs = trained_epochs;
    for (const Tensor64& t : weights) {
      Tensor32 out{t.name, t.shape, std::vector<float>(t.data.begin(), t.data.end())};
      ckpt.tensors.push_back(std::move(out));
    }
    return ckpt;
  }
};

/// Summed batch loss, and (optionally) its gradient with respect to every
/// weight tensor. The gradient is of the sum, not the mean.
inline double batch_loss_and_weight_grads(std::span<const Tensor64> weights,
                                          const NetworkConfig& cfg,
                                          const TrainingBatch& batch,
                                          std::vector<Tensor64>* grads_out) {
  if (batch.patches.empty()) throw config_error("network: empty batch");
  if (batch.patches.size() != batch.targets.size()) {
    throw config_error("network: batch patches/targets misaligned");
  }
  const int b_count = static_cast<int>(batch.patches.size());
  thread_local net_detail::ForwardCache cache;
  thread_local net_detail::BackwardScratch scratch;
  const MatRM input = net_detail::patches_to_matrix(batch.patches, cfg);
  net_detail::forward_batch(weights, cfg, input, b_count, cache);

  MatRM head_grad(b_count, cfg.head_size());
  double loss = 0.0;
  RawHeadOutput raw;
  for (int b = 0; b < b_count; ++b) {
    raw.values.assign(cache.head.row(b).data(), cache.head.row(b).data() + cfg.head_size());
    std::span<double> grad_row(head_grad.row(b).data(), static_cast<std::size_t>(cfg.head_size()));
    loss += loss_and_grad_raw(raw, batch.targets[b], cfg.mixture_components, grad_row);
  }
  if (grads_out != nullptr) {
    net_detail::backward_batch(weights, cfg, cache, head_grad, scratch, *grads_out);
  }
  return loss;
}

/// One optimizer step. Returns the pre-step summed batch loss. Gradients
/// are averaged over the batch before the adaptive-moment update.
inline double train_step(TrainState& state, const TrainingBatch& batch) {
  thread_local std::vector<Tensor64> grads;
  const double loss = batch_loss_and_weight_grads(state.weights, state.config, batch, &grads);
  if (!std::isfinite(loss)) {
    throw numeric_error("training diverged: non-finite batch loss; try a lower "
                        "learning rate (current " +
                        std::to_string(state.config.learning_rate) + ")");
  }

  const double inv_batch = 1.0 / static_cast<double>(batch.patches.size());
  const NetworkConfig& cfg = state.config;
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.step_count));
  for (std::size_t t = 0; t < state.weights.size(); ++t) {
    std::vector<double>& w = state.weights[t].data;
    std::vector<double>& m = state.adam_m[t].data;
    std::vector<double>& v = state.adam_v[t].data;
    const std::vector<double>& g = grads[t].data;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] * inv_batch;
      m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * gi;
      v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * gi * gi;
      w[i] -= cfg.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.adam_eps);
    }
  }
  return loss;
}

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> epoch_mean_loss;
};

/// Deterministic training over patch records: seeded init, seeded
/// shuffling, fixed batch order. Emits the per-epoch mean patch loss.
inline TrainResult train(std::span<const synth::PatchRecord> dataset, const NetworkConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw config_error("train: dataset is empty");

  TrainState state = TrainState::init(cfg);
  Rng shuffle_rng = Rng(cfg.seed).fork(1);

  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      TrainingBatch batch;
      batch.patches.reserve(end - begin);
      batch.targets.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        batch.patches.push_back(dataset[order[i]].pixels);
        batch.targets.push_back(dataset[order[i]].targets);
      }
      epoch_loss += train_step(state, batch);
    }
    const double mean_loss = epoch_loss / static_cast<double>(dataset.size());
    result.epoch_mean_loss.push_back(mean_loss);
    log::info("epoch %d/%d mean loss %.6f", epoch + 1, cfg.epochs, mean_loss);
  }

  result.checkpoint = state.to_checkpoint(result.epoch_mean_loss.back(), cfg.epochs);
  return result;
}

}  // namespace mdn
