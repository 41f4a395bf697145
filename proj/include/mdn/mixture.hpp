#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mdn/errors.hpp"
#include "mdn/image.hpp"

// Mixture head math: parameter constraints, densities, the gated
// negative log-likelihood, responsibilities, and its exact gradient with
// respect to the pre-activation head outputs.
//
// Coordinate convention: component means, scales and target points live in
// normalized patch coordinates (unit = one patch side). Conversion to
// pixels happens only when rendering probability maps.

namespace mdn {

/// Dimensionality of a target point.
inline constexpr int kTargetDim = 2;

/// Lower bound on component scales, in normalized units (0.05 px on a
/// 50 px patch). Keeps densities bounded when a scale logit dives.
inline constexpr double kSigmaFloor = 1e-3;

/// Clamp on the object gate so both -ln(e) and -ln(1-e) stay finite.
inline constexpr double kGateEps = 1e-12;

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

/// Pre-activation head output for K components, laid out as
///   [0, K)    alpha logits
///   [K, 3K)   component means, (x, y) pairs
///   [3K, 4K)  scale logits
///   [4K]      gate logit
struct RawHeadOutput {
  std::vector<double> values;

  static std::size_t expected_size(int component_count) {
    return static_cast<std::size_t>(kTargetDim + 2) * component_count + 1;
  }
};

/// Constrained per-patch mixture: weights on the simplex, free means,
/// floored scales, and the probability that the patch holds any object.
struct MixtureParams {
  std::vector<double> alphas;
  std::vector<Vec2> mus;
  std::vector<double> sigmas;
  double gate_e = 0.5;

  int component_count() const { return static_cast<int>(alphas.size()); }
};

/// Target points for one patch, in normalized coordinates.
struct TargetSet {
  std::vector<Vec2> points;

  bool has_object() const { return !points.empty(); }
};

namespace detail {

inline double log_sum_exp(std::span<const double> values) {
  double peak = -std::numeric_limits<double>::infinity();
  for (double v : values) peak = std::max(peak, v);
  if (!std::isfinite(peak)) return peak;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - peak);
  return peak + std::log(acc);
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// ln of the isotropic Gaussian kernel.
inline double log_kernel(Vec2 mu, double sigma, Vec2 t) {
  const double d2 = squared_norm(t - mu);
  return -(kTargetDim / 2.0) * std::log(kTwoPi) - kTargetDim * std::log(sigma) -
         d2 / (2.0 * sigma * sigma);
}

inline void check_raw(const RawHeadOutput& raw, int component_count) {
  if (component_count < 1) throw config_error("mixture: component count must be >= 1");
  const std::size_t want = RawHeadOutput::expected_size(component_count);
  if (raw.values.size() != want) {
    throw config_error("mixture: raw head has " + std::to_string(raw.values.size()) +
                       " values, expected " + std::to_string(want) + " for K=" +
                       std::to_string(component_count));
  }
  for (double v : raw.values) {
    if (!std::isfinite(v)) throw numeric_error("mixture: non-finite head output");
  }
}

}  // namespace detail

/// Map raw head outputs to valid mixture parameters: softmax for the
/// weights, identity for the means, floor + exp for the scales, logistic
/// for the gate. Smooth everywhere.
inline MixtureParams constrain(const RawHeadOutput& raw, int component_count) {
  detail::check_raw(raw, component_count);
  const int k_count = component_count;
  const double* v = raw.values.data();

  MixtureParams params;
  params.alphas.resize(k_count);
  params.mus.resize(k_count);
  params.sigmas.resize(k_count);

  double peak = v[0];
  for (int k = 1; k < k_count; ++k) peak = std::max(peak, v[k]);
  double total = 0.0;
  for (int k = 0; k < k_count; ++k) {
    params.alphas[k] = std::exp(v[k] - peak);
    total += params.alphas[k];
  }
  for (int k = 0; k < k_count; ++k) params.alphas[k] /= total;

  for (int k = 0; k < k_count; ++k) {
    params.mus[k] = {v[k_count + 2 * k], v[k_count + 2 * k + 1]};
    params.sigmas[k] = kSigmaFloor + std::exp(v[3 * k_count + k]);
  }
  params.gate_e = std::clamp(detail::sigmoid(v[4 * k_count]), kGateEps, 1.0 - kGateEps);
  return params;
}

/// Isotropic Gaussian density at t.
inline double kernel_density(Vec2 mu, double sigma, Vec2 t) {
  if (!(sigma > 0.0)) throw std::domain_error("kernel_density: sigma must be positive");
  return std::exp(detail::log_kernel(mu, sigma, t));
}

inline double mixture_density(const MixtureParams& params, Vec2 t) {
  double acc = 0.0;
  for (int k = 0; k < params.component_count(); ++k) {
    acc += params.alphas[k] * kernel_density(params.mus[k], params.sigmas[k], t);
  }
  return acc;
}

/// ln of mixture_density, evaluated with log-sum-exp so far-away targets
/// and tiny scales do not underflow to -inf.
inline double log_mixture_density(const MixtureParams& params, Vec2 t) {
  const int k_count = params.component_count();
  std::vector<double> z(k_count);
  for (int k = 0; k < k_count; ++k) {
    z[k] = std::log(params.alphas[k]) +
           detail::log_kernel(params.mus[k], params.sigmas[k], t);
  }
  return detail::log_sum_exp(z);
}

/// Posterior component weights at t; sums to 1.
inline std::vector<double> responsibilities(const MixtureParams& params, Vec2 t) {
  const int k_count = params.component_count();
  std::vector<double> z(k_count);
  for (int k = 0; k < k_count; ++k) {
    z[k] = std::log(params.alphas[k]) +
           detail::log_kernel(params.mus[k], params.sigmas[k], t);
  }
  const double lse = detail::log_sum_exp(z);
  std::vector<double> out(k_count);
  for (int k = 0; k < k_count; ++k) out[k] = std::exp(z[k] - lse);
  return out;
}

/// Gate contribution of one patch: -ln e if it holds an object, else -ln(1-e).
inline double gate_nll(double gate_e, bool has_object) {
  return -std::log(has_object ? gate_e : 1.0 - gate_e);
}

/// Mixture contribution of one patch: sum over targets of -ln p(t).
/// Empty target sets contribute zero.
inline double patch_mixture_nll(const MixtureParams& params, const TargetSet& targets) {
  double acc = 0.0;
  for (const Vec2& t : targets.points) acc -= log_mixture_density(params, t);
  return acc;
}

/// Gated negative log-likelihood summed over a batch of patches.
inline double nll_loss(std::span<const MixtureParams> params_batch,
                       std::span<const TargetSet> targets_batch) {
  if (params_batch.size() != targets_batch.size()) {
    throw config_error("nll_loss: params/targets batches are misaligned (" +
                       std::to_string(params_batch.size()) + " vs " +
                       std::to_string(targets_batch.size()) + ")");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < params_batch.size(); ++i) {
    total += patch_mixture_nll(params_batch[i], targets_batch[i]) +
             gate_nll(params_batch[i].gate_e, targets_batch[i].has_object());
  }
  return total;
}

/// Loss of one patch and its gradient with respect to the raw head
/// outputs, chained through `constrain`. grad_out must match raw in size;
/// it is overwritten. Returns the patch loss.
inline double loss_and_grad_raw(const RawHeadOutput& raw, const TargetSet& targets,
                                int component_count, std::span<double> grad_out) {
  detail::check_raw(raw, component_count);
  const int k_count = component_count;
  if (grad_out.size() != raw.values.size()) {
    throw config_error("loss_and_grad_raw: gradient buffer size mismatch");
  }
  const double* v = raw.values.data();
  std::fill(grad_out.begin(), grad_out.end(), 0.0);

  // Log-softmax of the alpha logits.
  std::vector<double> log_alpha(k_count);
  {
    double peak = v[0];
    for (int k = 1; k < k_count; ++k) peak = std::max(peak, v[k]);
    double total = 0.0;
    for (int k = 0; k < k_count; ++k) total += std::exp(v[k] - peak);
    const double lse = peak + std::log(total);
    for (int k = 0; k < k_count; ++k) log_alpha[k] = v[k] - lse;
  }

  std::vector<double> sigma(k_count);
  for (int k = 0; k < k_count; ++k) sigma[k] = kSigmaFloor + std::exp(v[3 * k_count + k]);

  double loss = 0.0;
  std::vector<double> z(k_count);
  for (const Vec2& t : targets.points) {
    for (int k = 0; k < k_count; ++k) {
      const Vec2 mu{v[k_count + 2 * k], v[k_count + 2 * k + 1]};
      z[k] = log_alpha[k] + detail::log_kernel(mu, sigma[k], t);
    }
    const double lse = detail::log_sum_exp(z);
    loss -= lse;
    for (int k = 0; k < k_count; ++k) {
      const double pi = std::exp(z[k] - lse);
      const double alpha = std::exp(log_alpha[k]);
      const double s = sigma[k];
      const Vec2 mu{v[k_count + 2 * k], v[k_count + 2 * k + 1]};
      const Vec2 diff = mu - t;

      grad_out[k] += alpha - pi;
      grad_out[k_count + 2 * k] += pi * diff.x / (s * s);
      grad_out[k_count + 2 * k + 1] += pi * diff.y / (s * s);
      // d sigma / d logit = sigma - floor.
      grad_out[3 * k_count + k] +=
          pi * (kTargetDim - squared_norm(diff) / (s * s)) * (s - kSigmaFloor) / s;
    }
  }

  const double gate = std::clamp(detail::sigmoid(v[4 * k_count]), kGateEps, 1.0 - kGateEps);
  const bool has_object = targets.has_object();
  loss += gate_nll(gate, has_object);
  grad_out[4 * k_count] = has_object ? gate - 1.0 : gate;
  return loss;
}

/// Gradient of nll_loss(constrain(raw), targets) with respect to raw.
inline std::vector<double> loss_grad_raw(const RawHeadOutput& raw, const TargetSet& targets,
                                         int component_count) {
  std::vector<double> grad(raw.values.size());
  loss_and_grad_raw(raw, targets, component_count, grad);
  return grad;
}

}  // namespace mdn
