#pragma once

// Independent reference implementations used only by the tests. These stay
// deliberately naive (direct products, exhaustive search, quadrature) so
// they cannot share bugs with the library code they check.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "mdn/image.hpp"
#include "mdn/mixture.hpp"

namespace oracles {

/// Direct mixture density: sum of alpha * gaussian, no log-sum-exp.
inline double direct_density(const mdn::MixtureParams& p, mdn::Vec2 t) {
  double acc = 0.0;
  for (int k = 0; k < p.component_count(); ++k) {
    const double dx = t.x - p.mus[k].x;
    const double dy = t.y - p.mus[k].y;
    const double s2 = p.sigmas[k] * p.sigmas[k];
    acc += p.alphas[k] * std::exp(-(dx * dx + dy * dy) / (2.0 * s2)) /
           (2.0 * 3.14159265358979323846 * s2);
  }
  return acc;
}

/// Naive negative log-likelihood: -ln of the direct density per target,
/// plus the gate term when requested.
inline double naive_nll(std::span<const mdn::MixtureParams> params,
                        std::span<const mdn::TargetSet> targets, bool include_gate) {
  double total = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (const mdn::Vec2& t : targets[i].points) {
      total -= std::log(direct_density(params[i], t));
    }
    if (include_gate) {
      total -= std::log(targets[i].has_object() ? params[i].gate_e : 1.0 - params[i].gate_e);
    }
  }
  return total;
}

/// Central finite differences of the patch loss through the constraint
/// mapping, coordinate by coordinate.
inline std::vector<double> fd_loss_grad(const mdn::RawHeadOutput& raw,
                                        const mdn::TargetSet& targets, int k_count,
                                        double step = 1e-4) {
  const auto loss_at = [&](const mdn::RawHeadOutput& r) {
    const mdn::MixtureParams p = mdn::constrain(r, k_count);
    return mdn::patch_mixture_nll(p, targets) + mdn::gate_nll(p.gate_e, targets.has_object());
  };
  std::vector<double> grad(raw.values.size());
  for (std::size_t i = 0; i < raw.values.size(); ++i) {
    mdn::RawHeadOutput plus = raw, minus = raw;
    plus.values[i] += step;
    minus.values[i] -= step;
    grad[i] = (loss_at(plus) - loss_at(minus)) / (2.0 * step);
  }
  return grad;
}

/// Midpoint-rule mass of the mixture over [lo, hi]^2.
inline double quadrature_mass(const mdn::MixtureParams& p, double lo, double hi, int n) {
  const double h = (hi - lo) / n;
  double mass = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      mass += direct_density(p, {lo + (i + 0.5) * h, lo + (j + 0.5) * h});
    }
  }
  return mass * h * h;
}

struct BruteMatch {
  int cardinality = 0;
  double total_dist = 0.0;
};

namespace detail {

inline void brute_match_rec(std::span<const mdn::Vec2> dets, std::span<const mdn::Vec2> gts,
                            double radius, std::size_t i, std::vector<bool>& used,
                            int cardinality, double total, BruteMatch& best) {
  if (i == dets.size()) {
    if (cardinality > best.cardinality ||
        (cardinality == best.cardinality && total < best.total_dist)) {
      best = {cardinality, total};
    }
    return;
  }
  brute_match_rec(dets, gts, radius, i + 1, used, cardinality, total, best);
  for (std::size_t j = 0; j < gts.size(); ++j) {
    if (used[j]) continue;
    const double d = mdn::distance(dets[i], gts[j]);
    if (d > radius) continue;
    used[j] = true;
    brute_match_rec(dets, gts, radius, i + 1, used, cardinality + 1, total + d, best);
    used[j] = false;
  }
}

}  // namespace detail

/// Exhaustive maximum-cardinality (then minimum total distance) matching.
/// Exponential; only for small instances.
inline BruteMatch brute_match(std::span<const mdn::Vec2> dets, std::span<const mdn::Vec2> gts,
                              double radius) {
  BruteMatch best{0, 0.0};
  std::vector<bool> used(gts.size(), false);
  detail::brute_match_rec(dets, gts, radius, 0, used, 0, 0.0, best);
  return best;
}

/// Exhaustive local maxima: strictly greater than everything within the
/// radius and above the threshold. Assumes no exact value ties.
inline std::vector<std::array<int, 2>> brute_peaks(const mdn::ImageF& map, double radius,
                                                   double threshold) {
  std::vector<std::array<int, 2>> peaks;
  const int reach = static_cast<int>(std::floor(radius));
  for (int r = 0; r < map.rows(); ++r) {
    for (int c = 0; c < map.cols(); ++c) {
      if (!(map(r, c) > threshold)) continue;
      bool top = true;
      for (int dr = -reach; dr <= reach && top; ++dr) {
        for (int dc = -reach; dc <= reach && top; ++dc) {
          if (dr == 0 && dc == 0) continue;
          if (dr * dr + dc * dc > radius * radius) continue;
          const int nr = r + dr, nc = c + dc;
          if (nr < 0 || nr >= map.rows() || nc < 0 || nc >= map.cols()) continue;
          if (map(nr, nc) >= map(r, c)) top = false;
        }
      }
      if (top) peaks.push_back({r, c});
    }
  }
  return peaks;
}

}  // namespace oracles
