#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>

#include "mtseg/errors.hpp"
#include "mtseg/feature_map.hpp"

namespace mtseg {

inline constexpr double kLogClamp = 1e-12;

/// Pixel-mean cross entropy between per-pixel class probabilities and a
/// one-hot target; natural log, clamped below at 1e-12.
template <typename T>
double cross_entropy(const FeatureMap<T>& probs, const FeatureMap<T>& target) {
  require_same_shape(probs, target, "cross_entropy");
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (target.values[i] != T(0)) {
      const double p = std::max(static_cast<double>(probs.values[i]), kLogClamp);
      sum -= static_cast<double>(target.values[i]) * std::log(p);
    }
  }
  return sum / static_cast<double>(probs.pixels());
}

/// d(cross_entropy)/d(probs) under the same clamped-log, pixel-mean reduction.
template <typename T>
FeatureMap<T> cross_entropy_backward(const FeatureMap<T>& probs, const FeatureMap<T>& target,
                                     double weight = 1.0) {
  require_same_shape(probs, target, "cross_entropy");
  FeatureMap<T> grad(probs.channels, probs.height, probs.width);
  const double inv_pixels = weight / static_cast<double>(probs.pixels());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (target.values[i] == T(0)) continue;
    const double p = static_cast<double>(probs.values[i]);
    if (p <= kLogClamp) continue;  // clamped region has zero slope
    grad.values[i] = static_cast<T>(-static_cast<double>(target.values[i]) * inv_pixels / p);
  }
  return grad;
}

/// Dynamic Weight Average state for the two-task loss aggregation. `epoch`
/// is the 1-based index of the epoch the current weights apply to.
struct DwaState {
  int epoch = 1;
  double temperature = 2.0;
  std::array<double, 2> weights = {1.0, 1.0};
  // Mean task losses of epochs (epoch-1) and (epoch-2); valid once recorded.
  std::array<double, 2> prev1 = {0.0, 0.0};
  std::array<double, 2> prev2 = {0.0, 0.0};
};

/// Records the finished epoch's task losses and advances to the next epoch.
/// From epoch 3 on, each task's weight follows its relative loss-descent
/// ratio through a tempered softmax, rescaled so the weights sum to 2.
inline DwaState dwa_update(const DwaState& state, const std::array<double, 2>& epoch_losses) {
  for (double loss : epoch_losses) {
    if (!(loss > 0.0) || !std::isfinite(loss)) {
      throw NumericError("dwa_update: epoch losses must be positive and finite, got " +
                         std::to_string(loss));
    }
  }
  DwaState next = state;
  next.epoch = state.epoch + 1;
  next.prev2 = state.prev1;
  next.prev1 = epoch_losses;
  if (next.epoch <= 2) {
    next.weights = {1.0, 1.0};
    return next;
  }
  const std::array<double, 2> ratios = {next.prev1[0] / next.prev2[0],
                                        next.prev1[1] / next.prev2[1]};
  const double a = ratios[0] / state.temperature;
  const double b = ratios[1] / state.temperature;
  const double m = a > b ? a : b;
  const double ea = std::exp(a - m);
  const double eb = std::exp(b - m);
  next.weights = {2.0 * ea / (ea + eb), 2.0 * eb / (ea + eb)};
  return next;
}

inline double total_loss(double loss_element, double loss_defect, const DwaState& state) {
  return state.weights[0] * loss_element + state.weights[1] * loss_defect;
}

}  // namespace mtseg
