#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mtseg/errors.hpp"
#include "mtseg/layer_params.hpp"

namespace mtseg {

/// Outcome of comparing analytic gradients of one parameter array against
/// central differences on a sampled subset of its coordinates.
struct GradCheckReport {
  std::string name;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  bool pass = false;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Absolute differences at or below this are treated as zero relative error;
  // they sit inside central-difference roundoff for O(1) losses.
  double abs_floor = 1e-9;
  int max_coords_per_array = 8;
  std::uint64_t seed = 20240811;
};

/// Checks d(loss)/d(theta) for every trainable view. `loss_fn` evaluates the
/// loss at the current parameter values; `grad_fn` recomputes and stores the
/// analytic gradients in the views' grad buffers.
template <typename T>
std::vector<GradCheckReport> finite_difference_check(const std::function<double()>& loss_fn,
                                                     const std::function<void()>& grad_fn,
                                                     const std::vector<ParamView<T>>& params,
                                                     const GradCheckOptions& opts = {}) {
  grad_fn();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& view : params) {
    std::vector<double> g(view.count, 0.0);
    if (view.grad != nullptr) {
      for (std::size_t i = 0; i < view.count; ++i) g[i] = static_cast<double>(view.grad[i]);
    }
    analytic.push_back(std::move(g));
  }

  std::mt19937_64 rng(opts.seed);
  std::vector<GradCheckReport> reports;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const auto& view = params[pi];
    if (!view.trainable || view.grad == nullptr) continue;

    GradCheckReport report;
    report.name = view.name;

    std::vector<std::size_t> coords(view.count);
    for (std::size_t i = 0; i < view.count; ++i) coords[i] = i;
    if (coords.size() > static_cast<std::size_t>(opts.max_coords_per_array)) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opts.max_coords_per_array);
    }

    for (std::size_t ci : coords) {
      const T saved = view.value[ci];
      view.value[ci] = saved + static_cast<T>(opts.step);
      const double loss_plus = loss_fn();
      view.value[ci] = saved - static_cast<T>(opts.step);
      const double loss_minus = loss_fn();
      view.value[ci] = saved;
      if (!std::isfinite(loss_plus) || !std::isfinite(loss_minus)) {
        throw NumericError("finite_difference_check: non-finite loss while perturbing " +
                           view.name + "[" + std::to_string(ci) + "]");
      }
      const double numeric = (loss_plus - loss_minus) / (2.0 * opts.step);
      const double a = analytic[pi][ci];
      const double abs_err = std::abs(a - numeric);
      const double denom = std::max(std::abs(a), std::abs(numeric));
      const double rel_err =
          abs_err <= opts.abs_floor ? 0.0 : abs_err / std::max(denom, opts.abs_floor);
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      report.max_rel_error = std::max(report.max_rel_error, rel_err);
    }
    report.pass = report.max_rel_error <= opts.tolerance;
    reports.push_back(std::move(report));
  }
  return reports;
}

inline bool all_pass(const std::vector<GradCheckReport>& reports) {
  for (const auto& r : reports) {
    if (!r.pass) return false;
  }
  return !reports.empty();
}

}  // namespace mtseg
