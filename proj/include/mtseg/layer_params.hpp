#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "mtseg/errors.hpp"

namespace mtseg {

/// Convolution weights: out_channels x in_channels x kernel_h x kernel_w plus
/// a per-output-channel bias.
template <typename T>
struct ConvParams {
  int out_channels = 0;
  int in_channels = 0;
  int kernel_h = 0;
  int kernel_w = 0;
  std::vector<T> weight;
  std::vector<T> bias;
  std::vector<T> weight_grad;
  std::vector<T> bias_grad;
  bool weight_trainable = true;
  bool bias_trainable = true;

  std::size_t weight_count() const {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel_h * kernel_w;
  }
};

template <typename T>
ConvParams<T> make_conv_params(int out_channels, int in_channels, int kernel_h, int kernel_w) {
  if (out_channels <= 0 || in_channels <= 0 || kernel_h <= 0 || kernel_w <= 0) {
    throw ConfigError("conv parameter dimensions must be positive");
  }
  ConvParams<T> p;
  p.out_channels = out_channels;
  p.in_channels = in_channels;
  p.kernel_h = kernel_h;
  p.kernel_w = kernel_w;
  p.weight.assign(p.weight_count(), T(0));
  p.bias.assign(out_channels, T(0));
  p.weight_grad.assign(p.weight_count(), T(0));
  p.bias_grad.assign(out_channels, T(0));
  return p;
}

/// Per-channel affine batch normalization with running moments.
/// scale/shift are trainable; the running moments are state, not parameters.
template <typename T>
struct BatchNormParams {
  int channels = 0;
  std::vector<T> scale;
  std::vector<T> shift;
  std::vector<T> running_mean;
  std::vector<T> running_var;
  std::vector<T> scale_grad;
  std::vector<T> shift_grad;
  T momentum = T(0.1);
  bool trainable = true;
};

template <typename T>
BatchNormParams<T> make_batch_norm_params(int channels) {
  if (channels <= 0) throw ConfigError("batch norm channel count must be positive");
  BatchNormParams<T> p;
  p.channels = channels;
  p.scale.assign(channels, T(1));
  p.shift.assign(channels, T(0));
  p.running_mean.assign(channels, T(0));
  p.running_var.assign(channels, T(1));
  p.scale_grad.assign(channels, T(0));
  p.shift_grad.assign(channels, T(0));
  return p;
}

template <typename T>
using LayerParams = std::variant<ConvParams<T>, BatchNormParams<T>>;

/// Exact count of trainable scalar parameters in one layer.
template <typename T>
std::int64_t count_parameters(const LayerParams<T>& layer) {
  if (const auto* conv = std::get_if<ConvParams<T>>(&layer)) {
    std::int64_t n = 0;
    if (conv->weight_trainable) n += static_cast<std::int64_t>(conv->weight.size());
    if (conv->bias_trainable) n += static_cast<std::int64_t>(conv->bias.size());
    return n;
  }
  const auto& bn = std::get<BatchNormParams<T>>(layer);
  if (!bn.trainable) return 0;
  return static_cast<std::int64_t>(bn.scale.size() + bn.shift.size());
}

template <typename T>
std::int64_t count_parameters(const std::vector<LayerParams<T>>& layers) {
  std::int64_t n = 0;
  for (const auto& layer : layers) n += count_parameters(layer);
  return n;
}

/// Named, non-owning handle to one parameter array and its gradient buffer.
template <typename T>
struct ParamView {
  std::string name;
  T* value = nullptr;
  T* grad = nullptr;
  std::size_t count = 0;
  bool trainable = true;
  std::vector<int> shape;
};

template <typename T>
void append_views(std::vector<ParamView<T>>& out, ConvParams<T>& p, const std::string& prefix) {
  out.push_back({prefix + ".weight", p.weight.data(), p.weight_grad.data(), p.weight.size(),
                 p.weight_trainable,
                 {p.out_channels, p.in_channels, p.kernel_h, p.kernel_w}});
  out.push_back({prefix + ".bias", p.bias.data(), p.bias_grad.data(), p.bias.size(),
                 p.bias_trainable,
                 {p.out_channels}});
}

template <typename T>
void append_views(std::vector<ParamView<T>>& out, BatchNormParams<T>& p,
                  const std::string& prefix) {
  out.push_back({prefix + ".scale", p.scale.data(), p.scale_grad.data(), p.scale.size(),
                 p.trainable,
                 {p.channels}});
  out.push_back({prefix + ".shift", p.shift.data(), p.shift_grad.data(), p.shift.size(),
                 p.trainable,
                 {p.channels}});
  // Running moments ride along so checkpoints capture them; never trainable.
  out.push_back({prefix + ".running_mean", p.running_mean.data(), nullptr,
                 p.running_mean.size(), false,
                 {p.channels}});
  out.push_back({prefix + ".running_var", p.running_var.data(), nullptr, p.running_var.size(),
                 false,
                 {p.channels}});
}

template <typename T>
void zero_grads(std::vector<ParamView<T>>& views) {
  for (auto& v : views) {
    if (v.grad == nullptr) continue;
    for (std::size_t i = 0; i < v.count; ++i) v.grad[i] = T(0);
  }
}

}  // namespace mtseg
