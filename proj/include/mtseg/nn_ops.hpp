#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "mtseg/feature_map.hpp"
#include "mtseg/layer_params.hpp"

namespace mtseg {

namespace detail {

inline int ceil_div(int a, int b) {
  // b > 0, a may be negative
  return a >= 0 ? (a + b - 1) / b : -((-a) / b);
}

// Output index range [lo, hi] for which o*stride - padding + k stays inside [0, extent).
inline void tap_range(int k, int stride, int padding, int extent, int out_extent, int& lo,
                      int& hi) {
  lo = std::max(0, ceil_div(padding - k, stride));
  hi = std::min(out_extent - 1, (extent - 1 + padding - k) / stride);
}

}  // namespace detail

inline int conv_output_extent(int in, int kernel, int stride, int padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

template <typename T>
void check_conv_args(const FeatureMap<T>& input, const ConvParams<T>& params, int stride,
                     int padding) {
  if (input.channels != params.in_channels) {
    throw ShapeError("conv2d: input has " + std::to_string(input.channels) +
                     " channels, weights expect " + std::to_string(params.in_channels));
  }
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: stride must be >=1 and padding >=0");
  const int oh = conv_output_extent(input.height, params.kernel_h, stride, padding);
  const int ow = conv_output_extent(input.width, params.kernel_w, stride, padding);
  if (oh <= 0 || ow <= 0) {
    throw ShapeError("conv2d: non-positive output size for input " + input.shape_str());
  }
}

/// Cross-correlation (no kernel flip) with zero padding.
template <typename T>
FeatureMap<T> conv2d(const FeatureMap<T>& input, const ConvParams<T>& params, int stride,
                     int padding) {
  check_conv_args(input, params, stride, padding);
  const int oh = conv_output_extent(input.height, params.kernel_h, stride, padding);
  const int ow = conv_output_extent(input.width, params.kernel_w, stride, padding);
  FeatureMap<T> out(params.out_channels, oh, ow);

  const int kh = params.kernel_h, kw = params.kernel_w;
  for (int oc = 0; oc < params.out_channels; ++oc) {
    T* out_plane = out.channel(oc);
    std::fill(out_plane, out_plane + static_cast<std::size_t>(oh) * ow, params.bias[oc]);
    const T* wbase = params.weight.data() +
                     static_cast<std::size_t>(oc) * params.in_channels * kh * kw;
    for (int ic = 0; ic < params.in_channels; ++ic) {
      const T* in_plane = input.channel(ic);
      const T* wplane = wbase + static_cast<std::size_t>(ic) * kh * kw;
      for (int ky = 0; ky < kh; ++ky) {
        int oy_lo, oy_hi;
        detail::tap_range(ky, stride, padding, input.height, oh, oy_lo, oy_hi);
        for (int kx = 0; kx < kw; ++kx) {
          int ox_lo, ox_hi;
          detail::tap_range(kx, stride, padding, input.width, ow, ox_lo, ox_hi);
          const T w = wplane[ky * kw + kx];
          for (int oy = oy_lo; oy <= oy_hi; ++oy) {
            const int iy = oy * stride - padding + ky;
            const T* in_row = in_plane + static_cast<std::size_t>(iy) * input.width;
            T* out_row = out_plane + static_cast<std::size_t>(oy) * ow;
            const int x_off = kx - padding;
            if (stride == 1) {
              for (int ox = ox_lo; ox <= ox_hi; ++ox) out_row[ox] += w * in_row[ox + x_off];
            } else {
              for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                out_row[ox] += w * in_row[ox * stride + x_off];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

/// Accumulates weight/bias gradients into `params` and, when `grad_input`
/// is non-null, the input gradient into it (caller zeroes buffers).
template <typename T>
void conv2d_backward(const FeatureMap<T>& input, ConvParams<T>& params, int stride, int padding,
                     const FeatureMap<T>& grad_out, FeatureMap<T>* grad_input) {
  check_conv_args(input, params, stride, padding);
  const int oh = conv_output_extent(input.height, params.kernel_h, stride, padding);
  const int ow = conv_output_extent(input.width, params.kernel_w, stride, padding);
  if (grad_out.channels != params.out_channels || grad_out.height != oh || grad_out.width != ow) {
    throw ShapeError("conv2d_backward: grad shape " + grad_out.shape_str() + " does not match");
  }
  if (grad_input != nullptr) require_same_shape(*grad_input, input, "conv2d_backward");

  const int kh = params.kernel_h, kw = params.kernel_w;
  for (int oc = 0; oc < params.out_channels; ++oc) {
    const T* g_plane = grad_out.channel(oc);
    T gb = T(0);
    for (std::size_t i = 0; i < static_cast<std::size_t>(oh) * ow; ++i) gb += g_plane[i];
    params.bias_grad[oc] += gb;

    T* wgbase = params.weight_grad.data() +
                static_cast<std::size_t>(oc) * params.in_channels * kh * kw;
    const T* wbase =
        params.weight.data() + static_cast<std::size_t>(oc) * params.in_channels * kh * kw;
    for (int ic = 0; ic < params.in_channels; ++ic) {
      const T* in_plane = input.channel(ic);
      T* gin_plane = grad_input != nullptr ? grad_input->channel(ic) : nullptr;
      for (int ky = 0; ky < kh; ++ky) {
        int oy_lo, oy_hi;
        detail::tap_range(ky, stride, padding, input.height, oh, oy_lo, oy_hi);
        for (int kx = 0; kx < kw; ++kx) {
          int ox_lo, ox_hi;
          detail::tap_range(kx, stride, padding, input.width, ow, ox_lo, ox_hi);
          const std::size_t w_idx = static_cast<std::size_t>(ic) * kh * kw + ky * kw + kx;
          const T w = wbase[w_idx];
          T gw = T(0);
          const int x_off = kx - padding;
          for (int oy = oy_lo; oy <= oy_hi; ++oy) {
            const int iy = oy * stride - padding + ky;
            const T* in_row = in_plane + static_cast<std::size_t>(iy) * input.width;
            const T* g_row = g_plane + static_cast<std::size_t>(oy) * ow;
            if (gin_plane != nullptr) {
              T* gin_row = gin_plane + static_cast<std::size_t>(iy) * input.width;
              if (stride == 1) {
                for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                  gw += in_row[ox + x_off] * g_row[ox];
                  gin_row[ox + x_off] += w * g_row[ox];
                }
              } else {
                for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                  gw += in_row[ox * stride + x_off] * g_row[ox];
                  gin_row[ox * stride + x_off] += w * g_row[ox];
                }
              }
            } else {
              if (stride == 1) {
                for (int ox = ox_lo; ox <= ox_hi; ++ox) gw += in_row[ox + x_off] * g_row[ox];
              } else {
                for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                  gw += in_row[ox * stride + x_off] * g_row[ox];
                }
              }
            }
          }
          wgbase[w_idx] += gw;
        }
      }
    }
  }
}

enum class BnMode { train, eval };

/// Per-channel statistics captured by a train-mode forward, consumed by backward.
template <typename T>
struct BnCache {
  std::vector<T> inv_std;
  FeatureMap<T> xhat;
};

template <typename T>
FeatureMap<T> batch_norm(const FeatureMap<T>& input, BatchNormParams<T>& params, BnMode mode,
                         T epsilon, BnCache<T>* cache = nullptr) {
  if (params.channels != input.channels) {
    throw ShapeError("batch_norm: parameter arrays sized for " + std::to_string(params.channels) +
                     " channels, input has " + std::to_string(input.channels));
  }
  FeatureMap<T> out(input.channels, input.height, input.width);
  const std::size_t n = static_cast<std::size_t>(input.pixels());

  if (mode == BnMode::eval) {
    for (int c = 0; c < input.channels; ++c) {
      const T inv = T(1) / std::sqrt(params.running_var[c] + epsilon);
      const T a = params.scale[c] * inv;
      const T b = params.shift[c] - a * params.running_mean[c];
      const T* in_plane = input.channel(c);
      T* out_plane = out.channel(c);
      for (std::size_t i = 0; i < n; ++i) out_plane[i] = a * in_plane[i] + b;
    }
    return out;
  }

  if (cache != nullptr) {
    cache->inv_std.assign(input.channels, T(0));
    cache->xhat = FeatureMap<T>(input.channels, input.height, input.width);
  }
  for (int c = 0; c < input.channels; ++c) {
    const T* in_plane = input.channel(c);
    T mean = T(0);
    for (std::size_t i = 0; i < n; ++i) mean += in_plane[i];
    mean /= static_cast<T>(n);
    T var = T(0);
    for (std::size_t i = 0; i < n; ++i) {
      const T d = in_plane[i] - mean;
      var += d * d;
    }
    var /= static_cast<T>(n);

    const T inv = T(1) / std::sqrt(var + epsilon);
    T* out_plane = out.channel(c);
    T* xhat_plane = cache != nullptr ? cache->xhat.channel(c) : nullptr;
    const T gamma = params.scale[c], beta = params.shift[c];
    for (std::size_t i = 0; i < n; ++i) {
      const T xh = (in_plane[i] - mean) * inv;
      if (xhat_plane != nullptr) xhat_plane[i] = xh;
      out_plane[i] = gamma * xh + beta;
    }
    if (cache != nullptr) cache->inv_std[c] = inv;

    params.running_mean[c] = (T(1) - params.momentum) * params.running_mean[c] +
                             params.momentum * mean;
    params.running_var[c] = (T(1) - params.momentum) * params.running_var[c] +
                            params.momentum * var;
  }
  return out;
}

template <typename T>
FeatureMap<T> batch_norm_backward(const FeatureMap<T>& grad_out, const BnCache<T>& cache,
                                  BatchNormParams<T>& params) {
  require_same_shape(grad_out, cache.xhat, "batch_norm_backward");
  FeatureMap<T> grad_in(grad_out.channels, grad_out.height, grad_out.width);
  const std::size_t n = static_cast<std::size_t>(grad_out.pixels());
  const T inv_n = T(1) / static_cast<T>(n);

  for (int c = 0; c < grad_out.channels; ++c) {
    const T* g = grad_out.channel(c);
    const T* xh = cache.xhat.channel(c);
    T sum_g = T(0), sum_gx = T(0);
    for (std::size_t i = 0; i < n; ++i) {
      sum_g += g[i];
      sum_gx += g[i] * xh[i];
    }
    params.shift_grad[c] += sum_g;
    params.scale_grad[c] += sum_gx;

    const T k = params.scale[c] * cache.inv_std[c];
    const T mean_g = sum_g * inv_n;
    const T mean_gx = sum_gx * inv_n;
    T* gi = grad_in.channel(c);
    for (std::size_t i = 0; i < n; ++i) gi[i] = k * (g[i] - mean_g - xh[i] * mean_gx);
  }
  return grad_in;
}

enum class Activation { relu, sigmoid, channel_softmax };

template <typename T>
T sigmoid_scalar(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
FeatureMap<T> activation(const FeatureMap<T>& input, Activation kind) {
  FeatureMap<T> out(input.channels, input.height, input.width);
  switch (kind) {
    case Activation::relu:
      for (std::size_t i = 0; i < input.size(); ++i) {
        out.values[i] = input.values[i] > T(0) ? input.values[i] : T(0);
      }
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < input.size(); ++i) {
        out.values[i] = sigmoid_scalar(input.values[i]);
      }
      break;
    case Activation::channel_softmax: {
      if (input.channels < 2) throw ShapeError("channel_softmax requires at least 2 channels");
      const std::size_t plane = static_cast<std::size_t>(input.pixels());
      for (std::size_t p = 0; p < plane; ++p) {
        T mx = input.values[p];
        for (int c = 1; c < input.channels; ++c) mx = std::max(mx, input.values[c * plane + p]);
        T sum = T(0);
        for (int c = 0; c < input.channels; ++c) {
          const T e = std::exp(input.values[c * plane + p] - mx);
          out.values[c * plane + p] = e;
          sum += e;
        }
        const T inv = T(1) / sum;
        for (int c = 0; c < input.channels; ++c) out.values[c * plane + p] *= inv;
      }
      break;
    }
  }
  return out;
}

template <typename T>
FeatureMap<T> relu_backward(const FeatureMap<T>& grad_out, const FeatureMap<T>& output) {
  require_same_shape(grad_out, output, "relu_backward");
  FeatureMap<T> g(grad_out.channels, grad_out.height, grad_out.width);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.values[i] = output.values[i] > T(0) ? grad_out.values[i] : T(0);
  }
  return g;
}

template <typename T>
FeatureMap<T> sigmoid_backward(const FeatureMap<T>& grad_out, const FeatureMap<T>& output) {
  require_same_shape(grad_out, output, "sigmoid_backward");
  FeatureMap<T> g(grad_out.channels, grad_out.height, grad_out.width);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const T y = output.values[i];
    g.values[i] = grad_out.values[i] * y * (T(1) - y);
  }
  return g;
}

template <typename T>
FeatureMap<T> channel_softmax_backward(const FeatureMap<T>& grad_out,
                                       const FeatureMap<T>& output) {
  require_same_shape(grad_out, output, "channel_softmax_backward");
  FeatureMap<T> g(grad_out.channels, grad_out.height, grad_out.width);
  const std::size_t plane = static_cast<std::size_t>(output.pixels());
  for (std::size_t p = 0; p < plane; ++p) {
    T dot = T(0);
    for (int c = 0; c < output.channels; ++c) {
      dot += grad_out.values[c * plane + p] * output.values[c * plane + p];
    }
    for (int c = 0; c < output.channels; ++c) {
      g.values[c * plane + p] =
          output.values[c * plane + p] * (grad_out.values[c * plane + p] - dot);
    }
  }
  return g;
}

namespace detail {

// Half-pixel source coordinate tables for linear resampling.
template <typename T>
struct LinearTaps {
  std::vector<int> lo, hi;
  std::vector<T> frac;
};

template <typename T>
LinearTaps<T> linear_taps(int in_extent, int out_extent) {
  LinearTaps<T> t;
  t.lo.resize(out_extent);
  t.hi.resize(out_extent);
  t.frac.resize(out_extent);
  const double scale = static_cast<double>(in_extent) / out_extent;
  for (int o = 0; o < out_extent; ++o) {
    double s = (o + 0.5) * scale - 0.5;
    s = std::min(std::max(s, 0.0), static_cast<double>(in_extent - 1));
    const int lo = static_cast<int>(std::floor(s));
    t.lo[o] = lo;
    t.hi[o] = std::min(lo + 1, in_extent - 1);
    t.frac[o] = static_cast<T>(s - lo);
  }
  return t;
}

}  // namespace detail

/// Bilinear interpolation with half-pixel sample centers; upsampling only.
template <typename T>
FeatureMap<T> bilinear_upsample(const FeatureMap<T>& input, int out_height, int out_width) {
  if (out_height < input.height || out_width < input.width) {
    throw ShapeError("bilinear_upsample: target " + std::to_string(out_height) + "x" +
                     std::to_string(out_width) + " smaller than input " + input.shape_str());
  }
  const auto ty = detail::linear_taps<T>(input.height, out_height);
  const auto tx = detail::linear_taps<T>(input.width, out_width);
  FeatureMap<T> out(input.channels, out_height, out_width);
  for (int c = 0; c < input.channels; ++c) {
    const T* in_plane = input.channel(c);
    T* out_plane = out.channel(c);
    for (int oy = 0; oy < out_height; ++oy) {
      const T* r0 = in_plane + static_cast<std::size_t>(ty.lo[oy]) * input.width;
      const T* r1 = in_plane + static_cast<std::size_t>(ty.hi[oy]) * input.width;
      const T fy = ty.frac[oy];
      T* out_row = out_plane + static_cast<std::size_t>(oy) * out_width;
      for (int ox = 0; ox < out_width; ++ox) {
        const T fx = tx.frac[ox];
        const T top = r0[tx.lo[ox]] + fx * (r0[tx.hi[ox]] - r0[tx.lo[ox]]);
        const T bot = r1[tx.lo[ox]] + fx * (r1[tx.hi[ox]] - r1[tx.lo[ox]]);
        out_row[ox] = top + fy * (bot - top);
      }
    }
  }
  return out;
}

template <typename T>
FeatureMap<T> bilinear_upsample_backward(const FeatureMap<T>& grad_out, int in_height,
                                         int in_width) {
  const auto ty = detail::linear_taps<T>(in_height, grad_out.height);
  const auto tx = detail::linear_taps<T>(in_width, grad_out.width);
  FeatureMap<T> grad_in(grad_out.channels, in_height, in_width);
  for (int c = 0; c < grad_out.channels; ++c) {
    const T* g_plane = grad_out.channel(c);
    T* gi_plane = grad_in.channel(c);
    for (int oy = 0; oy < grad_out.height; ++oy) {
      const T fy = ty.frac[oy];
      T* r0 = gi_plane + static_cast<std::size_t>(ty.lo[oy]) * in_width;
      T* r1 = gi_plane + static_cast<std::size_t>(ty.hi[oy]) * in_width;
      const T* g_row = g_plane + static_cast<std::size_t>(oy) * grad_out.width;
      for (int ox = 0; ox < grad_out.width; ++ox) {
        const T fx = tx.frac[ox];
        const T g = g_row[ox];
        r0[tx.lo[ox]] += (T(1) - fy) * (T(1) - fx) * g;
        r0[tx.hi[ox]] += (T(1) - fy) * fx * g;
        r1[tx.lo[ox]] += fy * (T(1) - fx) * g;
        r1[tx.hi[ox]] += fy * fx * g;
      }
    }
  }
  return grad_in;
}

namespace detail {

// Catmull-Rom kernel, a = -0.5.
template <typename T>
T cubic_weight(T t) {
  const T a = T(-0.5);
  const T at = std::abs(t);
  if (at <= T(1)) return ((a + T(2)) * at - (a + T(3))) * at * at + T(1);
  if (at < T(2)) return ((a * at - T(5) * a) * at + T(8) * a) * at - T(4) * a;
  return T(0);
}

template <typename T>
struct CubicTaps {
  std::vector<int> idx;  // 4 per output position
  std::vector<T> w;
};

template <typename T>
CubicTaps<T> cubic_taps(int in_extent, int out_extent) {
  CubicTaps<T> t;
  t.idx.resize(static_cast<std::size_t>(out_extent) * 4);
  t.w.resize(static_cast<std::size_t>(out_extent) * 4);
  const double scale = static_cast<double>(in_extent) / out_extent;
  for (int o = 0; o < out_extent; ++o) {
    const double s = (o + 0.5) * scale - 0.5;
    const int base = static_cast<int>(std::floor(s));
    const T frac = static_cast<T>(s - base);
    for (int k = 0; k < 4; ++k) {
      const int tap = base - 1 + k;
      t.idx[o * 4 + k] = std::min(std::max(tap, 0), in_extent - 1);
      t.w[o * 4 + k] = cubic_weight(frac - static_cast<T>(k - 1));
    }
  }
  return t;
}

}  // namespace detail

/// Bicubic (Catmull-Rom) resampling with half-pixel centers; visualization
/// path only, no gradient support.
template <typename T>
FeatureMap<T> bicubic_resize(const FeatureMap<T>& input, int out_height, int out_width) {
  if (out_height <= 0 || out_width <= 0) {
    throw ShapeError("bicubic_resize: target dimensions must be positive");
  }
  const auto ty = detail::cubic_taps<T>(input.height, out_height);
  const auto tx = detail::cubic_taps<T>(input.width, out_width);
  FeatureMap<T> out(input.channels, out_height, out_width);
  for (int c = 0; c < input.channels; ++c) {
    const T* in_plane = input.channel(c);
    T* out_plane = out.channel(c);
    for (int oy = 0; oy < out_height; ++oy) {
      T* out_row = out_plane + static_cast<std::size_t>(oy) * out_width;
      for (int ox = 0; ox < out_width; ++ox) {
        T acc = T(0);
        for (int ky = 0; ky < 4; ++ky) {
          const T* row = in_plane + static_cast<std::size_t>(ty.idx[oy * 4 + ky]) * input.width;
          T racc = T(0);
          for (int kx = 0; kx < 4; ++kx) racc += tx.w[ox * 4 + kx] * row[tx.idx[ox * 4 + kx]];
          acc += ty.w[oy * 4 + ky] * racc;
        }
        out_row[ox] = acc;
      }
    }
  }
  return out;
}

/// Mean pooling onto an arbitrary output grid; identity when sizes match.
template <typename T>
FeatureMap<T> adaptive_avg_pool(const FeatureMap<T>& input, int out_height, int out_width) {
  if (out_height <= 0 || out_width <= 0) {
    throw ShapeError("adaptive_avg_pool: target dimensions must be positive");
  }
  FeatureMap<T> out(input.channels, out_height, out_width);
  for (int c = 0; c < input.channels; ++c) {
    const T* in_plane = input.channel(c);
    T* out_plane = out.channel(c);
    for (int oy = 0; oy < out_height; ++oy) {
      const int y0 = (oy * input.height) / out_height;
      const int y1 = ((oy + 1) * input.height + out_height - 1) / out_height;
      for (int ox = 0; ox < out_width; ++ox) {
        const int x0 = (ox * input.width) / out_width;
        const int x1 = ((ox + 1) * input.width + out_width - 1) / out_width;
        T acc = T(0);
        for (int y = y0; y < y1; ++y) {
          const T* row = in_plane + static_cast<std::size_t>(y) * input.width;
          for (int x = x0; x < x1; ++x) acc += row[x];
        }
        out_plane[static_cast<std::size_t>(oy) * out_width + ox] =
            acc / static_cast<T>((y1 - y0) * (x1 - x0));
      }
    }
  }
  return out;
}

template <typename T>
FeatureMap<T> adaptive_avg_pool_backward(const FeatureMap<T>& grad_out, int in_height,
                                         int in_width) {
  FeatureMap<T> grad_in(grad_out.channels, in_height, in_width);
  for (int c = 0; c < grad_out.channels; ++c) {
    const T* g_plane = grad_out.channel(c);
    T* gi_plane = grad_in.channel(c);
    for (int oy = 0; oy < grad_out.height; ++oy) {
      const int y0 = (oy * in_height) / grad_out.height;
      const int y1 = ((oy + 1) * in_height + grad_out.height - 1) / grad_out.height;
      for (int ox = 0; ox < grad_out.width; ++ox) {
        const int x0 = (ox * in_width) / grad_out.width;
        const int x1 = ((ox + 1) * in_width + grad_out.width - 1) / grad_out.width;
        const T g = g_plane[static_cast<std::size_t>(oy) * grad_out.width + ox] /
                    static_cast<T>((y1 - y0) * (x1 - x0));
        for (int y = y0; y < y1; ++y) {
          T* row = gi_plane + static_cast<std::size_t>(y) * in_width;
          for (int x = x0; x < x1; ++x) row[x] += g;
        }
      }
    }
  }
  return grad_in;
}

}  // namespace mtseg
