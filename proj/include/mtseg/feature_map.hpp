#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mtseg/errors.hpp"

namespace mtseg {

/// Dense C x H x W activation tensor, row-major within each channel.
template <typename T>
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<T> values;

  FeatureMap() = default;

  FeatureMap(int c, int h, int w, T fill = T(0)) : channels(c), height(h), width(w) {
    if (c <= 0 || h <= 0 || w <= 0) {
      throw ShapeError("FeatureMap dimensions must be positive, got " + std::to_string(c) + "x" +
                       std::to_string(h) + "x" + std::to_string(w));
    }
    values.assign(static_cast<std::size_t>(c) * h * w, fill);
  }

  std::size_t size() const { return values.size(); }
  int pixels() const { return height * width; }

  T& at(int c, int y, int x) {
    return values[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  T at(int c, int y, int x) const {
    return values[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  T* channel(int c) { return values.data() + static_cast<std::size_t>(c) * height * width; }
  const T* channel(int c) const {
    return values.data() + static_cast<std::size_t>(c) * height * width;
  }

  bool same_shape(const FeatureMap& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  std::string shape_str() const {
    return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
  }

  bool all_finite() const {
    for (T v : values) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  void fill(T v) { values.assign(values.size(), v); }

  template <typename U>
  FeatureMap<U> cast() const {
    FeatureMap<U> out(channels, height, width);
    for (std::size_t i = 0; i < values.size(); ++i) out.values[i] = static_cast<U>(values[i]);
    return out;
  }
};

template <typename T>
void require_same_shape(const FeatureMap<T>& a, const FeatureMap<T>& b, const char* where) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(where) + ": shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  }
}

/// H x W per-pixel class indices for one task.
struct ClassMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> labels;

  ClassMask() = default;
  ClassMask(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill) {
    if (h <= 0 || w <= 0) throw ShapeError("ClassMask dimensions must be positive");
  }

  std::uint8_t& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return labels.size(); }

  bool same_shape(const ClassMask& o) const { return height == o.height && width == o.width; }
};

}  // namespace mtseg
