#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "mtseg/errors.hpp"
#include "mtseg/feature_map.hpp"
#include "mtseg/image_io.hpp"
#include "mtseg/model.hpp"
#include "mtseg/nn_ops.hpp"

namespace mtseg {

/// Deterministic stream derivation so per-sample work is order-independent.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// One inspection image with its two per-pixel annotations.
struct Sample {
  std::string id;
  FeatureMap<float> image;  // 3 x H x W, RGB in [0,1]
  ClassMask element_mask;
  ClassMask defect_mask;
};

struct SplitManifest {
  std::vector<std::string> train, val, test;
  std::uint64_t seed = 0;
};

inline void validate_sample(const Sample& s) {
  if (s.image.channels != 3) throw DataError("sample " + s.id + ": image must have 3 channels");
  if (s.image.height != s.element_mask.height || s.image.width != s.element_mask.width ||
      s.image.height != s.defect_mask.height || s.image.width != s.defect_mask.width) {
    throw DataError("sample " + s.id + ": image and mask sizes differ");
  }
  for (std::uint8_t v : s.element_mask.labels) {
    if (v >= 7) {
      throw DataError("sample " + s.id + ": element mask entry " + std::to_string(v) +
                      " out of range");
    }
  }
  for (std::uint8_t v : s.defect_mask.labels) {
    if (v >= 2) {
      throw DataError("sample " + s.id + ": defect mask entry " + std::to_string(v) +
                      " out of range");
    }
  }
}

// ---------------------------------------------------------------------------
// Directory layout: images/<id>.png, masks_element/<id>.png,
// masks_defect/<id>.png, manifest.txt.

inline std::vector<Sample> load_dataset(const std::filesystem::path& root) {
  const auto images_dir = root / "images";
  if (!std::filesystem::is_directory(images_dir)) {
    throw DataError("dataset root " + root.string() + " has no images/ directory");
  }
  std::vector<std::string> ids;
  for (const auto& entry : std::filesystem::directory_iterator(images_dir)) {
    if (entry.path().extension() == ".png") ids.push_back(entry.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw DataError("dataset root " + root.string() + " contains no images");

  std::vector<Sample> samples;
  samples.reserve(ids.size());
  for (const auto& id : ids) {
    Sample s;
    s.id = id;
    s.image = image_to_feature(read_png(images_dir / (id + ".png")));
    const auto em = root / "masks_element" / (id + ".png");
    const auto dm = root / "masks_defect" / (id + ".png");
    if (!std::filesystem::exists(em)) throw DataError("sample " + id + ": missing element mask");
    if (!std::filesystem::exists(dm)) throw DataError("sample " + id + ": missing defect mask");
    s.element_mask = image_to_mask(read_png(em));
    s.defect_mask = image_to_mask(read_png(dm));
    validate_sample(s);
    samples.push_back(std::move(s));
  }
  return samples;
}

inline void save_dataset(const std::filesystem::path& root, const std::vector<Sample>& samples,
                         const SplitManifest& manifest) {
  std::filesystem::create_directories(root / "images");
  std::filesystem::create_directories(root / "masks_element");
  std::filesystem::create_directories(root / "masks_defect");
  for (const auto& s : samples) {
    write_png(root / "images" / (s.id + ".png"), feature_to_image(s.image));
    write_png(root / "masks_element" / (s.id + ".png"), mask_to_image(s.element_mask));
    write_png(root / "masks_defect" / (s.id + ".png"), mask_to_image(s.defect_mask));
  }
  std::ofstream out(root / "manifest.txt");
  if (!out) throw DataError("cannot write manifest in " + root.string());
  out << "# seed=" << manifest.seed << "\n";
  for (const auto& id : manifest.train) out << id << " train\n";
  for (const auto& id : manifest.val) out << id << " val\n";
  for (const auto& id : manifest.test) out << id << " test\n";
}

inline SplitManifest load_manifest(const std::filesystem::path& root) {
  std::ifstream in(root / "manifest.txt");
  if (!in) throw DataError("missing manifest.txt in " + root.string());
  SplitManifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("seed=");
      if (pos != std::string::npos) m.seed = std::stoull(line.substr(pos + 5));
      continue;
    }
    const auto space = line.find(' ');
    if (space == std::string::npos) throw DataError("malformed manifest line: " + line);
    const std::string id = line.substr(0, space);
    const std::string split = line.substr(space + 1);
    if (split == "train") {
      m.train.push_back(id);
    } else if (split == "val") {
      m.val.push_back(id);
    } else if (split == "test") {
      m.test.push_back(id);
    } else {
      throw DataError("unknown split '" + split + "' in manifest");
    }
  }
  return m;
}

/// Seed-deterministic shuffle, then test_count ids to test and the remainder
/// split train:val with floor rounding toward validation.
inline SplitManifest split_dataset(std::vector<std::string> ids, int test_count,
                                   double train_val_ratio, std::uint64_t seed) {
  if (test_count >= static_cast<int>(ids.size())) {
    throw ConfigError("split_dataset: test_count must be smaller than the dataset");
  }
  if (train_val_ratio <= 0.0 || train_val_ratio >= 1.0) {
    throw ConfigError("split_dataset: train_val_ratio must lie in (0,1)");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  SplitManifest m;
  m.seed = seed;
  m.test.assign(ids.begin(), ids.begin() + test_count);
  const int remainder = static_cast<int>(ids.size()) - test_count;
  const int train_count = static_cast<int>(std::floor(remainder * train_val_ratio));
  m.train.assign(ids.begin() + test_count, ids.begin() + test_count + train_count);
  m.val.assign(ids.begin() + test_count + train_count, ids.end());
  if (m.train.empty() || m.val.empty() || m.test.empty()) {
    throw ConfigError("split_dataset: every split must be non-empty");
  }
  return m;
}

inline SplitManifest split_dataset(const std::vector<Sample>& samples, int test_count,
                                   double train_val_ratio, std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(samples.size());
  for (const auto& s : samples) ids.push_back(s.id);
  return split_dataset(std::move(ids), test_count, train_val_ratio, seed);
}

// ---------------------------------------------------------------------------
// One-hot encoding

template <typename T = float>
FeatureMap<T> one_hot(const ClassMask& mask, const TaskSpec& task) {
  FeatureMap<T> out(task.class_count(), mask.height, mask.width);
  const std::size_t plane = mask.size();
  for (std::size_t i = 0; i < plane; ++i) {
    const int cls = mask.labels[i];
    if (cls >= task.class_count()) {
      throw DataError("one_hot: class id " + std::to_string(cls) + " out of range for task " +
                      task_name(task.id));
    }
    out.values[static_cast<std::size_t>(cls) * plane + i] = T(1);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation

struct AugmentConfig {
  enum class NoiseMode { blur, additive };

  double probability = 0.5;  // independent apply probability per transform
  double scale_min = 0.75, scale_max = 1.25;
  double rotate_max_deg = 10.0;
  double blur_sigma_min = 0.1, blur_sigma_max = 1.5;
  NoiseMode noise_mode = NoiseMode::blur;
  double additive_sigma = 0.03;
  double hue_shift_max = 0.02;
  double sv_min = 0.9, sv_max = 1.1;
};

namespace detail {

inline std::array<float, 3> mean_color(const FeatureMap<float>& image) {
  std::array<float, 3> mean = {0, 0, 0};
  const std::size_t plane = static_cast<std::size_t>(image.pixels());
  for (int c = 0; c < 3; ++c) {
    double acc = 0.0;
    const float* p = image.channel(c);
    for (std::size_t i = 0; i < plane; ++i) acc += p[i];
    mean[c] = static_cast<float>(acc / plane);
  }
  return mean;
}

// Bilinear resampling at any scale, half-pixel centers (aliasing accepted on
// the augmentation path).
inline FeatureMap<float> resize_image(const FeatureMap<float>& in, int oh, int ow) {
  const auto ty = linear_taps<float>(in.height, oh);
  const auto tx = linear_taps<float>(in.width, ow);
  FeatureMap<float> out(in.channels, oh, ow);
  for (int c = 0; c < in.channels; ++c) {
    const float* plane = in.channel(c);
    float* o = out.channel(c);
    for (int y = 0; y < oh; ++y) {
      const float* r0 = plane + static_cast<std::size_t>(ty.lo[y]) * in.width;
      const float* r1 = plane + static_cast<std::size_t>(ty.hi[y]) * in.width;
      const float fy = ty.frac[y];
      for (int x = 0; x < ow; ++x) {
        const float fx = tx.frac[x];
        const float top = r0[tx.lo[x]] + fx * (r0[tx.hi[x]] - r0[tx.lo[x]]);
        const float bot = r1[tx.lo[x]] + fx * (r1[tx.hi[x]] - r1[tx.lo[x]]);
        o[static_cast<std::size_t>(y) * ow + x] = top + fy * (bot - top);
      }
    }
  }
  return out;
}

inline ClassMask resize_mask(const ClassMask& in, int oh, int ow) {
  ClassMask out(oh, ow);
  for (int y = 0; y < oh; ++y) {
    int sy = static_cast<int>((y + 0.5) * in.height / oh);
    sy = std::min(sy, in.height - 1);
    for (int x = 0; x < ow; ++x) {
      int sx = static_cast<int>((x + 0.5) * in.width / ow);
      sx = std::min(sx, in.width - 1);
      out.at(y, x) = in.at(sy, sx);
    }
  }
  return out;
}

// Centered crop-or-pad back to (h, w).
inline FeatureMap<float> center_fit_image(const FeatureMap<float>& in, int h, int w,
                                          const std::array<float, 3>& fill) {
  FeatureMap<float> out(in.channels, h, w);
  for (int c = 0; c < in.channels; ++c) {
    float* o = out.channel(c);
    for (std::size_t i = 0; i < static_cast<std::size_t>(h) * w; ++i) o[i] = fill[c];
  }
  const int oy = (h - in.height) / 2;
  const int ox = (w - in.width) / 2;
  for (int c = 0; c < in.channels; ++c) {
    for (int y = 0; y < in.height; ++y) {
      const int dy = y + oy;
      if (dy < 0 || dy >= h) continue;
      for (int x = 0; x < in.width; ++x) {
        const int dx = x + ox;
        if (dx < 0 || dx >= w) continue;
        out.at(c, dy, dx) = in.at(c, y, x);
      }
    }
  }
  return out;
}

inline ClassMask center_fit_mask(const ClassMask& in, int h, int w, std::uint8_t fill) {
  ClassMask out(h, w, fill);
  const int oy = (h - in.height) / 2;
  const int ox = (w - in.width) / 2;
  for (int y = 0; y < in.height; ++y) {
    const int dy = y + oy;
    if (dy < 0 || dy >= h) continue;
    for (int x = 0; x < in.width; ++x) {
      const int dx = x + ox;
      if (dx < 0 || dx >= w) continue;
      out.at(dy, dx) = in.at(y, x);
    }
  }
  return out;
}

inline float bilinear_at(const float* plane, int h, int w, double sy, double sx, float fill) {
  if (sy < -0.5 || sy > h - 0.5 || sx < -0.5 || sx > w - 0.5) return fill;
  sy = std::min(std::max(sy, 0.0), static_cast<double>(h - 1));
  sx = std::min(std::max(sx, 0.0), static_cast<double>(w - 1));
  const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
  const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const float fy = static_cast<float>(sy - y0), fx = static_cast<float>(sx - x0);
  const float top = plane[y0 * w + x0] + fx * (plane[y0 * w + x1] - plane[y0 * w + x0]);
  const float bot = plane[y1 * w + x0] + fx * (plane[y1 * w + x1] - plane[y1 * w + x0]);
  return top + fy * (bot - top);
}

inline void rotate_sample(Sample& s, double degrees, const std::array<float, 3>& fill) {
  const int h = s.image.height, w = s.image.width;
  const double rad = degrees * 3.14159265358979323846 / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;

  FeatureMap<float> img(3, h, w);
  ClassMask em(h, w), dm(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double sx = cs * dx + sn * dy + cx;
      const double sy = -sn * dx + cs * dy + cy;
      for (int c = 0; c < 3; ++c) {
        img.at(c, y, x) = bilinear_at(s.image.channel(c), h, w, sy, sx, fill[c]);
      }
      const int ny = static_cast<int>(std::lround(sy)), nx = static_cast<int>(std::lround(sx));
      if (ny >= 0 && ny < h && nx >= 0 && nx < w) {
        em.at(y, x) = s.element_mask.at(ny, nx);
        dm.at(y, x) = s.defect_mask.at(ny, nx);
      } else {
        em.at(y, x) = kElementBackground;
        dm.at(y, x) = kDefectNonCorrosion;
      }
    }
  }
  s.image = std::move(img);
  s.element_mask = std::move(em);
  s.defect_mask = std::move(dm);
}

inline void flip_sample(Sample& s) {
  const int h = s.image.height, w = s.image.width;
  for (int c = 0; c < 3; ++c) {
    float* plane = s.image.channel(c);
    for (int y = 0; y < h; ++y) {
      std::reverse(plane + static_cast<std::size_t>(y) * w,
                   plane + static_cast<std::size_t>(y + 1) * w);
    }
  }
  for (int y = 0; y < h; ++y) {
    std::reverse(s.element_mask.labels.begin() + static_cast<std::size_t>(y) * w,
                 s.element_mask.labels.begin() + static_cast<std::size_t>(y + 1) * w);
    std::reverse(s.defect_mask.labels.begin() + static_cast<std::size_t>(y) * w,
                 s.defect_mask.labels.begin() + static_cast<std::size_t>(y + 1) * w);
  }
}

inline std::array<float, 5> gaussian_kernel_5(double sigma) {
  std::array<float, 5> k;
  double sum = 0.0;
  for (int i = -2; i <= 2; ++i) {
    const double v = std::exp(-(i * i) / (2.0 * sigma * sigma));
    k[i + 2] = static_cast<float>(v);
    sum += v;
  }
  for (auto& v : k) v = static_cast<float>(v / sum);
  return k;
}

inline FeatureMap<float> blur_5x5(const FeatureMap<float>& in, double sigma) {
  const auto k = gaussian_kernel_5(sigma);
  const int h = in.height, w = in.width;
  FeatureMap<float> tmp(in.channels, h, w), out(in.channels, h, w);
  for (int c = 0; c < in.channels; ++c) {
    const float* src = in.channel(c);
    float* dst = tmp.channel(c);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        float acc = 0.0f;
        for (int i = -2; i <= 2; ++i) {
          const int sx = std::clamp(x + i, 0, w - 1);
          acc += k[i + 2] * src[y * w + sx];
        }
        dst[y * w + x] = acc;
      }
    }
  }
  for (int c = 0; c < in.channels; ++c) {
    const float* src = tmp.channel(c);
    float* dst = out.channel(c);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        float acc = 0.0f;
        for (int i = -2; i <= 2; ++i) {
          const int sy = std::clamp(y + i, 0, h - 1);
          acc += k[i + 2] * src[sy * w + x];
        }
        dst[y * w + x] = acc;
      }
    }
  }
  return out;
}

inline void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v) {
  const float mx = std::max({r, g, b}), mn = std::min({r, g, b});
  v = mx;
  const float d = mx - mn;
  s = mx == 0.0f ? 0.0f : d / mx;
  if (d == 0.0f) {
    h = 0.0f;
  } else if (mx == r) {
    h = (g - b) / d / 6.0f;
  } else if (mx == g) {
    h = (2.0f + (b - r) / d) / 6.0f;
  } else {
    h = (4.0f + (r - g) / d) / 6.0f;
  }
  if (h < 0.0f) h += 1.0f;
}

inline void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b) {
  h = h - std::floor(h);
  const float hh = h * 6.0f;
  const int i = std::min(5, static_cast<int>(hh));
  const float f = hh - i;
  const float p = v * (1.0f - s);
  const float q = v * (1.0f - s * f);
  const float t = v * (1.0f - s * (1.0f - f));
  switch (i) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

}  // namespace detail

/// The five augmentations: random scale, rotation within +/-10 degrees,
/// horizontal flip, intensity noise through a 5x5 Gaussian kernel, and HSV
/// jitter. Geometric transforms hit the image and both masks (nearest
/// resampling for masks); photometric transforms hit the image only.
inline Sample augment(const Sample& sample, std::mt19937_64& rng, const AugmentConfig& cfg = {}) {
  Sample out = sample;
  const int h = sample.image.height, w = sample.image.width;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto fill = detail::mean_color(sample.image);

  if (unit(rng) < cfg.probability) {
    std::uniform_real_distribution<double> d(cfg.scale_min, cfg.scale_max);
    const double factor = d(rng);
    const int sh = std::max(1, static_cast<int>(std::lround(h * factor)));
    const int sw = std::max(1, static_cast<int>(std::lround(w * factor)));
    out.image = detail::center_fit_image(detail::resize_image(out.image, sh, sw), h, w, fill);
    out.element_mask = detail::center_fit_mask(detail::resize_mask(out.element_mask, sh, sw), h,
                                               w, kElementBackground);
    out.defect_mask = detail::center_fit_mask(detail::resize_mask(out.defect_mask, sh, sw), h, w,
                                              kDefectNonCorrosion);
  }
  if (unit(rng) < cfg.probability) {
    std::uniform_real_distribution<double> d(-cfg.rotate_max_deg, cfg.rotate_max_deg);
    detail::rotate_sample(out, d(rng), fill);
  }
  if (unit(rng) < cfg.probability) {
    detail::flip_sample(out);
  }
  if (unit(rng) < cfg.probability) {
    std::uniform_real_distribution<double> d(cfg.blur_sigma_min, cfg.blur_sigma_max);
    const double sigma = d(rng);
    if (cfg.noise_mode == AugmentConfig::NoiseMode::blur) {
      out.image = detail::blur_5x5(out.image, sigma);
    } else {
      // Additive reading: zero-mean intensity noise smoothed by the kernel.
      FeatureMap<float> noise(1, h, w);
      std::normal_distribution<double> n(0.0, cfg.additive_sigma);
      for (auto& v : noise.values) v = static_cast<float>(n(rng));
      noise = detail::blur_5x5(noise, sigma);
      for (int c = 0; c < 3; ++c) {
        float* plane = out.image.channel(c);
        for (std::size_t i = 0; i < noise.values.size(); ++i) {
          plane[i] = std::clamp(plane[i] + noise.values[i], 0.0f, 1.0f);
        }
      }
    }
  }
  if (unit(rng) < cfg.probability) {
    std::uniform_real_distribution<double> dh(-cfg.hue_shift_max, cfg.hue_shift_max);
    std::uniform_real_distribution<double> dsv(cfg.sv_min, cfg.sv_max);
    const float hue_shift = static_cast<float>(dh(rng));
    const float s_mul = static_cast<float>(dsv(rng));
    const float v_mul = static_cast<float>(dsv(rng));
    float* r_plane = out.image.channel(0);
    float* g_plane = out.image.channel(1);
    float* b_plane = out.image.channel(2);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (std::size_t i = 0; i < plane; ++i) {
      float hh, ss, vv;
      detail::rgb_to_hsv(r_plane[i], g_plane[i], b_plane[i], hh, ss, vv);
      hh += hue_shift;
      ss = std::clamp(ss * s_mul, 0.0f, 1.0f);
      vv = std::clamp(vv * v_mul, 0.0f, 1.0f);
      detail::hsv_to_rgb(hh, ss, vv, r_plane[i], g_plane[i], b_plane[i]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic scene generator

struct FrequencyBand {
  double lo = 0.0, hi = 1.0;
};

struct SynthConfig {
  // Shape extents as fractions of the canvas.
  double deck_min = 0.10, deck_max = 0.18;
  double girder_min = 0.14, girder_max = 0.24;
  double substructure_min = 0.15, substructure_max = 0.28;
  double beam_width_min = 0.05, beam_width_max = 0.09;
  int beams_min = 1, beams_max = 3;
  double bracing_thickness = 0.04;
  double bearing_h_min = 0.05, bearing_h_max = 0.09;
  double bearing_w_min = 0.06, bearing_w_max = 0.12;
  int bearings_min = 1, bearings_max = 2;
  int blobs_min = 1, blobs_max = 4;
  double blob_radius_min = 0.05, blob_radius_max = 0.14;

  // Aggregate per-class pixel-share bands the generator is expected to hit
  // over a hundred or more samples; order follows the element class list,
  // then corrosion.
  std::array<FrequencyBand, 7> element_bands = {{
      {0.002, 0.05},  // Bearing
      {0.005, 0.10},  // Bracing
      {0.06, 0.22},   // Deck
      {0.01, 0.16},   // Floor beam
      {0.10, 0.28},   // Girder
      {0.10, 0.30},   // Substructure
      {0.15, 0.55},   // Background
  }};
  FrequencyBand corrosion_band = {0.01, 0.20};
};

namespace detail {

inline void fill_rect(ClassMask& mask, int y0, int y1, int x0, int x1, std::uint8_t cls) {
  y0 = std::max(0, y0);
  x0 = std::max(0, x0);
  y1 = std::min(mask.height, y1);
  x1 = std::min(mask.width, x1);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) mask.at(y, x) = cls;
  }
}

// Diagonal stroke between two points with the given half-thickness.
inline void stroke_line(ClassMask& mask, double x0, double y0, double x1, double y1,
                        double half_thickness, std::uint8_t cls) {
  const double dx = x1 - x0, dy = y1 - y0;
  const double len2 = dx * dx + dy * dy;
  const int ylo = std::max(0, static_cast<int>(std::floor(std::min(y0, y1) - half_thickness)));
  const int yhi = std::min(mask.height - 1,
                           static_cast<int>(std::ceil(std::max(y0, y1) + half_thickness)));
  const int xlo = std::max(0, static_cast<int>(std::floor(std::min(x0, x1) - half_thickness)));
  const int xhi =
      std::min(mask.width - 1, static_cast<int>(std::ceil(std::max(x0, x1) + half_thickness)));
  for (int y = ylo; y <= yhi; ++y) {
    for (int x = xlo; x <= xhi; ++x) {
      double t = len2 == 0.0 ? 0.0 : ((x - x0) * dx + (y - y0) * dy) / len2;
      t = std::clamp(t, 0.0, 1.0);
      const double px = x0 + t * dx, py = y0 + t * dy;
      const double dist2 = (x - px) * (x - px) + (y - py) * (y - py);
      if (dist2 <= half_thickness * half_thickness) mask.at(y, x) = cls;
    }
  }
}

inline const std::array<std::array<float, 3>, 7>& element_palette() {
  static const std::array<std::array<float, 3>, 7> palette = {{
      {0.85f, 0.30f, 0.85f},  // Bearing
      {0.95f, 0.85f, 0.25f},  // Bracing
      {0.55f, 0.57f, 0.60f},  // Deck
      {0.20f, 0.75f, 0.45f},  // Floor beam
      {0.30f, 0.40f, 0.85f},  // Girder
      {0.60f, 0.45f, 0.30f},  // Substructure
      {0.53f, 0.73f, 0.92f},  // Background
  }};
  return palette;
}

}  // namespace detail

/// Procedurally composed inspection scenes with exact ground truth. Corrosion
/// is planted only on element pixels, mirroring the spatial coupling the
/// fusion module exists to exploit.
inline std::vector<Sample> synth_generate(int count, int height, int width, std::uint64_t seed,
                                          const SynthConfig& cfg = {}) {
  if (height < 16 || width < 16) throw ConfigError("synth_generate: size must be at least 16x16");
  if (count <= 0) throw ConfigError("synth_generate: count must be positive");

  std::vector<Sample> samples;
  samples.reserve(count);
  for (int index = 0; index < count; ++index) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(index)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    Sample s;
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "%06d", index);
    s.id = idbuf;
    s.element_mask = ClassMask(height, width, kElementBackground);
    s.defect_mask = ClassMask(height, width, kDefectNonCorrosion);
    ClassMask& em = s.element_mask;

    // Substructure band along the bottom, deck along the top, girder under
    // the deck; the remaining mid region hosts beams and bracing.
    const int sub_h = std::max(1, static_cast<int>(std::lround(
                                      uniform(cfg.substructure_min, cfg.substructure_max) * height)));
    detail::fill_rect(em, height - sub_h, height, 0, width, 5);
    const int deck_h = std::max(
        1, static_cast<int>(std::lround(uniform(cfg.deck_min, cfg.deck_max) * height)));
    detail::fill_rect(em, 0, deck_h, 0, width, 2);
    const int girder_h = std::max(
        1, static_cast<int>(std::lround(uniform(cfg.girder_min, cfg.girder_max) * height)));
    detail::fill_rect(em, deck_h, deck_h + girder_h, 0, width, 4);

    const int mid_top = deck_h + girder_h;
    const int mid_bottom = height - sub_h;
    if (mid_bottom > mid_top) {
      std::uniform_int_distribution<int> beam_count(cfg.beams_min, cfg.beams_max);
      const int n_beams = beam_count(rng);
      for (int b = 0; b < n_beams; ++b) {
        const int bw = std::max(1, static_cast<int>(std::lround(
                                       uniform(cfg.beam_width_min, cfg.beam_width_max) * width)));
        const int bx = static_cast<int>(uniform(0.0, width - bw));
        detail::fill_rect(em, mid_top, mid_bottom, bx, bx + bw, 3);
      }
      // One X-shaped bracing in the mid region.
      const double box_w = uniform(0.25, 0.45) * width;
      const double bx0 = uniform(0.0, width - box_w);
      const double bx1 = bx0 + box_w;
      const double thick = std::max(1.0, cfg.bracing_thickness * width) / 2.0;
      detail::stroke_line(em, bx0, mid_top, bx1, mid_bottom - 1, thick, 1);
      detail::stroke_line(em, bx1, mid_top, bx0, mid_bottom - 1, thick, 1);
    }

    std::uniform_int_distribution<int> bearing_count(cfg.bearings_min, cfg.bearings_max);
    const int n_bearings = bearing_count(rng);
    for (int b = 0; b < n_bearings; ++b) {
      const int bh = std::max(1, static_cast<int>(std::lround(
                                     uniform(cfg.bearing_h_min, cfg.bearing_h_max) * height)));
      const int bw = std::max(1, static_cast<int>(std::lround(
                                     uniform(cfg.bearing_w_min, cfg.bearing_w_max) * width)));
      const int bx = static_cast<int>(uniform(0.0, width - bw));
      detail::fill_rect(em, height - sub_h - bh, height - sub_h, bx, bx + bw, 0);
    }

    // Corrosion blobs clipped to element pixels.
    std::uniform_int_distribution<int> blob_count(cfg.blobs_min, cfg.blobs_max);
    const int n_blobs = blob_count(rng);
    for (int b = 0; b < n_blobs; ++b) {
      int cx = 0, cy = 0;
      for (int attempt = 0; attempt < 64; ++attempt) {
        cx = static_cast<int>(uniform(0.0, width));
        cy = static_cast<int>(uniform(0.0, height));
        if (em.at(std::min(cy, height - 1), std::min(cx, width - 1)) != kElementBackground) break;
      }
      const double rx = std::max(1.0, uniform(cfg.blob_radius_min, cfg.blob_radius_max) * width);
      const double ry = std::max(1.0, uniform(cfg.blob_radius_min, cfg.blob_radius_max) * height);
      const int ylo = std::max(0, static_cast<int>(cy - ry));
      const int yhi = std::min(height - 1, static_cast<int>(cy + ry));
      const int xlo = std::max(0, static_cast<int>(cx - rx));
      const int xhi = std::min(width - 1, static_cast<int>(cx + rx));
      for (int y = ylo; y <= yhi; ++y) {
        for (int x = xlo; x <= xhi; ++x) {
          const double ny = (y - cy) / ry, nx = (x - cx) / rx;
          if (nx * nx + ny * ny <= 1.0 && em.at(y, x) != kElementBackground) {
            s.defect_mask.at(y, x) = kDefectCorrosion;
          }
        }
      }
    }

    // Render: class palette, rust tint on corrosion, mild noise.
    s.image = FeatureMap<float>(3, height, width);
    const auto& palette = detail::element_palette();
    const float brightness = static_cast<float>(uniform(0.9, 1.1));
    const std::array<float, 3> rust = {0.62f, 0.28f, 0.10f};
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const auto& base = palette[em.at(y, x)];
        const bool corroded = s.defect_mask.at(y, x) == kDefectCorrosion;
        for (int c = 0; c < 3; ++c) {
          float v = base[c];
          if (corroded) v = 0.25f * v + 0.75f * rust[c];
          v = v * brightness + static_cast<float>(uniform(-0.04, 0.04));
          s.image.at(c, y, x) = std::clamp(v, 0.0f, 1.0f);
        }
      }
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace mtseg
