#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mtseg/errors.hpp"
#include "mtseg/feature_map.hpp"
#include "mtseg/layer_params.hpp"
#include "mtseg/nn_ops.hpp"

namespace mtseg {

enum class TaskId { element, defect };

inline const char* task_name(TaskId id) { return id == TaskId::element ? "element" : "defect"; }

/// One segmentation task: identity plus its ordered class set.
struct TaskSpec {
  TaskId id = TaskId::element;
  std::vector<std::string> classes;
  int class_count() const { return static_cast<int>(classes.size()); }
};

inline TaskSpec element_task() {
  return {TaskId::element,
          {"Bearing", "Bracing", "Deck", "Floor beam", "Girder", "Substructure", "Background"}};
}

inline TaskSpec defect_task() { return {TaskId::defect, {"Corrosion", "Non-corrosion"}}; }

inline TaskSpec task_by_id(TaskId id) {
  return id == TaskId::element ? element_task() : defect_task();
}

// Fixed class indices the dataset and assessment code rely on.
inline constexpr int kElementBackground = 6;
inline constexpr int kDefectCorrosion = 0;
inline constexpr int kDefectNonCorrosion = 1;

inline constexpr double kBnEpsilon = 1e-5;

struct ModelConfig {
  int input_channels = 3;
  int input_height = 64;
  int input_width = 64;
  int encoder_hidden1 = 16;
  int encoder_hidden2 = 32;
  int encoder_out_channels = 64;
  int embedding_height = 16;
  int embedding_width = 16;
  int relearn_channels = 32;
  bool use_relearning = true;
  bool use_fusion = true;
  std::vector<TaskSpec> tasks = {element_task(), defect_task()};

  static ModelConfig desk_scale() { return ModelConfig{}; }

  static ModelConfig paper_scale() {
    ModelConfig c;
    c.input_height = c.input_width = 520;
    c.encoder_out_channels = 720;
    c.embedding_height = c.embedding_width = 120;
    c.relearn_channels = 512;
    return c;
  }

  /// Channel count entering the attention convs and decoders.
  int branch_channels() const { return use_relearning ? relearn_channels : encoder_out_channels; }

  void validate() const {
    if (input_channels <= 0 || input_height <= 0 || input_width <= 0 ||
        encoder_hidden1 <= 0 || encoder_hidden2 <= 0 || encoder_out_channels <= 0 ||
        embedding_height <= 0 || embedding_width <= 0 || relearn_channels <= 0) {
      throw ConfigError("model config dimensions must be positive");
    }
    if (tasks.empty() || tasks.size() > 2) {
      throw ConfigError("model config requires one or two tasks");
    }
    if (tasks.size() == 2 && tasks[0].id == tasks[1].id) {
      throw ConfigError("model config tasks must be distinct");
    }
    if (use_fusion && tasks.size() != 2) {
      throw ConfigError("co-interactive fusion requires exactly two tasks");
    }
    for (const auto& t : tasks) {
      const int expected = t.id == TaskId::element ? 7 : 2;
      if (t.class_count() != expected) {
        throw ConfigError(std::string("task ") + task_name(t.id) + " must have " +
                          std::to_string(expected) + " classes");
      }
    }
  }
};

inline std::string variant_name(const ModelConfig& c) {
  if (c.tasks.size() == 1) return std::string("single-task-") + task_name(c.tasks[0].id);
  if (!c.use_relearning && !c.use_fusion) return "naive-mtl";
  if (c.use_relearning && !c.use_fusion) return "no-fusion";
  if (!c.use_relearning && c.use_fusion) return "no-relearning";
  return "full";
}

template <typename T>
void kaiming_init(ConvParams<T>& p, std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(p.in_channels) * p.kernel_h * p.kernel_w;
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (auto& w : p.weight) w = static_cast<T>(dist(rng));
}

/// Contract for the shared feature extractor: image in, embedding with the
/// configured channel count and spatial size out, gradients accumulated on
/// the way back.
template <typename E, typename T>
concept EncoderModel = requires(E enc, const E cenc, const FeatureMap<T>& img,
                                const FeatureMap<T>& grad, const std::string& prefix) {
  { enc.forward(img, true) } -> std::same_as<FeatureMap<T>>;
  { enc.backward(grad) } -> std::same_as<void>;
  { enc.collect_params(prefix) } -> std::same_as<std::vector<ParamView<T>>>;
  { cenc.layers() } -> std::same_as<std::vector<LayerParams<T>>>;
};

/// Stand-in shared encoder: three conv/BN/ReLU stages (strides 1, 2, 2) and a
/// mean-pool onto the configured embedding grid, so the x4 stride contract
/// holds while arbitrary configured embedding sizes stay reachable.
template <typename T>
class ConvEncoder {
 public:
  ConvEncoder(const ModelConfig& config, std::mt19937_64& rng)
      : in_channels_(config.input_channels),
        in_height_(config.input_height),
        in_width_(config.input_width),
        out_height_(config.embedding_height),
        out_width_(config.embedding_width) {
    conv1_ = make_conv_params<T>(config.encoder_hidden1, config.input_channels, 3, 3);
    bn1_ = make_batch_norm_params<T>(config.encoder_hidden1);
    conv2_ = make_conv_params<T>(config.encoder_hidden2, config.encoder_hidden1, 3, 3);
    bn2_ = make_batch_norm_params<T>(config.encoder_hidden2);
    conv3_ = make_conv_params<T>(config.encoder_out_channels, config.encoder_hidden2, 3, 3);
    bn3_ = make_batch_norm_params<T>(config.encoder_out_channels);
    kaiming_init(conv1_, rng);
    kaiming_init(conv2_, rng);
    kaiming_init(conv3_, rng);
  }

  FeatureMap<T> forward(const FeatureMap<T>& image, bool train_mode) {
    if (image.channels != in_channels_ || image.height != in_height_ ||
        image.width != in_width_) {
      throw ConfigError("encoder input " + image.shape_str() + " does not match configured " +
                        std::to_string(in_channels_) + "x" + std::to_string(in_height_) + "x" +
                        std::to_string(in_width_));
    }
    ++forward_count_;
    const BnMode mode = train_mode ? BnMode::train : BnMode::eval;
    const T eps = static_cast<T>(kBnEpsilon);
    BnCache<T>* c1 = train_mode ? &bn1_cache_ : nullptr;
    BnCache<T>* c2 = train_mode ? &bn2_cache_ : nullptr;
    BnCache<T>* c3 = train_mode ? &bn3_cache_ : nullptr;

    FeatureMap<T> a1 = activation(batch_norm(conv2d(image, conv1_, 1, 1), bn1_, mode, eps, c1),
                                  Activation::relu);
    FeatureMap<T> a2 =
        activation(batch_norm(conv2d(a1, conv2_, 2, 1), bn2_, mode, eps, c2), Activation::relu);
    FeatureMap<T> a3 =
        activation(batch_norm(conv2d(a2, conv3_, 2, 1), bn3_, mode, eps, c3), Activation::relu);
    FeatureMap<T> f = adaptive_avg_pool(a3, out_height_, out_width_);
    if (train_mode) {
      image_ = image;
      a1_ = std::move(a1);
      a2_ = std::move(a2);
      a3_ = std::move(a3);
    }
    return f;
  }

  void backward(const FeatureMap<T>& grad_embedding) {
    FeatureMap<T> g3 = adaptive_avg_pool_backward(grad_embedding, a3_.height, a3_.width);
    g3 = batch_norm_backward(relu_backward(g3, a3_), bn3_cache_, bn3_);
    FeatureMap<T> g2(a2_.channels, a2_.height, a2_.width);
    conv2d_backward(a2_, conv3_, 2, 1, g3, &g2);
    g2 = batch_norm_backward(relu_backward(g2, a2_), bn2_cache_, bn2_);
    FeatureMap<T> g1(a1_.channels, a1_.height, a1_.width);
    conv2d_backward(a1_, conv2_, 2, 1, g2, &g1);
    g1 = batch_norm_backward(relu_backward(g1, a1_), bn1_cache_, bn1_);
    conv2d_backward(image_, conv1_, 1, 1, g1, nullptr);
  }

  std::vector<ParamView<T>> collect_params(const std::string& prefix) {
    std::vector<ParamView<T>> views;
    append_views(views, conv1_, prefix + ".conv1");
    append_views(views, bn1_, prefix + ".bn1");
    append_views(views, conv2_, prefix + ".conv2");
    append_views(views, bn2_, prefix + ".bn2");
    append_views(views, conv3_, prefix + ".conv3");
    append_views(views, bn3_, prefix + ".bn3");
    return views;
  }

  std::vector<LayerParams<T>> layers() const {
    return {conv1_, bn1_, conv2_, bn2_, conv3_, bn3_};
  }

  long long forward_count() const { return forward_count_; }

 private:
  int in_channels_, in_height_, in_width_;
  int out_height_, out_width_;
  ConvParams<T> conv1_, conv2_, conv3_;
  BatchNormParams<T> bn1_, bn2_, bn3_;
  // Train-mode activations for the backward pass; single-writer by contract.
  FeatureMap<T> image_, a1_, a2_, a3_;
  BnCache<T> bn1_cache_, bn2_cache_, bn3_cache_;
  long long forward_count_ = 0;
};

template <typename T>
struct RelearnCache {
  BnCache<T> bn;
  FeatureMap<T> out;
};

/// Task-specific feature relearning: ReLU(BN(conv3x3(f))).
template <typename T>
FeatureMap<T> relearn(const FeatureMap<T>& f, ConvParams<T>& conv, BatchNormParams<T>& bn,
                      BnMode mode, RelearnCache<T>* cache = nullptr) {
  BnCache<T>* bc = cache != nullptr ? &cache->bn : nullptr;
  FeatureMap<T> out = activation(
      batch_norm(conv2d(f, conv, 1, 1), bn, mode, static_cast<T>(kBnEpsilon), bc),
      Activation::relu);
  if (cache != nullptr) cache->out = out;
  return out;
}

template <typename T>
FeatureMap<T> relearn_backward(const FeatureMap<T>& grad_out, const FeatureMap<T>& f,
                               ConvParams<T>& conv, BatchNormParams<T>& bn,
                               const RelearnCache<T>& cache) {
  FeatureMap<T> g = batch_norm_backward(relu_backward(grad_out, cache.out), cache.bn, bn);
  FeatureMap<T> grad_f(f.channels, f.height, f.width);
  conv2d_backward(f, conv, 1, 1, g, &grad_f);
  return grad_f;
}

/// Spatial attention mask: sigmoid(conv3x3(f_i)), values strictly in (0,1).
template <typename T>
FeatureMap<T> attention_mask(const FeatureMap<T>& f_i, const ConvParams<T>& conv) {
  return activation(conv2d(f_i, conv, 1, 1), Activation::sigmoid);
}

/// Adds the attention-gated gradient paths of one mask to conv/input grads.
template <typename T>
void attention_mask_backward(const FeatureMap<T>& grad_mask, const FeatureMap<T>& mask,
                             const FeatureMap<T>& f_i, ConvParams<T>& conv,
                             FeatureMap<T>* grad_f_i) {
  FeatureMap<T> g_pre = sigmoid_backward(grad_mask, mask);
  conv2d_backward(f_i, conv, 1, 1, g_pre, grad_f_i);
}

/// Additive cross-task fusion: each task's features are enriched with the
/// other task's features gated by this task's attention mask.
template <typename T>
std::pair<FeatureMap<T>, FeatureMap<T>> co_interactive_fuse(const FeatureMap<T>& f_e,
                                                            const FeatureMap<T>& f_d,
                                                            const FeatureMap<T>& s_e,
                                                            const FeatureMap<T>& s_d) {
  require_same_shape(f_e, f_d, "co_interactive_fuse");
  require_same_shape(f_e, s_e, "co_interactive_fuse");
  require_same_shape(f_e, s_d, "co_interactive_fuse");
  FeatureMap<T> out_e(f_e.channels, f_e.height, f_e.width);
  FeatureMap<T> out_d(f_e.channels, f_e.height, f_e.width);
  for (std::size_t i = 0; i < f_e.size(); ++i) {
    out_e.values[i] = f_e.values[i] + s_e.values[i] * f_d.values[i];
    out_d.values[i] = f_d.values[i] + s_d.values[i] * f_e.values[i];
  }
  return {std::move(out_e), std::move(out_d)};
}

template <typename T>
struct DecodeCache {
  BnCache<T> bn;
  FeatureMap<T> hact;
  FeatureMap<T> probs;
  int logits_height = 0;
  int logits_width = 0;
};

/// Reconstruction decoder: 1x1 conv, BN, ReLU, 1x1 class conv, bilinear
/// upsample to the output size, then per-pixel channel softmax.
template <typename T>
FeatureMap<T> decode(const FeatureMap<T>& f_star, const TaskSpec& task, ConvParams<T>& conv1,
                     BatchNormParams<T>& bn, ConvParams<T>& conv2, int out_height, int out_width,
                     BnMode mode, DecodeCache<T>* cache = nullptr) {
  if (conv2.out_channels != task.class_count()) {
    throw ConfigError(std::string("decode: head emits ") + std::to_string(conv2.out_channels) +
                      " channels but task " + task_name(task.id) + " has " +
                      std::to_string(task.class_count()) + " classes");
  }
  BnCache<T>* bc = cache != nullptr ? &cache->bn : nullptr;
  FeatureMap<T> hact = activation(
      batch_norm(conv2d(f_star, conv1, 1, 0), bn, mode, static_cast<T>(kBnEpsilon), bc),
      Activation::relu);
  FeatureMap<T> logits = conv2d(hact, conv2, 1, 0);
  FeatureMap<T> probs = activation(bilinear_upsample(logits, out_height, out_width),
                                   Activation::channel_softmax);
  if (cache != nullptr) {
    cache->hact = std::move(hact);
    cache->probs = probs;
    cache->logits_height = logits.height;
    cache->logits_width = logits.width;
  }
  return probs;
}

template <typename T>
FeatureMap<T> decode_backward(const FeatureMap<T>& grad_probs, const FeatureMap<T>& f_star,
                              ConvParams<T>& conv1, BatchNormParams<T>& bn, ConvParams<T>& conv2,
                              const DecodeCache<T>& cache) {
  FeatureMap<T> g = channel_softmax_backward(grad_probs, cache.probs);
  g = bilinear_upsample_backward(g, cache.logits_height, cache.logits_width);
  FeatureMap<T> g_hact(cache.hact.channels, cache.hact.height, cache.hact.width);
  conv2d_backward(cache.hact, conv2, 1, 0, g, &g_hact);
  g = batch_norm_backward(relu_backward(g_hact, cache.hact), cache.bn, bn);
  FeatureMap<T> grad_f_star(f_star.channels, f_star.height, f_star.width);
  conv2d_backward(f_star, conv1, 1, 0, g, &grad_f_star);
  return grad_f_star;
}

/// The full multi-task graph: shared encoder, optional per-task relearning
/// subnets, optional co-interactive attention fusion, per-task decoders.
template <typename T, typename Enc = ConvEncoder<T>>
  requires EncoderModel<Enc, T>
class MultiTaskModel {
 public:
  struct Branch {
    std::optional<ConvParams<T>> relearn_conv;
    std::optional<BatchNormParams<T>> relearn_bn;
    std::optional<ConvParams<T>> attention_conv;
    ConvParams<T> head_conv1;
    BatchNormParams<T> head_bn;
    ConvParams<T> head_conv2;
  };

  explicit MultiTaskModel(const ModelConfig& config, std::uint64_t seed = 0)
      : config_(config), rng_(seed ^ 0x6d74736567ULL), encoder_(config, rng_) {
    config_.validate();
    const int bc = config_.branch_channels();
    for (const auto& task : config_.tasks) {
      Branch b;
      if (config_.use_relearning) {
        b.relearn_conv =
            make_conv_params<T>(config_.relearn_channels, config_.encoder_out_channels, 3, 3);
        b.relearn_bn = make_batch_norm_params<T>(config_.relearn_channels);
        kaiming_init(*b.relearn_conv, rng_);
      }
      if (config_.use_fusion) {
        b.attention_conv = make_conv_params<T>(bc, bc, 3, 3);
        kaiming_init(*b.attention_conv, rng_);
      }
      b.head_conv1 = make_conv_params<T>(config_.relearn_channels, bc, 1, 1);
      b.head_bn = make_batch_norm_params<T>(config_.relearn_channels);
      b.head_conv2 = make_conv_params<T>(task.class_count(), config_.relearn_channels, 1, 1);
      kaiming_init(b.head_conv1, rng_);
      kaiming_init(b.head_conv2, rng_);
      branches_.push_back(std::move(b));
    }
  }

  /// Per-task class probability maps, aligned with config().tasks.
  std::vector<FeatureMap<T>> forward(const FeatureMap<T>& image, BnMode mode) {
    const bool train = mode == BnMode::train;
    FeatureMap<T> f = encoder_.forward(image, train);

    const std::size_t n = branches_.size();
    std::vector<FeatureMap<T>> task_feats(n);
    std::vector<RelearnCache<T>> relearn_caches(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (config_.use_relearning) {
        task_feats[i] = relearn(f, *branches_[i].relearn_conv, *branches_[i].relearn_bn, mode,
                                train ? &relearn_caches[i] : nullptr);
      } else {
        task_feats[i] = f;
      }
    }

    std::vector<FeatureMap<T>> masks(n);
    std::vector<FeatureMap<T>> fused(n);
    if (config_.use_fusion) {
      for (std::size_t i = 0; i < n; ++i) {
        masks[i] = attention_mask(task_feats[i], *branches_[i].attention_conv);
      }
      auto pair = co_interactive_fuse(task_feats[0], task_feats[1], masks[0], masks[1]);
      fused[0] = std::move(pair.first);
      fused[1] = std::move(pair.second);
    } else {
      fused = task_feats;
    }

    std::vector<FeatureMap<T>> probs(n);
    std::vector<DecodeCache<T>> decode_caches(n);
    for (std::size_t i = 0; i < n; ++i) {
      probs[i] = decode(fused[i], config_.tasks[i], branches_[i].head_conv1, branches_[i].head_bn,
                        branches_[i].head_conv2, config_.input_height, config_.input_width, mode,
                        train ? &decode_caches[i] : nullptr);
    }

    if (train) {
      cache_.f = std::move(f);
      cache_.task_feats = std::move(task_feats);
      cache_.relearn = std::move(relearn_caches);
      cache_.masks = std::move(masks);
      cache_.fused = std::move(fused);
      cache_.decode = std::move(decode_caches);
    }
    return probs;
  }

  /// Consumes the cache of the last train-mode forward; accumulates into the
  /// parameter grad buffers.
  void backward(const std::vector<FeatureMap<T>>& grad_probs) {
    const std::size_t n = branches_.size();
    if (grad_probs.size() != n) throw ShapeError("backward: one gradient map per task required");

    std::vector<FeatureMap<T>> grad_fused(n);
    for (std::size_t i = 0; i < n; ++i) {
      grad_fused[i] =
          decode_backward(grad_probs[i], cache_.fused[i], branches_[i].head_conv1,
                          branches_[i].head_bn, branches_[i].head_conv2, cache_.decode[i]);
    }

    std::vector<FeatureMap<T>> grad_feats(n);
    if (config_.use_fusion) {
      const auto& f_e = cache_.task_feats[0];
      const auto& f_d = cache_.task_feats[1];
      const auto& s_e = cache_.masks[0];
      const auto& s_d = cache_.masks[1];
      grad_feats[0] = grad_fused[0];
      grad_feats[1] = grad_fused[1];
      FeatureMap<T> grad_s_e(f_e.channels, f_e.height, f_e.width);
      FeatureMap<T> grad_s_d(f_e.channels, f_e.height, f_e.width);
      for (std::size_t i = 0; i < f_e.size(); ++i) {
        grad_s_e.values[i] = grad_fused[0].values[i] * f_d.values[i];
        grad_s_d.values[i] = grad_fused[1].values[i] * f_e.values[i];
        grad_feats[1].values[i] += grad_fused[0].values[i] * s_e.values[i];
        grad_feats[0].values[i] += grad_fused[1].values[i] * s_d.values[i];
      }
      attention_mask_backward(grad_s_e, s_e, f_e, *branches_[0].attention_conv, &grad_feats[0]);
      attention_mask_backward(grad_s_d, s_d, f_d, *branches_[1].attention_conv, &grad_feats[1]);
    } else {
      grad_feats = std::move(grad_fused);
    }

    FeatureMap<T> grad_f(cache_.f.channels, cache_.f.height, cache_.f.width);
    for (std::size_t i = 0; i < n; ++i) {
      if (config_.use_relearning) {
        FeatureMap<T> g = relearn_backward(grad_feats[i], cache_.f, *branches_[i].relearn_conv,
                                           *branches_[i].relearn_bn, cache_.relearn[i]);
        for (std::size_t k = 0; k < grad_f.size(); ++k) grad_f.values[k] += g.values[k];
      } else {
        for (std::size_t k = 0; k < grad_f.size(); ++k) {
          grad_f.values[k] += grad_feats[i].values[k];
        }
      }
    }
    encoder_.backward(grad_f);
  }

  std::vector<ParamView<T>> collect_params() {
    std::vector<ParamView<T>> views = encoder_.collect_params("encoder");
    for (std::size_t i = 0; i < branches_.size(); ++i) {
      const std::string t = task_name(config_.tasks[i].id);
      auto& b = branches_[i];
      if (b.relearn_conv) append_views(views, *b.relearn_conv, t + ".relearn.conv");
      if (b.relearn_bn) append_views(views, *b.relearn_bn, t + ".relearn.bn");
      if (b.attention_conv) append_views(views, *b.attention_conv, t + ".attention.conv");
      append_views(views, b.head_conv1, t + ".head.conv1");
      append_views(views, b.head_bn, t + ".head.bn");
      append_views(views, b.head_conv2, t + ".head.conv2");
    }
    return views;
  }

  void zero_grads() {
    auto views = collect_params();
    mtseg::zero_grads(views);
  }

  std::vector<LayerParams<T>> layers() const {
    std::vector<LayerParams<T>> out = encoder_.layers();
    for (const auto& b : branches_) {
      if (b.relearn_conv) out.push_back(*b.relearn_conv);
      if (b.relearn_bn) out.push_back(*b.relearn_bn);
      if (b.attention_conv) out.push_back(*b.attention_conv);
      out.push_back(b.head_conv1);
      out.push_back(b.head_bn);
      out.push_back(b.head_conv2);
    }
    return out;
  }

  const ModelConfig& config() const { return config_; }
  Enc& encoder() { return encoder_; }
  std::vector<Branch>& branches() { return branches_; }

 private:
  struct ForwardCache {
    FeatureMap<T> f;
    std::vector<FeatureMap<T>> task_feats;
    std::vector<RelearnCache<T>> relearn;
    std::vector<FeatureMap<T>> masks;
    std::vector<FeatureMap<T>> fused;
    std::vector<DecodeCache<T>> decode;
  };

  ModelConfig config_;
  std::mt19937_64 rng_;
  Enc encoder_;
  std::vector<Branch> branches_;
  ForwardCache cache_;
};

// ---------------------------------------------------------------------------
// Checkpoint serialization: manifest.txt plus one raw float32 little-endian
// binary file per parameter array. Bit-exact round trip for float models.

namespace detail {

inline std::string shape_to_string(const std::vector<int>& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) s += "x";
    s += std::to_string(shape[i]);
  }
  return s;
}

template <typename T>
void write_array_file(const std::filesystem::path& path, const T* data, std::size_t count) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t i = 0; i < count; ++i) {
    const float v = static_cast<float>(data[i]);
    out.write(reinterpret_cast<const char*>(&v), sizeof(float));
  }
}

template <typename T>
void read_array_file(const std::filesystem::path& path, T* data, std::size_t count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing checkpoint array file " + path.string());
  for (std::size_t i = 0; i < count; ++i) {
    float v = 0.0f;
    in.read(reinterpret_cast<char*>(&v), sizeof(float));
    if (!in) throw DataError("short read in " + path.string());
    data[i] = static_cast<T>(v);
  }
  char extra;
  if (in.read(&extra, 1)) throw DataError("trailing bytes in " + path.string());
}

}  // namespace detail

inline std::string tasks_to_string(const std::vector<TaskSpec>& tasks) {
  std::string s;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (i > 0) s += ",";
    s += task_name(tasks[i].id);
  }
  return s;
}

inline std::vector<TaskSpec> tasks_from_string(const std::string& s) {
  std::vector<TaskSpec> tasks;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "element") {
      tasks.push_back(element_task());
    } else if (item == "defect") {
      tasks.push_back(defect_task());
    } else {
      throw ConfigError("unknown task '" + item + "'");
    }
  }
  return tasks;
}

template <typename T, typename Enc>
void save_checkpoint(MultiTaskModel<T, Enc>& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const ModelConfig& c = model.config();
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw DataError("cannot write checkpoint manifest in " + dir.string());
  manifest << "format=mtseg-checkpoint-v1\n";
  manifest << "config.input_channels=" << c.input_channels << "\n";
  manifest << "config.input_height=" << c.input_height << "\n";
  manifest << "config.input_width=" << c.input_width << "\n";
  manifest << "config.encoder_hidden1=" << c.encoder_hidden1 << "\n";
  manifest << "config.encoder_hidden2=" << c.encoder_hidden2 << "\n";
  manifest << "config.encoder_out_channels=" << c.encoder_out_channels << "\n";
  manifest << "config.embedding_height=" << c.embedding_height << "\n";
  manifest << "config.embedding_width=" << c.embedding_width << "\n";
  manifest << "config.relearn_channels=" << c.relearn_channels << "\n";
  manifest << "config.use_relearning=" << (c.use_relearning ? 1 : 0) << "\n";
  manifest << "config.use_fusion=" << (c.use_fusion ? 1 : 0) << "\n";
  manifest << "config.tasks=" << tasks_to_string(c.tasks) << "\n";
  for (const auto& view : model.collect_params()) {
    manifest << "array." << view.name << "=" << detail::shape_to_string(view.shape) << "\n";
    detail::write_array_file(dir / (view.name + ".bin"), view.value, view.count);
  }
}

inline std::map<std::string, std::string> read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw DataError("missing checkpoint manifest in " + dir.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("malformed manifest line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

inline ModelConfig config_from_manifest(const std::map<std::string, std::string>& kv) {
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError("checkpoint manifest missing key " + key);
    return it->second;
  };
  ModelConfig c;
  c.input_channels = std::stoi(get("config.input_channels"));
  c.input_height = std::stoi(get("config.input_height"));
  c.input_width = std::stoi(get("config.input_width"));
  c.encoder_hidden1 = std::stoi(get("config.encoder_hidden1"));
  c.encoder_hidden2 = std::stoi(get("config.encoder_hidden2"));
  c.encoder_out_channels = std::stoi(get("config.encoder_out_channels"));
  c.embedding_height = std::stoi(get("config.embedding_height"));
  c.embedding_width = std::stoi(get("config.embedding_width"));
  c.relearn_channels = std::stoi(get("config.relearn_channels"));
  c.use_relearning = get("config.use_relearning") == "1";
  c.use_fusion = get("config.use_fusion") == "1";
  c.tasks = tasks_from_string(get("config.tasks"));
  return c;
}

template <typename T = float, typename Enc = ConvEncoder<T>>
MultiTaskModel<T, Enc> load_checkpoint(const std::filesystem::path& dir) {
  const auto kv = read_manifest(dir);
  MultiTaskModel<T, Enc> model(config_from_manifest(kv), 0);
  for (const auto& view : model.collect_params()) {
    const auto it = kv.find("array." + view.name);
    if (it == kv.end()) throw DataError("checkpoint manifest missing array " + view.name);
    detail::read_array_file(dir / (view.name + ".bin"), view.value, view.count);
  }
  return model;
}

}  // namespace mtseg
