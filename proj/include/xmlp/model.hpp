#pragma once

#include <string>
#include <vector>

#include "xmlp/layer.hpp"

namespace xmlp {

// VGG-16's convolutional channel schedule; the paper's 13 X-MLP layers
// follow it, halving the spatial extents wherever the channel count doubles,
// floored at 8x8.
inline std::vector<int> vgg16_channel_schedule() {
  return {64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512};
}

constexpr int kStandardLayerCount = 13;
constexpr int kSpatialFloor = 8;

struct ModelSpec {
  LayerVariant variant = LayerVariant::basic;
  int c0 = 3, h0 = 32, w0 = 32;
  int num_classes = 10;
  std::vector<int> channels = vgg16_channel_schedule();
  double width_mult = 1.0;  // already applied to `channels`; kept for provenance
  int expansion = 4;
  float bn_momentum = 0.1f;
  float bn_eps = 1e-5f;

  void validate() const {
    if (c0 < 1 || h0 < 1 || w0 < 1)
      throw config_error("ModelSpec input extents must be >= 1");
    if (num_classes < 2) throw config_error("ModelSpec needs >= 2 classes");
    if (channels.empty()) throw config_error("ModelSpec channel schedule is empty");
    if (expansion < 1) throw config_error("ModelSpec expansion must be >= 1");
    for (size_t i = 0; i < channels.size(); ++i) {
      if (channels[i] < 1)
        throw config_error("ModelSpec channel extents must be >= 1");
      if (i > 0 && channels[i] < channels[i - 1])
        throw config_error("ModelSpec channel schedule must be non-decreasing");
    }
  }
};

// The paper's standard 13-layer model, optionally width-scaled (channels
// multiplied and rounded, minimum 1).
inline ModelSpec make_standard_spec(LayerVariant variant, int c0, int h0, int w0,
                                    int num_classes, double width_mult = 1.0,
                                    int expansion = 4) {
  ModelSpec s;
  s.variant = variant;
  s.c0 = c0;
  s.h0 = h0;
  s.w0 = w0;
  s.num_classes = num_classes;
  s.width_mult = width_mult;
  s.expansion = expansion;
  s.channels = vgg16_channel_schedule();
  for (auto& c : s.channels) {
    c = static_cast<int>(c * width_mult + 0.5);
    if (c < 1) c = 1;
  }
  s.validate();
  if (s.channels.size() != kStandardLayerCount)
    throw config_error("standard model must have 13 layers");
  return s;
}

// Per-layer shape schedule: spatial extents halve exactly at the indices
// where the channel count doubles, each dimension independently floored so
// it never drops below 8 (inputs already at or below 8 are never reduced).
inline std::vector<LayerSpec> layer_schedule(const ModelSpec& spec) {
  spec.validate();
  std::vector<LayerSpec> out;
  int c = spec.c0, h = spec.h0, w = spec.w0;
  for (size_t i = 0; i < spec.channels.size(); ++i) {
    const bool doubled = i > 0 && spec.channels[i] == 2 * spec.channels[i - 1];
    LayerSpec ls;
    ls.variant = spec.variant;
    ls.expansion = spec.expansion;
    ls.c_in = c;
    ls.c_out = spec.channels[i];
    ls.h_in = h;
    ls.h_out = (doubled && h / 2 >= kSpatialFloor) ? h / 2 : h;
    ls.w_in = w;
    ls.w_out = (doubled && w / 2 >= kSpatialFloor) ? w / 2 : w;
    out.push_back(ls);
    c = ls.c_out;
    h = ls.h_out;
    w = ls.w_out;
  }
  return out;
}

template <class T>
struct ModelT {
  ModelSpec spec;
  std::vector<LayerT<T>> layers;
  DenseWeightT<T> classifier;  // c_final x num_classes
  std::vector<T> classifier_bias;
  std::vector<T> classifier_bias_grad;
  Mode mode = Mode::train;

  // forward caches
  Tensor4T<T> cached_features;
  MatrixT<T> cached_pooled;
  bool has_cache = false;

  int final_channels() const { return layers.back().spec.c_out; }
  int final_h() const { return layers.back().spec.h_out; }
  int final_w() const { return layers.back().spec.w_out; }

  void set_mode(Mode m) { mode = m; }

  MatrixT<T> forward(const Tensor4T<T>& x) {
    if (x.c != spec.c0 || x.h != spec.h0 || x.w != spec.w0)
      throw shape_error("model forward: input dims do not match spec");
    Tensor4T<T> t = x;
    for (auto& layer : layers) t = layer.forward(t, mode);
    auto pooled = global_average_pool(t);
    MatrixT<T> logits(pooled.rows, spec.num_classes);
    gemm<T>(false, false, pooled.rows, classifier.cols, classifier.rows,
            pooled.data.data(), classifier.rows, classifier.values.data(),
            classifier.cols, logits.data.data(), classifier.cols, false);
    for (int i = 0; i < logits.rows; ++i)
      for (int j = 0; j < logits.cols; ++j)
        logits.at(i, j) += classifier_bias[j];
    if (mode == Mode::train) {
      cached_features = std::move(t);
      cached_pooled = std::move(pooled);
      has_cache = true;
    }
    return logits;
  }

  // Reverse pass through classifier, pooling, and layers in reverse order;
  // accumulates into every parameter gradient. Returns grad wrt the input.
  Tensor4T<T> backward(const MatrixT<T>& grad_logits) {
    if (!has_cache)
      throw usage_error("model backward called without a train-mode forward");
    if (grad_logits.rows != cached_pooled.rows ||
        grad_logits.cols != spec.num_classes)
      throw shape_error("model backward: grad_logits dims mismatch");

    // classifier: logits = pooled * W + b
    gemm<T>(true, false, classifier.rows, classifier.cols, grad_logits.rows,
            cached_pooled.data.data(), classifier.rows, grad_logits.data.data(),
            classifier.cols, classifier.grad.data(), classifier.cols, true);
    for (int i = 0; i < grad_logits.rows; ++i)
      for (int j = 0; j < grad_logits.cols; ++j)
        classifier_bias_grad[j] += grad_logits.at(i, j);

    MatrixT<T> grad_pooled(cached_pooled.rows, cached_pooled.cols);
    gemm<T>(false, true, grad_logits.rows, classifier.rows, classifier.cols,
            grad_logits.data.data(), classifier.cols, classifier.values.data(),
            classifier.cols, grad_pooled.data.data(), classifier.rows, false);

    auto g = global_average_pool_backward(grad_pooled, cached_features.h,
                                          cached_features.w);
    for (auto it = layers.rbegin(); it != layers.rend(); ++it)
      g = it->backward(g);
    return g;
  }

  void zero_grad() {
    for (auto& layer : layers) layer.zero_grad();
    classifier.zero_grad();
    std::fill(classifier_bias_grad.begin(), classifier_bias_grad.end(), T(0));
  }

  // Enumeration order: layers front to back (wiring order within each),
  // then classifier weight, then classifier bias.
  std::vector<ParamRefT<T>> enumerate_params() {
    std::vector<ParamRefT<T>> refs;
    for (size_t i = 0; i < layers.size(); ++i)
      layers[i].enumerate(refs, "layer" + std::to_string(i));
    detail::push_dense(refs, classifier, "classifier.weight");
    refs.push_back({"classifier.bias", ParamKind::bias, classifier_bias.data(),
                    classifier_bias_grad.data(), classifier_bias.size()});
    return refs;
  }

  size_t param_count() {
    size_t total = 0;
    for (const auto& r : enumerate_params()) total += r.count;
    return total;
  }

  std::vector<BatchNormStateT<T>*> collect_bn() {
    std::vector<BatchNormStateT<T>*> out;
    for (auto& layer : layers) layer.collect_bn(out);
    return out;
  }
};

template <class T>
ModelT<T> build_model_t(const ModelSpec& spec, uint64_t seed) {
  ModelT<T> m;
  m.spec = spec;
  const auto schedule = layer_schedule(spec);
  Rng rng(seed);
  for (const auto& ls : schedule)
    m.layers.emplace_back(ls, static_cast<T>(spec.bn_momentum),
                          static_cast<T>(spec.bn_eps));
  for (auto& layer : m.layers) layer.init(rng);
  m.classifier = DenseWeightT<T>(m.final_channels(), spec.num_classes);
  xavier_init(m.classifier, rng);
  m.classifier_bias.assign(spec.num_classes, T(0));
  m.classifier_bias_grad.assign(spec.num_classes, T(0));
  return m;
}

using Model = ModelT<float>;

inline Model build_model(const ModelSpec& spec, uint64_t seed) {
  return build_model_t<float>(spec, seed);
}

}  // namespace xmlp
